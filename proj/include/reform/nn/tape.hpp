#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "reform/nn/tensor.hpp"

namespace reform::nn {

class Tape;

// Handle to a node on a Tape. Only meaningful together with the tape that
// issued it, and only until that tape is cleared.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const noexcept { return id != UINT32_MAX; }
};

// Reverse-mode tape. Every op appends one node holding its forward value and,
// when any input needs a gradient, a closure that pushes the node's gradient
// to its inputs. Nodes are appended in topological order, so the reverse pass
// is a single backwards sweep. A tape belongs to one thread; clear() it at the
// start of each optimization step.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Var constant(Tensor value);
  // Leaf that receives a gradient but is not bound to a Parameter.
  Var variable(Tensor value);
  // Leaf referring to p.value without copying. With trainable=false the
  // parameter enters as a constant and its grad slot is never touched.
  Var parameter(Parameter& p, bool trainable = true);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() with respect to v; zeros if v was not
  // reached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps backwards; parameter gradients are
  // added into the bound Parameter::grad slots.
  void backward(Var loss);
  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, bool requires_grad, BackwardFn fn);
  const Tensor& value_of(std::uint32_t id) const;
  Tensor& grad_of(std::uint32_t id);
  bool needs_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;

  // deque: appending never moves existing nodes, so value() references
  // stay valid while the tape grows.
  std::deque<Node> nodes_;
};

// ---- ops -------------------------------------------------------------------
// Shapes are B x F matrices unless stated otherwise. "column" means B x 1.

Var affine(Tape& t, Var x, Var weight, Var bias);
Var gelu(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-6);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var minimum(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);
Var add_scalar(Tape& t, Var x, double c);
Var square(Tape& t, Var x);
Var sqrt(Tape& t, Var x);
Var tanh(Tape& t, Var x);
Var exp(Tape& t, Var x);

// x (B x d) times a column (B x 1), row by row.
Var mul_col(Tape& t, Var x, Var col);
// Row-wise inner product, B x 1.
Var row_dot(Tape& t, Var a, Var b);
// Row-wise Euclidean norm, B x 1. The gradient at a zero row is zero.
Var row_norm(Tape& t, Var x);
// Mean over rows of the per-row sum of squares, i.e. E ||x_i||^2, 1 x 1.
Var mean_row_sq_norm(Tape& t, Var x);

Var sum(Tape& t, Var x);
Var mean(Tape& t, Var x);

// Row-wise select: row i comes from a when mask[i] != 0, else from b. The
// mask is data, not a differentiable input.
Var where_rows(Tape& t, std::vector<std::uint8_t> mask, Var a, Var b);

// Identity forward, no gradient.
Var stop_gradient(Tape& t, Var x);

}  // namespace reform::nn
