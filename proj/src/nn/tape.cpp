#include "reform/nn/tape.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "reform/common/error.hpp"
#include "reform/nn/kernels.hpp"

namespace reform::nn {

// ---- tape ------------------------------------------------------------------

Var Tape::record(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Parameter& p, bool trainable) {
  Node n;
  n.external = &p.value;
  n.requires_grad = trainable;
  if (trainable) n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ContractError("stale or invalid tape handle");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.owned;
}

const Tensor& Tape::value_of(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(value(v).shape(), 0.0);
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Tape::grad_of(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value_of(id).shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  const Tensor& lv = value(loss);
  if (lv.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(lv.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_of(loss.id)[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

void Tape::clear() { nodes_.clear(); }

// ---- helpers ---------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_column(const Tensor& col, std::size_t rows, const char* op) {
  if (col.cols() != 1 || col.rows() != rows) {
    throw DimensionError(std::string(op) + ": expected a " + std::to_string(rows) +
                         "x1 column, got " + shape_string(col.shape()));
  }
}

Tensor like(const Tensor& x) { return Tensor::matrix(x.rows(), x.cols()); }

template <class Fwd, class Deriv>
Var unary(Tape& t, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = t.value(x);
  Tensor y = like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  const std::uint32_t xi = x.id;
  return t.record(std::move(y), t.needs_grad(xi), [xi, deriv](Tape& tp, std::uint32_t self) {
    const Tensor& xv = tp.value_of(xi);
    const Tensor& yv = tp.value_of(self);
    const Tensor& g = tp.grad_of(self);
    Tensor& dx = tp.grad_of(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

// ---- dense layers ----------------------------------------------------------

Var affine(Tape& t, Var x, Var weight, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(weight);
  const Tensor& bv = t.value(bias);
  const std::size_t rows = xv.rows(), in = xv.cols(), out = wv.cols();
  if (wv.rank() != 2 || wv.rows() != in) {
    throw DimensionError("affine: input width " + std::to_string(in) + " does not match weight " +
                         shape_string(wv.shape()));
  }
  if (bv.size() != out) {
    throw DimensionError("affine: bias " + shape_string(bv.shape()) + " for output width " +
                         std::to_string(out));
  }
  Tensor y = Tensor::matrix(rows, out);
  kernels::affine_forward(xv.data(), wv.data(), bv.data(), y.data(), rows, in, out);
  const bool rg = t.needs_grad(x.id) || t.needs_grad(weight.id) || t.needs_grad(bias.id);
  const std::uint32_t xi = x.id, wi = weight.id, bi = bias.id;
  return t.record(std::move(y), rg, [xi, wi, bi, rows, in, out](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(xi)) {
      kernels::affine_backward_input(g.data(), tp.value_of(wi).data(), tp.grad_of(xi).data(),
                                     rows, in, out);
    }
    if (tp.needs_grad(wi) || tp.needs_grad(bi)) {
      // Both slots are written by the fused kernel; unused ones are scratch.
      Tensor& dw = tp.grad_of(wi);
      Tensor& db = tp.grad_of(bi);
      kernels::affine_backward_params(tp.value_of(xi).data(), g.data(), dw.data(), db.data(),
                                      rows, in, out);
    }
  });
}

Var gelu(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor y = like(xv);
  const std::uint32_t xi = x.id;
  if (!t.needs_grad(xi)) {
    kernels::gelu_forward(xv.data(), y.data());
    return t.record(std::move(y), false, {});
  }
  auto cdf = std::make_shared<std::vector<double>>(xv.size());
  kernels::gelu_forward(xv.data(), y.data(), *cdf);
  return t.record(std::move(y), true, [xi, cdf](Tape& tp, std::uint32_t self) {
    kernels::gelu_backward(tp.value_of(xi).data(), *cdf, tp.grad_of(self).data(),
                           tp.grad_of(xi).data());
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = t.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (t.value(gain).size() != cols || t.value(bias).size() != cols) {
    throw DimensionError("layer_norm: gain/bias width does not match input width " +
                         std::to_string(cols));
  }
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  Tensor y = like(xv);
  // xhat and 1/sigma are kept for the reverse pass.
  auto xhat = std::make_shared<Tensor>(like(xv));
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xv(i, j);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (xv(i, j) - mu) * is;
      (*xhat)(i, j) = h;
      y(i, j) = h * gv[j] + bv[j];
    }
  }
  const bool rg = t.needs_grad(x.id) || t.needs_grad(gain.id) || t.needs_grad(bias.id);
  const std::uint32_t xi = x.id, gi = gain.id, bi = bias.id;
  return t.record(std::move(y), rg,
                  [xi, gi, bi, rows, cols, xhat, inv_std](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& gv = tp.value_of(gi);
    if (tp.needs_grad(gi) || tp.needs_grad(bi)) {
      Tensor& dg = tp.grad_of(gi);
      Tensor& db = tp.grad_of(bi);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          dg[j] += g(i, j) * (*xhat)(i, j);
          db[j] += g(i, j);
        }
      }
    }
    if (tp.needs_grad(xi)) {
      Tensor& dx = tp.grad_of(xi);
      const double n = static_cast<double>(cols);
      for (std::size_t i = 0; i < rows; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double gh = g(i, j) * gv[j];
          s1 += gh;
          s2 += gh * (*xhat)(i, j);
        }
        for (std::size_t j = 0; j < cols; ++j) {
          const double gh = g(i, j) * gv[j];
          dx(i, j) += (*inv_std)[i] * (gh - s1 / n - (*xhat)(i, j) * s2 / n);
        }
      }
    }
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  bool rg = false;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.rows() != rows) {
      throw DimensionError("concat_cols: row count " + std::to_string(v.rows()) + " vs " +
                           std::to_string(rows));
    }
    cols += v.cols();
    rg = rg || t.needs_grad(p.id);
    ids.push_back(p.id);
    widths.push_back(v.cols());
  }
  Tensor y = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Tensor& v = t.value_of(ids[k]);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < widths[k]; ++j) y(i, off + j) = v(i, j);
    }
    off += widths[k];
  }
  return t.record(std::move(y), rg, [ids, widths, rows, cols](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.needs_grad(ids[k])) {
        Tensor& d = tp.grad_of(ids[k]);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) d(i, j) += g(i, off + j);
        }
      }
      off += widths[k];
    }
    (void)cols;
  });
}

Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = t.value(x);
  if (begin + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of width " +
                         std::to_string(xv.cols()));
  }
  const std::size_t rows = xv.rows();
  Tensor y = Tensor::matrix(rows, count);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < count; ++j) y(i, j) = xv(i, begin + j);
  }
  const std::uint32_t xi = x.id;
  return t.record(std::move(y), t.needs_grad(xi),
                  [xi, begin, count, rows](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& d = tp.grad_of(xi);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < count; ++j) d(i, begin + j) += g(i, j);
    }
  });
}

// ---- elementwise -----------------------------------------------------------

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "add");
  Tensor y = like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    for (std::uint32_t id : {ai, bi}) {
      if (!tp.needs_grad(id)) continue;
      Tensor& d = tp.grad_of(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "sub");
  Tensor y = like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs_grad(ai)) {
      Tensor& d = tp.grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& d = tp.grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Tensor y = like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ai);
    const Tensor& bv = tp.value_of(bi);
    if (tp.needs_grad(ai)) {
      Tensor& d = tp.grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& d = tp.grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var div(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "div");
  Tensor y = like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& bv = tp.value_of(bi);
    const Tensor& yv = tp.value_of(self);
    if (tp.needs_grad(ai)) {
      Tensor& d = tp.grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] / bv[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& d = tp.grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i] * yv[i] / bv[i];
    }
  });
}

Var minimum(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "minimum");
  Tensor y = like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] <= bv[i] ? av[i] : bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ai);
    const Tensor& bv = tp.value_of(bi);
    // Ties route the gradient to a.
    if (tp.needs_grad(ai)) {
      Tensor& d = tp.grad_of(ai);
      for (std::size_t i = 0; i < g.size(); ++i) if (av[i] <= bv[i]) d[i] += g[i];
    }
    if (tp.needs_grad(bi)) {
      Tensor& d = tp.grad_of(bi);
      for (std::size_t i = 0; i < g.size(); ++i) if (av[i] > bv[i]) d[i] += g[i];
    }
  });
}

Var scale(Tape& t, Var x, double c) {
  return unary(t, x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Tape& t, Var x, double c) {
  return unary(t, x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var square(Tape& t, Var x) {
  return unary(t, x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sqrt(Tape& t, Var x) {
  return unary(
      t, x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var tanh(Tape& t, Var x) {
  return unary(
      t, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Tape& t, Var x) {
  return unary(t, x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

// ---- row-wise --------------------------------------------------------------

Var mul_col(Tape& t, Var x, Var col) {
  const Tensor& xv = t.value(x);
  const Tensor& cv = t.value(col);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require_column(cv, rows, "mul_col");
  Tensor y = like(xv);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) y(i, j) = xv(i, j) * cv[i];
  }
  const std::uint32_t xi = x.id, ci = col.id;
  return t.record(std::move(y), t.needs_grad(xi) || t.needs_grad(ci),
                  [xi, ci, rows, cols](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value_of(xi);
    const Tensor& cv = tp.value_of(ci);
    if (tp.needs_grad(xi)) {
      Tensor& d = tp.grad_of(xi);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) d(i, j) += g(i, j) * cv[i];
      }
    }
    if (tp.needs_grad(ci)) {
      Tensor& d = tp.grad_of(ci);
      for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < cols; ++j) acc += g(i, j) * xv(i, j);
        d[i] += acc;
      }
    }
  });
}

Var row_dot(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "row_dot");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor y = Tensor::matrix(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += av(i, j) * bv(i, j);
    y[i] = acc;
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi, rows, cols](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value_of(ai);
    const Tensor& bv = tp.value_of(bi);
    if (tp.needs_grad(ai)) {
      Tensor& d = tp.grad_of(ai);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) d(i, j) += g[i] * bv(i, j);
      }
    }
    if (tp.needs_grad(bi)) {
      Tensor& d = tp.grad_of(bi);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) d(i, j) += g[i] * av(i, j);
      }
    }
  });
}

Var row_norm(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor y = Tensor::matrix(rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += xv(i, j) * xv(i, j);
    y[i] = std::sqrt(acc);
  }
  const std::uint32_t xi = x.id;
  return t.record(std::move(y), t.needs_grad(xi), [xi, rows, cols](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value_of(xi);
    const Tensor& yv = tp.value_of(self);
    Tensor& d = tp.grad_of(xi);
    for (std::size_t i = 0; i < rows; ++i) {
      if (yv[i] == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) d(i, j) += g[i] * xv(i, j) / yv[i];
    }
  });
}

Var mean_row_sq_norm(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const std::size_t rows = xv.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * xv[i];
  const std::uint32_t xi = x.id;
  return t.record(Tensor::scalar(acc / static_cast<double>(rows)), t.needs_grad(xi),
                  [xi, rows](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0] * 2.0 / static_cast<double>(rows);
    const Tensor& xv = tp.value_of(xi);
    Tensor& d = tp.grad_of(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) d[i] += g * xv[i];
  });
}

Var sum(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  double acc = 0.0;
  for (double v : xv.data()) acc += v;
  const std::uint32_t xi = x.id;
  return t.record(Tensor::scalar(acc), t.needs_grad(xi), [xi](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0];
    Tensor& d = tp.grad_of(xi);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
  });
}

Var mean(Tape& t, Var x) {
  const double n = static_cast<double>(t.value(x).size());
  return scale(t, sum(t, x), 1.0 / n);
}

Var where_rows(Tape& t, std::vector<std::uint8_t> mask, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_same_shape(av, bv, "where_rows");
  const std::size_t rows = av.rows(), cols = av.cols();
  if (mask.size() != rows) throw DimensionError("where_rows: mask length does not match rows");
  Tensor y = like(av);
  for (std::size_t i = 0; i < rows; ++i) {
    const Tensor& src = mask[i] ? av : bv;
    for (std::size_t j = 0; j < cols; ++j) y(i, j) = src(i, j);
  }
  const std::uint32_t ai = a.id, bi = b.id;
  return t.record(std::move(y), t.needs_grad(ai) || t.needs_grad(bi),
                  [ai, bi, rows, cols, mask = std::move(mask)](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::uint32_t dst = mask[i] ? ai : bi;
      if (!tp.needs_grad(dst)) continue;
      Tensor& d = tp.grad_of(dst);
      for (std::size_t j = 0; j < cols; ++j) d(i, j) += g(i, j);
    }
  });
}

Var stop_gradient(Tape& t, Var x) { return t.constant(t.value(x)); }

}  // namespace reform::nn
