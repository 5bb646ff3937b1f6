#pragma once

#include <string>
#include <vector>

#include "reform/common/rng.hpp"
#include "reform/nn/tape.hpp"
#include "reform/nn/tensor.hpp"

namespace reform::nn {

struct MlpSpec {
  std::size_t input = 0;
  std::vector<std::size_t> hidden{512, 512, 512, 512};
  std::size_t output = 0;
  bool layer_norm = false;
};

// Dense -> [LayerNorm] -> GELU on every hidden layer, plain dense output.
// Parameter names are "<prefix>/l<i>/w", "<prefix>/l<i>/b" and, with layer
// norm, "<prefix>/ln<i>/g", "<prefix>/ln<i>/b".
class Mlp {
 public:
  Mlp() = default;
  // Glorot-uniform weights, zero biases, unit layer-norm gains.
  Mlp(std::string prefix, MlpSpec spec, Rng& rng);

  // Tape handles point into this object; do not move it while a tape that
  // used it is alive.
  Mlp(const Mlp&) = default;
  Mlp& operator=(const Mlp&) = default;
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  Var forward(Tape& tape, Var input, bool trainable = true);
  // Forward pass without recording gradients.
  Tensor operator()(const Tensor& input);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  const MlpSpec& spec() const noexcept { return spec_; }
  const std::string& prefix() const noexcept { return prefix_; }
  std::size_t input_width() const noexcept { return spec_.input; }
  std::size_t output_width() const noexcept { return spec_.output; }

  // Copies parameter values (not names) from a network of identical layout.
  void copy_values_from(const Mlp& other);
  // Renames every parameter under a new prefix.
  void set_prefix(const std::string& prefix);

 private:
  struct Layer {
    Parameter weight;
    Parameter bias;
    Parameter gain;
    Parameter shift;
    bool norm = false;
  };

  std::string prefix_;
  MlpSpec spec_;
  std::vector<Layer> layers_;
};

// Number of scalar weights in a parameter list.
std::size_t parameter_count(const std::vector<Parameter*>& params);

void zero_grads(const std::vector<Parameter*>& params);

}  // namespace reform::nn
