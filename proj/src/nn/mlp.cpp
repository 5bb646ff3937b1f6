#include "reform/nn/mlp.hpp"

#include <cmath>

#include "reform/common/error.hpp"

namespace reform::nn {

Mlp::Mlp(std::string prefix, MlpSpec spec, Rng& rng)
    : prefix_(std::move(prefix)), spec_(std::move(spec)) {
  if (spec_.input == 0 || spec_.output == 0) {
    throw ContractError("mlp '" + prefix_ + "': input and output widths must be positive");
  }
  std::vector<std::size_t> widths{spec_.input};
  widths.insert(widths.end(), spec_.hidden.begin(), spec_.hidden.end());
  widths.push_back(spec_.output);
  const std::size_t n = widths.size() - 1;
  layers_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t in = widths[i], out = widths[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w = Tensor::matrix(in, out);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    Layer& layer = layers_[i];
    layer.weight = Parameter("", std::move(w));
    layer.bias = Parameter("", Tensor({out}, 0.0));
    layer.norm = spec_.layer_norm && i + 1 < n;
    if (layer.norm) {
      layer.gain = Parameter("", Tensor({out}, 1.0));
      layer.shift = Parameter("", Tensor({out}, 0.0));
    }
  }
  set_prefix(prefix_);
}

void Mlp::set_prefix(const std::string& prefix) {
  prefix_ = prefix;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string idx = std::to_string(i);
    layers_[i].weight.name = prefix_ + "/l" + idx + "/w";
    layers_[i].bias.name = prefix_ + "/l" + idx + "/b";
    if (layers_[i].norm) {
      layers_[i].gain.name = prefix_ + "/ln" + idx + "/g";
      layers_[i].shift.name = prefix_ + "/ln" + idx + "/b";
    }
  }
}

Var Mlp::forward(Tape& tape, Var input, bool trainable) {
  const Tensor& x = tape.value(input);
  if (x.cols() != spec_.input) {
    throw DimensionError("mlp '" + prefix_ + "': expected input width " +
                         std::to_string(spec_.input) + ", got " + std::to_string(x.cols()));
  }
  Var h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& layer = layers_[i];
    h = affine(tape, h, tape.parameter(layer.weight, trainable),
               tape.parameter(layer.bias, trainable));
    if (i + 1 == layers_.size()) break;
    if (layer.norm) {
      h = layer_norm(tape, h, tape.parameter(layer.gain, trainable),
                     tape.parameter(layer.shift, trainable));
    }
    h = gelu(tape, h);
  }
  return h;
}

Tensor Mlp::operator()(const Tensor& input) {
  Tape tape;
  const Var y = forward(tape, tape.constant(input), false);
  return tape.value(y);
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (Layer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.norm) {
      out.push_back(&layer.gain);
      out.push_back(&layer.shift);
    }
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const Layer& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.norm) {
      out.push_back(&layer.gain);
      out.push_back(&layer.shift);
    }
  }
  return out;
}

void Mlp::copy_values_from(const Mlp& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) {
    throw ContractError("copy_values_from: '" + other.prefix_ + "' and '" + prefix_ +
                        "' have different layouts");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!dst[i]->value.same_shape(src[i]->value)) {
      throw ContractError("copy_values_from: shape mismatch at " + dst[i]->name);
    }
    dst[i]->value = src[i]->value;
  }
}

std::size_t parameter_count(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace reform::nn
