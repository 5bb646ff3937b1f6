#pragma once

#include <functional>
#include <vector>

#include "reform/nn/tape.hpp"
#include "support/oracles.hpp"

namespace reform::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

// Runs one reverse pass of `build` and compares every gradient entry of
// `params` with central differences of the same forward pass.
inline GradCheck check_gradients(const std::vector<nn::Parameter*>& params,
                                 const std::function<nn::Var(nn::Tape&)>& build,
                                 double h = 1e-5) {
  for (nn::Parameter* p : params) p->zero_grad();
  nn::Tape tape;
  tape.backward(build(tape));
  std::vector<std::vector<double>> ad;
  for (nn::Parameter* p : params) ad.emplace_back(p->grad.data().begin(), p->grad.data().end());

  const auto loss = [&] {
    nn::Tape t;
    return t.value(build(t)).item();
  };
  const auto fd = finite_difference(params, loss, h);
  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < ad[k].size(); ++i) {
      out.max_rel_error = std::max(out.max_rel_error, relative_error(ad[k][i], fd[k][i]));
      ++out.entries;
    }
  }
  return out;
}

inline void set_all(const std::vector<nn::Parameter*>& params, double v) {
  for (nn::Parameter* p : params) p->value.fill(v);
}

// Zero weights everywhere and the given output bias, so the net is constant.
inline void make_constant(nn::Mlp& net, const std::vector<double>& bias) {
  auto params = net.parameters();
  set_all(params, 0.0);
  nn::Tensor& b = params.back()->value;
  for (std::size_t i = 0; i < bias.size(); ++i) b[i] = bias[i];
}

inline bool all_zero(const std::vector<nn::Parameter*>& params) {
  for (const nn::Parameter* p : params) {
    for (double g : p->grad.data()) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

}  // namespace reform::testing
