#pragma once

#include <cstdint>
#include <vector>

#include "reform/nn/tensor.hpp"

namespace reform::nn {

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global L2 norm bound on the gradient; <= 0 disables clipping.
  double max_grad_norm = 10.0;
};

// Adam with global-norm gradient clipping. Holds non-owning pointers to the
// parameters it updates; they must outlive the optimizer.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamOptions options);

  // Clips the global gradient norm to max_grad_norm (as a scale factor, the
  // stored grads are left untouched), then applies one Adam update. Throws
  // NumericError naming the first parameter with a non-finite gradient.
  void step();

  std::uint64_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<Parameter*>& parameters() const noexcept { return params_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  // Norm seen by the most recent step(), before clipping.
  double last_grad_norm() const noexcept { return last_norm_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
  double last_norm_ = 0.0;
};

double global_grad_norm(const std::vector<Parameter*>& params);

// Factor that brings a gradient of norm `norm` within `max_norm`.
double clip_scale(double norm, double max_norm) noexcept;

// target <- (1 - tau) * target + tau * online. Lists are matched pairwise and
// must agree on the name below the first '/' and on shape.
void polyak_update(const std::vector<Parameter*>& target,
                   const std::vector<Parameter*>& online, double tau);

}  // namespace reform::nn
