#include "reform/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

#include "reform/common/error.hpp"

namespace reform::nn {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double acc = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.data()) acc += g * g;
  }
  return std::sqrt(acc);
}

double clip_scale(double norm, double max_norm) noexcept {
  if (max_norm <= 0.0 || norm <= max_norm) return 1.0;
  return max_norm / norm;
}

void Adam::step() {
  for (const Parameter* p : params_) {
    if (!p->grad.all_finite()) {
      throw NumericError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  last_norm_ = global_grad_norm(params_);
  const double s = clip_scale(last_norm_, options_.max_grad_norm);
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k]->value.data();
    auto g = params_[k]->grad.data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * s;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

namespace {

std::string_view local_name(std::string_view name) {
  const auto pos = name.find('/');
  return pos == std::string_view::npos ? name : name.substr(pos + 1);
}

}  // namespace

void polyak_update(const std::vector<Parameter*>& target,
                   const std::vector<Parameter*>& online, double tau) {
  if (target.size() != online.size()) {
    throw ContractError("polyak_update: " + std::to_string(target.size()) + " target vs " +
                        std::to_string(online.size()) + " online parameters");
  }
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (local_name(target[k]->name) != local_name(online[k]->name) ||
        !target[k]->value.same_shape(online[k]->value)) {
      throw ContractError("polyak_update: '" + target[k]->name + "' does not align with '" +
                          online[k]->name + "'");
    }
  }
  for (std::size_t k = 0; k < target.size(); ++k) {
    auto t = target[k]->value.data();
    auto o = online[k]->value.data();
    if (tau == 1.0) {
      std::copy(o.begin(), o.end(), t.begin());
      continue;
    }
    // Written as t + tau (o - t) so that t == o is an exact fixed point.
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += tau * (o[i] - t[i]);
  }
}

}  // namespace reform::nn
