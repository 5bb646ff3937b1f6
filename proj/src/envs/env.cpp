#include "reform/envs/env.hpp"

#include <algorithm>
#include <cmath>

#include "reform/common/error.hpp"

namespace reform::envs {

void check_action_in_box(std::span<const double> action) {
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double a = action[i];
    if (!(a >= -1.0 && a <= 1.0)) {
      throw ContractError("action component " + std::to_string(i) + " = " + std::to_string(a) +
                          " is outside [-1, 1]");
    }
  }
}

namespace {

void check_dims(const Environment& env, std::span<const double> s, std::span<const double> a) {
  if (s.size() != env.state_dim() || a.size() != env.action_dim()) {
    throw DimensionError(env.name() + ": expected state dim " + std::to_string(env.state_dim()) +
                         " and action dim " + std::to_string(env.action_dim()) + ", got " +
                         std::to_string(s.size()) + " and " + std::to_string(a.size()));
  }
}

}  // namespace

double TwoCornerBandit::reward(std::span<const double> a) {
  const double s2 = kSigma * kSigma;
  double d1 = 0.0;
  double d2 = 0.0;
  for (double x : a) {
    d1 += (x + kCorner) * (x + kCorner);
    d2 += (x - kCorner) * (x - kCorner);
  }
  return std::max(std::exp(-d1 / s2), std::exp(-d2 / s2));
}

std::vector<double> TwoCornerBandit::reset(Rng&) const { return {0.0, 0.0}; }

StepResult TwoCornerBandit::step(std::span<const double> s, std::span<const double> a) const {
  check_dims(*this, s, a);
  check_action_in_box(a);
  return {std::vector<double>(s.begin(), s.end()), reward(a), true};
}

std::vector<double> LineWorld::reset(Rng& rng) const { return {rng.uniform(-1.0, -0.5)}; }

StepResult LineWorld::step(std::span<const double> s, std::span<const double> a) const {
  check_dims(*this, s, a);
  check_action_in_box(a);
  const double next = std::clamp(s[0] + kSpeed * a[0], -1.0, 1.0);
  // Repeated 0.2 increments land a hair under 0.9 in binary floating point.
  const bool goal = next >= kGoal - 1e-9;
  return {{next}, goal ? 0.0 : -1.0, goal};
}

const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names{"two-corner-bandit", "line-world"};
  return names;
}

std::unique_ptr<Environment> make_environment(const std::string& name) {
  if (name == "two-corner-bandit") return std::make_unique<TwoCornerBandit>();
  if (name == "line-world") return std::make_unique<LineWorld>();
  throw ConfigError("unknown environment '" + name + "' (valid: two-corner-bandit, line-world)");
}

}  // namespace reform::envs
