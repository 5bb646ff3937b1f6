#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "reform/common/rng.hpp"

namespace reform::envs {

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;
};

// Actions live in the box [-1, 1]^action_dim for every environment here.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual std::size_t horizon() const = 0;

  virtual std::vector<double> reset(Rng& rng) const = 0;
  // Throws ContractError when the action leaves the box.
  virtual StepResult step(std::span<const double> state, std::span<const double> action) const = 0;
};

class TwoCornerBandit final : public Environment {
 public:
  static constexpr double kCorner = 0.8;
  static constexpr double kSigma = 0.35;

  std::string name() const override { return "two-corner-bandit"; }
  std::size_t state_dim() const override { return 2; }
  std::size_t action_dim() const override { return 2; }
  std::size_t horizon() const override { return 1; }

  std::vector<double> reset(Rng& rng) const override;
  StepResult step(std::span<const double> state, std::span<const double> action) const override;

  static double reward(std::span<const double> action);
};

class LineWorld final : public Environment {
 public:
  static constexpr double kSpeed = 0.2;
  static constexpr double kGoal = 0.9;
  static constexpr std::size_t kHorizon = 40;

  std::string name() const override { return "line-world"; }
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 2; }
  std::size_t horizon() const override { return kHorizon; }

  std::vector<double> reset(Rng& rng) const override;
  StepResult step(std::span<const double> state, std::span<const double> action) const override;
};

// "two-corner-bandit" or "line-world"; ConfigError otherwise.
std::unique_ptr<Environment> make_environment(const std::string& name);
const std::vector<std::string>& environment_names();

void check_action_in_box(std::span<const double> action);

}  // namespace reform::envs
