#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "reform/common/rng.hpp"
#include "reform/envs/env.hpp"

namespace reform::envs {

// Offline transitions, one array per column. Multi-dimensional columns are
// stored row-major (row i occupies [i*dim, (i+1)*dim)).
struct TransitionBatch {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> states;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<double> dones;

  TransitionBatch() = default;
  TransitionBatch(std::size_t sdim, std::size_t adim) : state_dim(sdim), action_dim(adim) {}

  std::size_t size() const noexcept { return rewards.size(); }
  bool empty() const noexcept { return rewards.empty(); }

  std::span<const double> state(std::size_t i) const;
  std::span<const double> action(std::size_t i) const;
  std::span<const double> next_state(std::size_t i) const;

  void append(std::span<const double> s, std::span<const double> a, double r,
              std::span<const double> s_next, bool done);
  void append(const TransitionBatch& other);
  // Rows at the given indices, in that order.
  TransitionBatch gather(std::span<const std::size_t> rows) const;
  // Throws ContractError on ragged columns.
  void validate() const;

  bool operator==(const TransitionBatch&) const = default;
};

class BehaviorPolicy {
 public:
  virtual ~BehaviorPolicy() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> act(std::span<const double> state, Rng& rng) const = 0;
};

// Two isotropic Gaussians at -(0.4, 0.4) and (0.4, 0.4), std 0.25, equal
// weights, resampled until inside [-1, 1]^2.
class CornerMixtureBehavior final : public BehaviorPolicy {
 public:
  static constexpr double kCenter = 0.4;
  static constexpr double kStd = 0.25;
  std::string name() const override { return "corner-mixture"; }
  std::vector<double> act(std::span<const double> state, Rng& rng) const override;
};

// With probability epsilon a uniform action in the box, otherwise (1, 0).
class EpsilonRightBehavior final : public BehaviorPolicy {
 public:
  explicit EpsilonRightBehavior(double epsilon = 0.5) : epsilon_(epsilon) {}
  std::string name() const override { return "epsilon-right"; }
  std::vector<double> act(std::span<const double> state, Rng& rng) const override;

 private:
  double epsilon_;
};

// Default behavior for a named environment.
std::unique_ptr<BehaviorPolicy> make_behavior(const Environment& env);

// Rolls out `episodes` episodes; episode e uses its own stream derived from
// (seed, e), so the result does not depend on how episodes are scheduled.
// Episodes run in parallel and are concatenated in index order.
TransitionBatch generate_dataset(const Environment& env, const BehaviorPolicy& behavior,
                                 std::size_t episodes, std::uint64_t seed);

namespace serial {
TransitionBatch generate_dataset(const Environment& env, const BehaviorPolicy& behavior,
                                 std::size_t episodes, std::uint64_t seed);
}

// Monte Carlo mean of the per-episode return under `behavior`.
double behavior_mean_return(const Environment& env, const BehaviorPolicy& behavior,
                            std::size_t episodes, std::uint64_t seed);

// ---- RFDS ------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_dataset(const TransitionBatch& batch);
TransitionBatch decode_dataset(std::string_view bytes);
void write_dataset(const TransitionBatch& batch, const std::filesystem::path& path);
TransitionBatch read_dataset(const std::filesystem::path& path);

}  // namespace reform::envs
