#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reform/critic/critic.hpp"
#include "reform/geometry/ball.hpp"
#include "reform/geometry/integrate.hpp"
#include "reform/policy/policy.hpp"

namespace reform::trainer {

enum class VariantKind {
  reform,
  nodistill,
  unbounded,
  gaussian,
  mlp_ng,
  tanh_ng,
  squashed_gaussian_ng,
  cube,
  billiard,
  fql,
};

// Variant tag plus its numeric argument: xi for "gaussian-<xi>", alpha for
// "fql-<alpha>".
struct Variant {
  VariantKind kind = VariantKind::reform;
  double param = 0.0;

  std::string tag() const;
  static Variant parse(const std::string& tag);
  static std::string valid_tags();

  bool operator==(const Variant&) const = default;
};

struct TrainConfig {
  std::string env = "two-corner-bandit";
  Variant variant;
  std::size_t steps = 30000;
  std::size_t batch_size = 256;
  double learning_rate = 3e-4;
  double gamma = 0.995;
  double tau = 0.005;
  double max_grad_norm = 10.0;
  std::size_t flow_steps = 10;
  std::string t_distribution = "uniform";
  std::vector<std::size_t> hidden{64, 64};
  critic::Aggregation aggregation = critic::Aggregation::mean;
  // Empty means "auto": sqrt(d), or the chi-square radius for gaussian-<xi>.
  std::optional<double> radius;
  std::size_t eval_interval = 5000;
  std::size_t eval_episodes = 32;
  std::size_t dump_samples = 1000;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Flat key=value text. Every key is required; '#' starts a comment.
std::string format_config(const TrainConfig& cfg);
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const TrainConfig& cfg, const std::filesystem::path& path);
const std::vector<std::string>& config_keys();

// sqrt of the xi-quantile of a chi-square law with d degrees of freedom.
double chi_square_radius(std::size_t d, double xi);

// Everything a variant changes, resolved against the action dimension.
struct VariantPlan {
  geometry::SourceKind bc_source = geometry::SourceKind::ball;
  geometry::BallDomain bc_domain;
  // No generator at all for the regularized baseline.
  bool has_generator = true;
  policy::NoiseSpec noise;
  policy::ActorRoute route = policy::ActorRoute::one_step;
  bool distill = true;
  // Radius every emitted latent must respect; nullopt when the variant has
  // no bounded latent.
  std::optional<double> latent_bound;
};

VariantPlan plan_variant(const TrainConfig& cfg, std::size_t action_dim);

}  // namespace reform::trainer
