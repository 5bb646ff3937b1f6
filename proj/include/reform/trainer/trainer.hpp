#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "reform/critic/critic.hpp"
#include "reform/envs/dataset.hpp"
#include "reform/envs/env.hpp"
#include "reform/nn/checkpoint.hpp"
#include "reform/nn/optim.hpp"
#include "reform/policy/policy.hpp"
#include "reform/trainer/config.hpp"

namespace reform::trainer {

struct MetricsRow {
  std::size_t step = 0;
  double loss_critic = 0.0;
  double loss_bc = 0.0;
  double loss_distill = 0.0;
  double loss_actor = 0.0;
  double eval_return = 0.0;
  double clip_rate = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,loss_critic,loss_bc,loss_distill,loss_actor,eval_return,clip_rate";

// One decision of the evaluated policy: input noise w, latent z, action a.
struct SampleDump {
  std::size_t dim = 0;
  std::vector<double> w, z, a;

  std::size_t size() const noexcept { return dim ? a.size() / dim : 0; }
};

struct EvalResult {
  double mean_return = 0.0;
  std::vector<double> returns;
  SampleDump samples;
  std::size_t actions = 0;
  std::size_t clipped = 0;
};

struct StepLosses {
  double critic = 0.0;
  double bc = 0.0;
  double distill = 0.0;
  double actor = 0.0;
};

struct RunArtifacts {
  std::vector<MetricsRow> metrics;
  EvalResult final_eval;
  std::size_t actions_emitted = 0;
  std::size_t actions_clipped = 0;
  double clip_rate() const {
    return actions_emitted ? static_cast<double>(actions_clipped) / actions_emitted : 0.0;
  }
};

// Algorithm-1 training loop for one configuration. Not thread-safe; one
// Trainer per thread.
class Trainer {
 public:
  // The dataset may be empty for a trainer that only evaluates a restored
  // checkpoint; training steps then throw PreconditionError.
  Trainer(TrainConfig cfg, envs::TransitionBatch dataset);
  // Optimizers hold pointers into the networks.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // Full iteration: batch, critic, BC, distill, generator, targets.
  StepLosses step();

  critic::BatchTensors sample_batch();
  double update_critic(const critic::BatchTensors& b);
  double update_bc(const critic::BatchTensors& b);
  double update_distill(const critic::BatchTensors& b);
  double update_actor(const critic::BatchTensors& b);
  void update_targets();

  // Latents and actions for a batch of states; actions are not clipped.
  policy::LatentAction act(const nn::Tensor& states, Rng& rng, nn::Tensor* w_out = nullptr);

  // `episodes` batched rollouts; actions are clipped to the box and counted.
  EvalResult evaluate(std::size_t episodes, Rng& rng, bool keep_samples = false);
  // One decision from each of n reset states.
  EvalResult dump_samples(std::size_t n, Rng& rng);

  // Trains for cfg.steps steps. With an output directory, writes config.txt,
  // init.rfck, metrics.csv and, when steps > 0, final.rfck, samples.csv and
  // returns.csv.
  RunArtifacts run(const std::filesystem::path& out_dir = {});

  std::vector<nn::NamedTensor> checkpoint() const;
  // Loads every network from a checkpoint written by checkpoint().
  void restore(const std::vector<nn::NamedTensor>& entries);

  const TrainConfig& config() const noexcept { return cfg_; }
  const VariantPlan& plan() const noexcept { return plan_; }
  const envs::Environment& env() const noexcept { return *env_; }
  std::size_t steps_done() const noexcept { return steps_done_; }

  policy::BcFlowPolicy& bc() { return bc_; }
  policy::NoiseGenerator& generator() { return ng_; }
  policy::OneStepPolicy& onestep() { return onestep_; }
  critic::CriticPair& critic() { return critic_; }

 private:
  nn::Tensor next_actions(const nn::Tensor& next_states);
  std::vector<nn::Parameter*> all_parameters();
  void check_finite(double loss, const char* name) const;

  TrainConfig cfg_;
  VariantPlan plan_;
  std::unique_ptr<envs::Environment> env_;
  envs::TransitionBatch data_;

  policy::BcFlowPolicy bc_;
  policy::NoiseGenerator ng_;
  policy::OneStepPolicy onestep_;
  critic::CriticPair critic_;

  nn::Adam opt_critic_, opt_bc_, opt_onestep_, opt_ng_;

  Rng rng_data_, rng_bc_, rng_ng_, rng_critic_;
  std::size_t steps_done_ = 0;
  std::size_t emitted_ = 0;
  std::size_t clipped_ = 0;
};

// Fraction of actions within `radius` of each corner +-(c, c, ...).
std::pair<double, double> corner_coverage(const SampleDump& samples, double corner = 0.8,
                                          double radius = 0.35);

std::string format_metrics(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics(const std::string& csv);
std::string format_samples(const SampleDump& dump);
SampleDump parse_samples(const std::string& csv);

}  // namespace reform::trainer
