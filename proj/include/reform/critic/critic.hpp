#pragma once

#include <string>
#include <utility>
#include <vector>

#include "reform/common/rng.hpp"
#include "reform/envs/dataset.hpp"
#include "reform/nn/mlp.hpp"

namespace reform::critic {

enum class Aggregation { mean, min };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& name);

// A TransitionBatch as B x F matrices (rewards and dones are B x 1).
struct BatchTensors {
  nn::Tensor states;
  nn::Tensor actions;
  nn::Tensor rewards;
  nn::Tensor next_states;
  nn::Tensor dones;

  static BatchTensors from(const envs::TransitionBatch& batch);
};

// Twin Q-networks over concat(s, a) with layer norm, plus target copies.
// Checkpoint prefixes: q1/, q2/, q1_target/, q2_target/.
class CriticPair {
 public:
  CriticPair() = default;
  CriticPair(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
             Aggregation aggregation, double gamma, Rng& rng);

  // Heads on the tape. trainable=false enters the weights as constants.
  std::pair<nn::Var, nn::Var> heads(nn::Tape& tape, nn::Var s, nn::Var a, bool use_target,
                                    bool trainable);
  nn::Var q_value(nn::Tape& tape, nn::Var s, nn::Var a, bool use_target, bool trainable);
  // Forward only; B x 1.
  nn::Tensor q_value(const nn::Tensor& s, const nn::Tensor& a, bool use_target = false);

  // r + gamma * (1 - done) * Q_target_agg(s', a'), B x 1. The target heads are
  // skipped when every transition is terminal.
  nn::Tensor td_target(const nn::Tensor& rewards, const nn::Tensor& next_states,
                       const nn::Tensor& dones, const nn::Tensor& next_actions);

  std::vector<nn::Parameter*> online_parameters();
  std::vector<nn::Parameter*> target_parameters();
  std::vector<const nn::Parameter*> all_parameters() const;
  void update_targets(double tau);

  Aggregation aggregation() const noexcept { return aggregation_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  std::size_t action_dim() const noexcept { return action_dim_; }

  nn::Mlp& q1() { return q1_; }
  nn::Mlp& q2() { return q2_; }
  nn::Mlp& q1_target() { return q1_target_; }
  nn::Mlp& q2_target() { return q2_target_; }

 private:
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  Aggregation aggregation_ = Aggregation::mean;
  double gamma_ = 0.995;
  nn::Mlp q1_, q2_, q1_target_, q2_target_;
};

// Elementwise aggregation of two B x 1 columns.
nn::Var aggregate(nn::Tape& tape, nn::Var a, nn::Var b, Aggregation how);
nn::Tensor aggregate(const nn::Tensor& a, const nn::Tensor& b, Aggregation how);

// Sum over both online heads of mean (y - Q_i(s, a))^2 with y = td_target(...)
// entering as a constant.
nn::Var td_loss(nn::Tape& tape, CriticPair& critic, const BatchTensors& batch,
                const nn::Tensor& next_actions);

}  // namespace reform::critic
