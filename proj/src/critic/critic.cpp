#include "reform/critic/critic.hpp"

#include <algorithm>

#include "reform/common/error.hpp"
#include "reform/nn/optim.hpp"

namespace reform::critic {

using nn::Tape;
using nn::Tensor;
using nn::Var;

std::string to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "min"; }

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "mean") return Aggregation::mean;
  if (name == "min") return Aggregation::min;
  throw ConfigError("unknown aggregation '" + name + "' (expected mean or min)");
}

BatchTensors BatchTensors::from(const envs::TransitionBatch& b) {
  b.validate();
  const std::size_t n = b.size();
  return {Tensor::matrix(n, b.state_dim, b.states), Tensor::matrix(n, b.action_dim, b.actions),
          Tensor::matrix(n, 1, b.rewards), Tensor::matrix(n, b.state_dim, b.next_states),
          Tensor::matrix(n, 1, b.dones)};
}

CriticPair::CriticPair(std::size_t state_dim, std::size_t action_dim,
                       std::vector<std::size_t> hidden, Aggregation aggregation, double gamma,
                       Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim), aggregation_(aggregation), gamma_(gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  const nn::MlpSpec spec{state_dim + action_dim, std::move(hidden), 1, true};
  q1_ = nn::Mlp("q1", spec, rng);
  q2_ = nn::Mlp("q2", spec, rng);
  q1_target_ = q1_;
  q1_target_.set_prefix("q1_target");
  q2_target_ = q2_;
  q2_target_.set_prefix("q2_target");
}

std::pair<Var, Var> CriticPair::heads(Tape& tape, Var s, Var a, bool use_target,
                                      bool trainable) {
  const Var parts[] = {s, a};
  const Var x = nn::concat_cols(tape, parts);
  nn::Mlp& n1 = use_target ? q1_target_ : q1_;
  nn::Mlp& n2 = use_target ? q2_target_ : q2_;
  return {n1.forward(tape, x, trainable), n2.forward(tape, x, trainable)};
}

Var CriticPair::q_value(Tape& tape, Var s, Var a, bool use_target, bool trainable) {
  auto [h1, h2] = heads(tape, s, a, use_target, trainable);
  return aggregate(tape, h1, h2, aggregation_);
}

Tensor CriticPair::q_value(const Tensor& s, const Tensor& a, bool use_target) {
  Tape tape;
  const Var v = q_value(tape, tape.constant(s), tape.constant(a), use_target, false);
  return tape.value(v);
}

Tensor CriticPair::td_target(const Tensor& rewards, const Tensor& next_states,
                             const Tensor& dones, const Tensor& next_actions) {
  if (dones.rows() != rewards.rows()) {
    throw DimensionError("td_target: rewards and dones disagree on batch size");
  }
  // A batch of terminal transitions bootstraps from nothing.
  if (std::all_of(dones.data().begin(), dones.data().end(), [](double d) { return d == 1.0; })) {
    return rewards;
  }
  Tensor q = q_value(next_states, next_actions, true);
  if (q.rows() != rewards.rows() || dones.rows() != rewards.rows()) {
    throw DimensionError("td_target: rewards, dones and next states disagree on batch size");
  }
  for (std::size_t i = 0; i < q.rows(); ++i) {
    q[i] = rewards[i] + gamma_ * (1.0 - dones[i]) * q[i];
  }
  return q;
}

std::vector<nn::Parameter*> CriticPair::online_parameters() {
  auto p = q1_.parameters();
  auto p2 = q2_.parameters();
  p.insert(p.end(), p2.begin(), p2.end());
  return p;
}

std::vector<nn::Parameter*> CriticPair::target_parameters() {
  auto p = q1_target_.parameters();
  auto p2 = q2_target_.parameters();
  p.insert(p.end(), p2.begin(), p2.end());
  return p;
}

std::vector<const nn::Parameter*> CriticPair::all_parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const nn::Mlp* m : {&q1_, &q2_, &q1_target_, &q2_target_}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void CriticPair::update_targets(double tau) {
  nn::polyak_update(target_parameters(), online_parameters(), tau);
}

Var aggregate(Tape& tape, Var a, Var b, Aggregation how) {
  if (how == Aggregation::min) return nn::minimum(tape, a, b);
  return nn::scale(tape, nn::add(tape, a, b), 0.5);
}

Tensor aggregate(const Tensor& a, const Tensor& b, Aggregation how) {
  if (!a.same_shape(b)) throw DimensionError("aggregate: head shapes differ");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = how == Aggregation::min ? std::min(a[i], b[i]) : 0.5 * (a[i] + b[i]);
  }
  return out;
}

Var td_loss(Tape& tape, CriticPair& critic, const BatchTensors& batch,
            const Tensor& next_actions) {
  const Var y = tape.constant(
      critic.td_target(batch.rewards, batch.next_states, batch.dones, next_actions));
  auto [h1, h2] = critic.heads(tape, tape.constant(batch.states), tape.constant(batch.actions),
                               false, true);
  const Var l1 = nn::mean(tape, nn::square(tape, nn::sub(tape, h1, y)));
  const Var l2 = nn::mean(tape, nn::square(tape, nn::sub(tape, h2, y)));
  return nn::add(tape, l1, l2);
}

}  // namespace reform::critic
