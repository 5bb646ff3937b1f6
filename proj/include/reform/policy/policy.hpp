#pragma once

#include <functional>
#include <string>
#include <vector>

#include "reform/common/rng.hpp"
#include "reform/critic/critic.hpp"
#include "reform/geometry/ball.hpp"
#include "reform/geometry/integrate.hpp"
#include "reform/nn/mlp.hpp"

namespace reform::policy {

// True when z lies in the support of `source` (ball or cube); Gaussian
// sources accept everything.
bool in_source_support(geometry::SourceKind source, const geometry::BallDomain& domain,
                       const nn::Tensor& z);

// Column of B copies of t.
nn::Var time_column(nn::Tape& tape, double t, std::size_t rows);

// Multi-step BC flow: velocity net v(t, z, s) integrated with plain Euler
// from a latent drawn from the source distribution.
class BcFlowPolicy {
 public:
  BcFlowPolicy() = default;
  BcFlowPolicy(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
               geometry::SourceKind source, geometry::BallDomain domain, std::size_t steps,
               Rng& rng);

  nn::Var velocity(nn::Tape& tape, nn::Var t, nn::Var z, nn::Var s, bool trainable);
  // a = psi(1, z; s). Throws PreconditionError when z is outside the source
  // support.
  nn::Var sample(nn::Tape& tape, nn::Var z, nn::Var s, bool trainable,
                 geometry::IntegrationStats* stats = nullptr);
  nn::Tensor sample(const nn::Tensor& z, const nn::Tensor& s);

  nn::Tensor sample_latent(Rng& rng, std::size_t n) const;

  nn::Mlp& net() { return net_; }
  const nn::Mlp& net() const { return net_; }
  geometry::SourceKind source() const noexcept { return source_; }
  const geometry::BallDomain& domain() const noexcept { return domain_; }
  std::size_t steps() const noexcept { return steps_; }
  std::vector<nn::Parameter*> parameters() { return net_.parameters(); }

 private:
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  geometry::SourceKind source_ = geometry::SourceKind::ball;
  geometry::BallDomain domain_;
  std::size_t steps_ = 10;
  nn::Mlp net_;
};

enum class NoiseKind {
  flow,               // integrated velocity field v(t, w, s)
  mlp,                // deterministic f(s), radially squashed into the ball
  squashed_gaussian,  // mean(s) + std(s) * eps, radially squashed into the ball
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::flow;
  // Distribution of the input w (ignored by mlp; squashed_gaussian always
  // draws eps ~ N(0, I)).
  geometry::SourceKind source = geometry::SourceKind::ball;
  geometry::BallDomain domain;
  geometry::IntegratorConfig integrator{10, geometry::IntegratorMode::reflect_project};
  // Radially squash the flow output by tanh (flow kind only).
  bool tanh_output = false;
};

// Maps w to a latent z for the BC map. Checkpoint prefix ng/.
class NoiseGenerator {
 public:
  // Range of the squashed-Gaussian log standard deviation.
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  NoiseGenerator() = default;
  NoiseGenerator(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                 NoiseSpec spec, Rng& rng);

  nn::Var generate(nn::Tape& tape, nn::Var w, nn::Var s, bool trainable,
                   geometry::IntegrationStats* stats = nullptr,
                   const geometry::StepObserver& observer = {});
  nn::Tensor generate(const nn::Tensor& w, const nn::Tensor& s);

  nn::Tensor sample_input(Rng& rng, std::size_t n) const;

  const NoiseSpec& spec() const noexcept { return spec_; }
  nn::Mlp& net() { return net_; }
  std::vector<nn::Parameter*> parameters() { return net_.parameters(); }

 private:
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  NoiseSpec spec_;
  nn::Mlp net_;
};

// Distilled latent-to-action map mu_hat(z, s). Checkpoint prefix onestep/.
class OneStepPolicy {
 public:
  OneStepPolicy() = default;
  OneStepPolicy(std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
                Rng& rng);

  nn::Var forward(nn::Tape& tape, nn::Var z, nn::Var s, bool trainable);
  nn::Tensor operator()(const nn::Tensor& z, const nn::Tensor& s);

  nn::Mlp& net() { return net_; }
  std::vector<nn::Parameter*> parameters() { return net_.parameters(); }

 private:
  nn::Mlp net_;
};

// Which map turns a generated latent into an action in the actor loss.
enum class ActorRoute { one_step, bc_flow };

struct FlowPair {
  nn::Tensor x_t;     // (1 - t) z + t a
  nn::Tensor target;  // a - z
};
FlowPair flow_matching_pair(const nn::Tensor& z, const nn::Tensor& actions, const nn::Tensor& t);

// mean ||v(t, x_t; s) - (a - z)||^2 with x_t = (1 - t) z + t a. z is B x d,
// t is B x 1.
nn::Var bc_loss(nn::Tape& tape, BcFlowPolicy& policy, const nn::Tensor& states,
                const nn::Tensor& actions, const nn::Tensor& z, const nn::Tensor& t);

// mean ||mu_hat(z; s) - mu(z; s)||^2 with the BC flow output as a constant.
nn::Var distill_loss(nn::Tape& tape, OneStepPolicy& onestep, BcFlowPolicy& policy,
                     const nn::Tensor& states, const nn::Tensor& z);

// Latent-to-action map and Q-function as seen by the actor loss. Both must
// enter their own weights as constants.
using ActionMap = std::function<nn::Var(nn::Tape&, nn::Var z, nn::Var s)>;
using QFunction = std::function<nn::Var(nn::Tape&, nn::Var s, nn::Var a)>;

ActionMap action_map(OneStepPolicy& onestep, BcFlowPolicy& policy, ActorRoute route);
QFunction frozen_q(critic::CriticPair& critic);

// -mean Q(s, map(generate(w; s); s)); only the noise generator is trainable.
nn::Var actor_loss(nn::Tape& tape, NoiseGenerator& gen, const ActionMap& map,
                   const QFunction& q, const nn::Tensor& states, const nn::Tensor& w);
nn::Var actor_loss(nn::Tape& tape, NoiseGenerator& gen, OneStepPolicy& onestep,
                   BcFlowPolicy& policy, critic::CriticPair& critic, const nn::Tensor& states,
                   const nn::Tensor& w, ActorRoute route = ActorRoute::one_step);

// Regularized baseline: -mean Q_agg(s, mu_hat(z; s)) + alpha * mean
// ||mu_hat(z; s) - mu(z; s)||^2; only the one-step policy is trainable.
nn::Var regularized_actor_loss(nn::Tape& tape, OneStepPolicy& onestep, BcFlowPolicy& policy,
                               critic::CriticPair& critic, const nn::Tensor& states,
                               const nn::Tensor& z, double alpha);

struct LatentAction {
  nn::Tensor z;
  nn::Tensor action;
};

// z = generate(w; s), action = mu_hat(z; s) (or the BC flow for bc_flow).
LatentAction compose_policy_action(NoiseGenerator& gen, OneStepPolicy& onestep,
                                   BcFlowPolicy& policy, const nn::Tensor& states,
                                   const nn::Tensor& w, ActorRoute route = ActorRoute::one_step);

}  // namespace reform::policy
