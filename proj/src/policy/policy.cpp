#include "reform/policy/policy.hpp"

#include <cmath>

#include "reform/common/error.hpp"

namespace reform::policy {

using geometry::SourceKind;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kSupportTol = 1e-12;

nn::MlpSpec spec_of(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  return {in, hidden, out, false};
}

void require_support(SourceKind source, const geometry::BallDomain& domain, const Tensor& z,
                     const char* what) {
  if (!in_source_support(source, domain, z)) {
    throw PreconditionError(std::string(what) + ": latent lies outside the source support");
  }
}

}  // namespace

bool in_source_support(SourceKind source, const geometry::BallDomain& domain, const Tensor& z) {
  switch (source) {
    case SourceKind::ball:
      for (std::size_t i = 0; i < z.rows(); ++i) {
        if (!domain.contains(z.row(i), kSupportTol)) return false;
      }
      return true;
    case SourceKind::cube:
      for (double v : z.data()) {
        if (std::abs(v) > 1.0 + kSupportTol) return false;
      }
      return true;
    case SourceKind::gaussian:
      return true;
  }
  return true;
}

Var time_column(Tape& tape, double t, std::size_t rows) {
  return tape.constant(Tensor::matrix(rows, 1, t));
}

// ---- BcFlowPolicy -----------------------------------------------------------

BcFlowPolicy::BcFlowPolicy(std::size_t state_dim, std::size_t action_dim,
                           std::vector<std::size_t> hidden, SourceKind source,
                           geometry::BallDomain domain, std::size_t steps, Rng& rng)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      source_(source),
      domain_(domain),
      steps_(steps),
      net_("bc", spec_of(1 + action_dim + state_dim, hidden, action_dim), rng) {
  if (domain_.dim != action_dim) throw ContractError("bc policy: domain dim != action dim");
}

Var BcFlowPolicy::velocity(Tape& tape, Var t, Var z, Var s, bool trainable) {
  const Var parts[] = {t, z, s};
  return net_.forward(tape, nn::concat_cols(tape, parts), trainable);
}

Var BcFlowPolicy::sample(Tape& tape, Var z, Var s, bool trainable,
                         geometry::IntegrationStats* stats) {
  require_support(source_, domain_, tape.value(z), "bc sample");
  const std::size_t rows = tape.value(z).rows();
  const geometry::VelocityField field = [&](Tape& tp, double t, Var x) {
    return velocity(tp, time_column(tp, t, rows), x, s, trainable);
  };
  geometry::IntegratorConfig cfg{steps_, geometry::IntegratorMode::plain, domain_.radius};
  return geometry::euler_integrate(tape, field, z, cfg, stats);
}

Tensor BcFlowPolicy::sample(const Tensor& z, const Tensor& s) {
  Tape tape;
  const Var a = sample(tape, tape.constant(z), tape.constant(s), false);
  return tape.value(a);
}

Tensor BcFlowPolicy::sample_latent(Rng& rng, std::size_t n) const {
  return geometry::sample_source(source_, domain_, rng, n);
}

// ---- NoiseGenerator ---------------------------------------------------------

NoiseGenerator::NoiseGenerator(std::size_t state_dim, std::size_t action_dim,
                               std::vector<std::size_t> hidden, NoiseSpec spec, Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim), spec_(spec) {
  if (spec_.domain.dim != action_dim) throw ContractError("noise generator: domain dim mismatch");
  switch (spec_.kind) {
    case NoiseKind::flow:
      net_ = nn::Mlp("ng", spec_of(1 + action_dim + state_dim, hidden, action_dim), rng);
      break;
    case NoiseKind::mlp:
      net_ = nn::Mlp("ng", spec_of(state_dim, hidden, action_dim), rng);
      break;
    case NoiseKind::squashed_gaussian:
      net_ = nn::Mlp("ng", spec_of(state_dim, hidden, 2 * action_dim), rng);
      break;
  }
}

Var NoiseGenerator::generate(Tape& tape, Var w, Var s, bool trainable,
                             geometry::IntegrationStats* stats,
                             const geometry::StepObserver& observer) {
  const double l = spec_.domain.radius;
  switch (spec_.kind) {
    case NoiseKind::mlp:
      return geometry::radial_tanh_squash(tape, net_.forward(tape, s, trainable), l);
    case NoiseKind::squashed_gaussian: {
      const Var out = net_.forward(tape, s, trainable);
      const Var mu = nn::slice_cols(tape, out, 0, action_dim_);
      // log_std = lo + (hi - lo) * (tanh(x) + 1) / 2
      const Var raw = nn::tanh(tape, nn::slice_cols(tape, out, action_dim_, action_dim_));
      const double half = 0.5 * (kLogStdMax - kLogStdMin);
      const Var log_std = nn::add_scalar(tape, nn::scale(tape, raw, half), kLogStdMin + half);
      const Var u = nn::add(tape, mu, nn::mul(tape, nn::exp(tape, log_std), w));
      return geometry::radial_tanh_squash(tape, u, l);
    }
    case NoiseKind::flow:
      break;
  }
  require_support(spec_.source, spec_.domain, tape.value(w), "noise generator");
  const std::size_t rows = tape.value(w).rows();
  const geometry::VelocityField field = [&](Tape& tp, double t, Var x) {
    const Var parts[] = {time_column(tp, t, rows), x, s};
    return net_.forward(tp, nn::concat_cols(tp, parts), trainable);
  };
  geometry::IntegratorConfig cfg = spec_.integrator;
  cfg.radius = l;
  const Var z = geometry::integrate(tape, field, w, cfg, stats, observer);
  return spec_.tanh_output ? geometry::radial_tanh_squash(tape, z, l) : z;
}

Tensor NoiseGenerator::generate(const Tensor& w, const Tensor& s) {
  Tape tape;
  const Var z = generate(tape, tape.constant(w), tape.constant(s), false);
  return tape.value(z);
}

Tensor NoiseGenerator::sample_input(Rng& rng, std::size_t n) const {
  switch (spec_.kind) {
    case NoiseKind::squashed_gaussian:
      return geometry::sample_normal(action_dim_, rng, n);
    case NoiseKind::mlp:
    case NoiseKind::flow:
      break;
  }
  return geometry::sample_source(spec_.source, spec_.domain, rng, n);
}

// ---- OneStepPolicy ----------------------------------------------------------

OneStepPolicy::OneStepPolicy(std::size_t state_dim, std::size_t action_dim,
                             std::vector<std::size_t> hidden, Rng& rng)
    : net_("onestep", spec_of(action_dim + state_dim, hidden, action_dim), rng) {}

Var OneStepPolicy::forward(Tape& tape, Var z, Var s, bool trainable) {
  const Var parts[] = {z, s};
  return net_.forward(tape, nn::concat_cols(tape, parts), trainable);
}

Tensor OneStepPolicy::operator()(const Tensor& z, const Tensor& s) {
  Tape tape;
  const Var a = forward(tape, tape.constant(z), tape.constant(s), false);
  return tape.value(a);
}

// ---- losses -----------------------------------------------------------------

FlowPair flow_matching_pair(const Tensor& z, const Tensor& actions, const Tensor& t) {
  if (!z.same_shape(actions) || t.rows() != z.rows() || t.cols() != 1) {
    throw DimensionError("flow pair: z " + nn::shape_string(z.shape()) + ", actions " +
                         nn::shape_string(actions.shape()) + ", t " +
                         nn::shape_string(t.shape()));
  }
  FlowPair p{z, actions};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double ti = t(i, 0);
    for (std::size_t j = 0; j < z.cols(); ++j) {
      p.x_t(i, j) = (1.0 - ti) * z(i, j) + ti * actions(i, j);
      p.target(i, j) = actions(i, j) - z(i, j);
    }
  }
  return p;
}

Var bc_loss(Tape& tape, BcFlowPolicy& policy, const Tensor& states, const Tensor& actions,
            const Tensor& z, const Tensor& t) {
  if (states.rows() != z.rows()) throw DimensionError("bc_loss: states and z disagree on rows");
  FlowPair p = flow_matching_pair(z, actions, t);
  const Var v = policy.velocity(tape, tape.constant(t), tape.constant(std::move(p.x_t)),
                                tape.constant(states), true);
  return nn::mean_row_sq_norm(tape, nn::sub(tape, v, tape.constant(std::move(p.target))));
}

Var distill_loss(Tape& tape, OneStepPolicy& onestep, BcFlowPolicy& policy,
                 const Tensor& states, const Tensor& z) {
  const Tensor target = policy.sample(z, states);
  const Var pred = onestep.forward(tape, tape.constant(z), tape.constant(states), true);
  return nn::mean_row_sq_norm(tape, nn::sub(tape, pred, tape.constant(target)));
}

ActionMap action_map(OneStepPolicy& onestep, BcFlowPolicy& policy, ActorRoute route) {
  if (route == ActorRoute::one_step) {
    return [&onestep](Tape& t, Var z, Var s) { return onestep.forward(t, z, s, false); };
  }
  return [&policy](Tape& t, Var z, Var s) { return policy.sample(t, z, s, false); };
}

QFunction frozen_q(critic::CriticPair& critic) {
  return [&critic](Tape& t, Var s, Var a) { return critic.q_value(t, s, a, false, false); };
}

Var actor_loss(Tape& tape, NoiseGenerator& gen, const ActionMap& map, const QFunction& q,
               const Tensor& states, const Tensor& w) {
  const Var s = tape.constant(states);
  const Var z = gen.generate(tape, tape.constant(w), s, true);
  const Var value = q(tape, s, map(tape, z, s));
  return nn::scale(tape, nn::mean(tape, value), -1.0);
}

Var actor_loss(Tape& tape, NoiseGenerator& gen, OneStepPolicy& onestep, BcFlowPolicy& policy,
               critic::CriticPair& critic, const Tensor& states, const Tensor& w,
               ActorRoute route) {
  return actor_loss(tape, gen, action_map(onestep, policy, route), frozen_q(critic), states, w);
}

Var regularized_actor_loss(Tape& tape, OneStepPolicy& onestep, BcFlowPolicy& policy,
                           critic::CriticPair& critic, const Tensor& states, const Tensor& z,
                           double alpha) {
  const Tensor target = policy.sample(z, states);
  const Var s = tape.constant(states);
  const Var a = onestep.forward(tape, tape.constant(z), s, true);
  const Var q = critic.q_value(tape, s, a, false, false);
  const Var gap = nn::mean_row_sq_norm(tape, nn::sub(tape, a, tape.constant(target)));
  return nn::add(tape, nn::scale(tape, nn::mean(tape, q), -1.0), nn::scale(tape, gap, alpha));
}

LatentAction compose_policy_action(NoiseGenerator& gen, OneStepPolicy& onestep,
                                   BcFlowPolicy& policy, const Tensor& states, const Tensor& w,
                                   ActorRoute route) {
  Tensor z = gen.generate(w, states);
  Tensor a = route == ActorRoute::one_step ? onestep(z, states) : policy.sample(z, states);
  return {std::move(z), std::move(a)};
}

}  // namespace reform::policy
