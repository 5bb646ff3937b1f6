#include <cmath>

#include "doctest.h"
#include "reform/common/error.hpp"
#include "reform/geometry/ball.hpp"
#include "reform/nn/optim.hpp"
#include "reform/policy/policy.hpp"
#include "support/gradcheck.hpp"

using namespace reform;
using namespace reform::policy;
using geometry::BallDomain;
using geometry::IntegratorMode;
using geometry::SourceKind;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using reform::testing::all_zero;
using reform::testing::check_gradients;
using reform::testing::make_constant;

namespace {

struct Stack {
  BcFlowPolicy bc;
  NoiseGenerator ng;
  OneStepPolicy onestep;
  critic::CriticPair critic;
};

Stack make_stack(std::size_t sdim, std::size_t d, std::vector<std::size_t> hidden, Rng& rng,
                 NoiseSpec ng = {}) {
  const BallDomain dom = BallDomain::enclosing_unit_box(d);
  ng.domain = dom;
  return {BcFlowPolicy(sdim, d, hidden, SourceKind::ball, dom, 4, rng),
          NoiseGenerator(sdim, d, hidden, ng, rng), OneStepPolicy(sdim, d, hidden, rng),
          critic::CriticPair(sdim, d, hidden, critic::Aggregation::mean, 0.99, rng)};
}

Tensor uniform_matrix(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Larger output weights so generated noise actually reaches the boundary.
void amplify_output(nn::Mlp& net, double factor) {
  auto params = net.parameters();
  for (std::size_t k = params.size() - 2; k < params.size(); ++k) {
    for (double& v : params[k]->value.data()) v *= factor;
  }
}

}  // namespace

TEST_CASE("flow matching pair") {
  const Tensor z = Tensor::matrix(1, 2, {0.0, 0.0});
  const Tensor a = Tensor::matrix(1, 2, {1.0, 0.0});
  const Tensor t = Tensor::matrix(1, 1, 0.5);
  const FlowPair p = flow_matching_pair(z, a, t);
  CHECK(p.x_t(0, 0) == 0.5);
  CHECK(p.x_t(0, 1) == 0.0);
  CHECK(p.target(0, 0) == 1.0);
  CHECK(p.target(0, 1) == 0.0);
  CHECK_THROWS_AS(flow_matching_pair(z, Tensor::matrix(1, 3), t), DimensionError);
}

TEST_CASE("bc_loss: exact regression target gives zero") {
  Rng rng(1);
  BcFlowPolicy bc(1, 2, {8}, SourceKind::ball, BallDomain{2, 1.0}, 10, rng);
  const Tensor s = Tensor::matrix(1, 1, 0.3);
  const Tensor a = Tensor::matrix(1, 2, {0.75, -0.25});
  const Tensor z = Tensor::matrix(1, 2, {0.25, 0.5});
  const Tensor t = Tensor::matrix(1, 1, 0.37);
  make_constant(bc.net(), {0.5, -0.75});
  Tape tape;
  CHECK(tape.value(bc_loss(tape, bc, s, a, z, t)).item() == 0.0);
}

TEST_CASE("bc_loss: zero field on a symmetric dataset matches E||a - z||^2") {
  Rng rng(2);
  BcFlowPolicy bc(1, 2, {8}, SourceKind::ball, BallDomain{2, 1.0}, 10, rng);
  reform::testing::set_all(bc.parameters(), 0.0);
  const std::size_t n = 100000;
  Tensor a = Tensor::matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) a(i, 0) = i % 2 ? 1.0 : -1.0;
  const Tensor z = bc.sample_latent(rng, n);
  const Tensor t = uniform_matrix(n, 1, 0, 1, rng);
  const Tensor s = Tensor::matrix(n, 1, 0.0);
  Tape tape;
  // E||a||^2 + E||z||^2 = 1 + d/(d+2) l^2 = 1.5 for independent zero-mean a, z.
  CHECK(std::abs(tape.value(bc_loss(tape, bc, s, a, z, t)).item() - 1.5) < 0.01);
}

TEST_CASE("bc sampling: constant fields and precondition") {
  Rng rng(3);
  BcFlowPolicy bc(2, 2, {8}, SourceKind::ball, BallDomain{2, 1.0}, 10, rng);
  const Tensor s = Tensor::matrix(2, 2, 0.1);
  const Tensor z = Tensor::matrix(2, 2, {0.3, -0.2, 0.0, 0.9});
  make_constant(bc.net(), {0.0, 0.0});
  CHECK(bc.sample(z, s) == z);
  make_constant(bc.net(), {0.25, -0.5});
  const Tensor a = bc.sample(z, s);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a(i, 0) == doctest::Approx(z(i, 0) + 0.25).epsilon(1e-14));
    CHECK(a(i, 1) == doctest::Approx(z(i, 1) - 0.5).epsilon(1e-14));
  }
  const Tensor outside = Tensor::matrix(1, 2, {0.9, 0.9});
  CHECK_THROWS_AS(bc.sample(outside, Tensor::matrix(1, 2, 0.0)), PreconditionError);

  BcFlowPolicy gauss(2, 2, {8}, SourceKind::gaussian, BallDomain{2, 1.0}, 10, rng);
  CHECK_NOTHROW(gauss.sample(outside, Tensor::matrix(1, 2, 0.0)));
}

TEST_CASE("noise generator: zero field is the identity and the precondition holds") {
  Rng rng(4);
  Stack st = make_stack(2, 2, {8}, rng);
  reform::testing::set_all(st.ng.parameters(), 0.0);
  const Tensor w = st.ng.sample_input(rng, 16);
  const Tensor s = uniform_matrix(16, 2, -1, 1, rng);
  CHECK(st.ng.generate(w, s) == w);
  const Tensor outside = Tensor::matrix(1, 2, {1.5, 0.0});
  CHECK_THROWS_AS(st.ng.generate(outside, Tensor::matrix(1, 2, 0.0)), PreconditionError);
}

TEST_CASE("noise generator containment over random nets") {
  for (std::size_t d : {2u, 3u}) {
    for (int net_seed = 0; net_seed < 5; ++net_seed) {
      Rng rng(100 + net_seed);
      Stack st = make_stack(2, d, {16, 16}, rng);
      amplify_output(st.ng.net(), 30.0);
      const double l = st.ng.spec().domain.radius;
      const Tensor w = st.ng.sample_input(rng, 2000);
      const Tensor s = uniform_matrix(2000, 2, -1, 1, rng);
      geometry::IntegrationStats stats;
      Tape tape;
      const Var z = st.ng.generate(tape, tape.constant(w), tape.constant(s), false, &stats);
      CHECK(geometry::max_row_norm(tape.value(z)) <= l * (1 + 1e-12));
      CHECK(stats.corrections > 0);
    }
  }
}

TEST_CASE("alternative noise generators stay inside the ball") {
  Rng rng(5);
  for (NoiseKind kind : {NoiseKind::mlp, NoiseKind::squashed_gaussian}) {
    NoiseSpec spec;
    spec.kind = kind;
    Stack st = make_stack(2, 2, {16}, rng, spec);
    amplify_output(st.ng.net(), 20.0);
    const Tensor w = st.ng.sample_input(rng, 500);
    const Tensor s = uniform_matrix(500, 2, -1, 1, rng);
    CHECK(geometry::max_row_norm(st.ng.generate(w, s)) <= std::sqrt(2.0) * (1 + 1e-12));
  }
  NoiseSpec tanh_spec;
  tanh_spec.integrator.mode = IntegratorMode::plain;
  tanh_spec.tanh_output = true;
  Stack st = make_stack(2, 2, {16}, rng, tanh_spec);
  amplify_output(st.ng.net(), 20.0);
  const Tensor w = st.ng.sample_input(rng, 500);
  const Tensor s = uniform_matrix(500, 2, -1, 1, rng);
  CHECK(geometry::max_row_norm(st.ng.generate(w, s)) <= std::sqrt(2.0) * (1 + 1e-12));
}

TEST_CASE("mlp noise generator ignores w") {
  Rng rng(6);
  NoiseSpec spec;
  spec.kind = NoiseKind::mlp;
  Stack st = make_stack(2, 2, {16}, rng, spec);
  const Tensor s = uniform_matrix(4, 2, -1, 1, rng);
  CHECK(st.ng.generate(st.ng.sample_input(rng, 4), s) ==
        st.ng.generate(st.ng.sample_input(rng, 4), s));
}

TEST_CASE("actor_loss with a constant critic") {
  Rng rng(7);
  Stack st = make_stack(2, 2, {8}, rng);
  make_constant(st.critic.q1(), {2.5});
  make_constant(st.critic.q2(), {2.5});
  const Tensor s = uniform_matrix(8, 2, -1, 1, rng);
  const Tensor w = st.ng.sample_input(rng, 8);
  nn::zero_grads(st.ng.parameters());
  Tape tape;
  const Var loss = actor_loss(tape, st.ng, st.onestep, st.bc, st.critic, s, w);
  CHECK(tape.value(loss).item() == -2.5);
  tape.backward(loss);
  CHECK(all_zero(st.ng.parameters()));
}

TEST_CASE("gradient isolation of actor and distillation losses") {
  Rng rng(8);
  Stack st = make_stack(2, 2, {8}, rng);
  amplify_output(st.ng.net(), 10.0);
  const Tensor s = uniform_matrix(8, 2, -1, 1, rng);
  const Tensor w = st.ng.sample_input(rng, 8);
  for (ActorRoute route : {ActorRoute::one_step, ActorRoute::bc_flow}) {
    nn::zero_grads(st.onestep.parameters());
    nn::zero_grads(st.bc.parameters());
    nn::zero_grads(st.critic.online_parameters());
    nn::zero_grads(st.critic.target_parameters());
    nn::zero_grads(st.ng.parameters());
    Tape tape;
    tape.backward(actor_loss(tape, st.ng, st.onestep, st.bc, st.critic, s, w, route));
    CHECK(all_zero(st.onestep.parameters()));
    CHECK(all_zero(st.bc.parameters()));
    CHECK(all_zero(st.critic.online_parameters()));
    CHECK(all_zero(st.critic.target_parameters()));
    CHECK_FALSE(all_zero(st.ng.parameters()));
  }

  nn::zero_grads(st.onestep.parameters());
  const Tensor z = st.bc.sample_latent(rng, 8);
  Tape tape;
  tape.backward(distill_loss(tape, st.onestep, st.bc, s, z));
  CHECK(all_zero(st.bc.parameters()));
  CHECK_FALSE(all_zero(st.onestep.parameters()));
}

TEST_CASE("loss gradients match finite differences") {
  for (int seed = 0; seed < 3; ++seed) {
    for (IntegratorMode mode : {IntegratorMode::reflect_project, IntegratorMode::plain,
                                IntegratorMode::reflect_billiard}) {
      Rng rng(200 + seed);
      NoiseSpec spec;
      spec.integrator.mode = mode;
      spec.integrator.steps = 3;
      Stack st = make_stack(2, 2, {6}, rng, spec);
      amplify_output(st.ng.net(), 8.0);
      const Tensor s = uniform_matrix(5, 2, -1, 1, rng);
      const Tensor w = st.ng.sample_input(rng, 5);
      const Tensor z = st.bc.sample_latent(rng, 5);
      const Tensor a = uniform_matrix(5, 2, -1, 1, rng);
      const Tensor t = uniform_matrix(5, 1, 0, 1, rng);

      for (ActorRoute route : {ActorRoute::one_step, ActorRoute::bc_flow}) {
        // An unreflected generator can leave the BC source support.
        if (mode == IntegratorMode::plain && route == ActorRoute::bc_flow) continue;
        const auto r = check_gradients(st.ng.parameters(), [&](Tape& tp) {
          return actor_loss(tp, st.ng, st.onestep, st.bc, st.critic, s, w, route);
        });
        CHECK(r.max_rel_error <= 1e-6);
      }
      CHECK(check_gradients(st.bc.parameters(), [&](Tape& tp) {
              return bc_loss(tp, st.bc, s, a, z, t);
            }).max_rel_error <= 1e-6);
      CHECK(check_gradients(st.onestep.parameters(), [&](Tape& tp) {
              return distill_loss(tp, st.onestep, st.bc, s, z);
            }).max_rel_error <= 1e-6);
      CHECK(check_gradients(st.onestep.parameters(), [&](Tape& tp) {
              return regularized_actor_loss(tp, st.onestep, st.bc, st.critic, s, z, 0.7);
            }).max_rel_error <= 1e-6);
    }
  }
}

TEST_CASE("squashed gaussian and mlp generator gradients") {
  for (NoiseKind kind : {NoiseKind::mlp, NoiseKind::squashed_gaussian}) {
    Rng rng(9);
    NoiseSpec spec;
    spec.kind = kind;
    Stack st = make_stack(2, 2, {6}, rng, spec);
    const Tensor s = uniform_matrix(5, 2, -1, 1, rng);
    const Tensor w = st.ng.sample_input(rng, 5);
    const auto r = check_gradients(st.ng.parameters(), [&](Tape& tp) {
      return actor_loss(tp, st.ng, st.onestep, st.bc, st.critic, s, w);
    });
    CHECK(r.max_rel_error <= 1e-6);
  }
}

TEST_CASE("distill_loss is zero when the one-step net copies a linear flow") {
  Rng rng(10);
  BcFlowPolicy bc(1, 2, {8}, SourceKind::ball, BallDomain{2, std::sqrt(2.0)}, 10, rng);
  make_constant(bc.net(), {0.2, -0.1});
  OneStepPolicy onestep(1, 2, {}, rng);
  // Linear one-step net: [z, s] -> z + c.
  auto p = onestep.parameters();
  p[0]->value.fill(0.0);
  p[0]->value(0, 0) = 1.0;
  p[0]->value(1, 1) = 1.0;
  p[1]->value[0] = 0.2;
  p[1]->value[1] = -0.1;
  const Tensor z = bc.sample_latent(rng, 32);
  const Tensor s = uniform_matrix(32, 1, -1, 1, rng);
  Tape tape;
  CHECK(tape.value(distill_loss(tape, onestep, bc, s, z)).item() < 1e-28);
}

TEST_CASE("compose_policy_action with zero nets") {
  Rng rng(11);
  Stack st = make_stack(2, 2, {8}, rng);
  reform::testing::set_all(st.ng.parameters(), 0.0);
  const Tensor s = uniform_matrix(6, 2, -1, 1, rng);
  const Tensor w = st.ng.sample_input(rng, 6);
  const LatentAction la = compose_policy_action(st.ng, st.onestep, st.bc, s, w);
  CHECK(la.z == w);
  CHECK(la.action == st.onestep(w, s));
  const LatentAction lb =
      compose_policy_action(st.ng, st.onestep, st.bc, s, w, ActorRoute::bc_flow);
  CHECK(lb.action == st.bc.sample(w, s));
}
