#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "reform/common/error.hpp"
#include "reform/geometry/ball.hpp"
#include "reform/geometry/integrate.hpp"
#include "reform/nn/mlp.hpp"
#include "support/oracles.hpp"

using namespace reform;
using namespace reform::geometry;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using reform::testing::finite_difference;
using reform::testing::relative_error;

namespace {

VelocityField constant_field(std::vector<double> c) {
  return [c](Tape& t, double, Var z) {
    const Tensor& zv = t.value(z);
    Tensor v = Tensor::matrix(zv.rows(), zv.cols());
    for (std::size_t i = 0; i < zv.rows(); ++i) {
      for (std::size_t j = 0; j < zv.cols(); ++j) v(i, j) = c[j];
    }
    return t.constant(std::move(v));
  };
}

// v(t, z) = net([t, z])
VelocityField mlp_field(nn::Mlp& net, bool trainable = true) {
  return [&net, trainable](Tape& t, double time, Var z) {
    const std::size_t rows = t.value(z).rows();
    std::vector<Var> parts{t.constant(Tensor::matrix(rows, 1, time)), z};
    return net.forward(t, nn::concat_cols(t, parts), trainable);
  };
}

Tensor point(std::initializer_list<double> v) { return Tensor::from_rows({v}); }

}  // namespace

TEST_CASE("sample_ball: containment and radial moments") {
  Rng rng(1);
  const Tensor z = sample_ball({2, 1.0}, rng, 100000);
  CHECK(max_row_norm(z) <= 1.0);
  double sq = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) sq += std::pow(norm(z.row(i)), 2);
  // E||z||^2 = d / (d + 2) l^2
  CHECK(std::abs(sq / 1e5 - 0.5) <= 0.01);

  const Tensor w = sample_ball({3, 2.0}, rng, 100000);
  std::size_t inner = 0;
  for (std::size_t i = 0; i < w.rows(); ++i) inner += norm(w.row(i)) <= 1.0;
  CHECK(std::abs(static_cast<double>(inner) / 1e5 - 0.125) <= 0.01);
}

TEST_CASE("sample_ball: radial CDF matches r^d") {
  for (std::size_t d : {1u, 2u, 8u}) {
    Rng rng(10 + d);
    const double l = 1.7;
    const Tensor z = sample_ball({d, l}, rng, 100000);
    std::vector<double> r(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) r[i] = norm(z.row(i)) / l;
    std::sort(r.begin(), r.end());
    double ks = 0.0;
    const double n = static_cast<double>(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double cdf = std::pow(r[i], static_cast<double>(d));
      ks = std::max({ks, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
    }
    CAPTURE(d);
    CHECK(ks <= 0.01);
  }
}

TEST_CASE("sample_ball: direction is isotropic in 2-D") {
  Rng rng(4);
  const Tensor z = sample_ball({2, 1.0}, rng, 40000);
  std::array<int, 8> bins{};
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const double a = std::atan2(z(i, 1), z(i, 0)) + M_PI;
    bins[std::min<std::size_t>(7, static_cast<std::size_t>(a / (2 * M_PI) * 8))]++;
  }
  for (int b : bins) CHECK(std::abs(b / 40000.0 - 0.125) < 0.01);
}

TEST_CASE("euler_integrate: closed-form fields") {
  IntegratorConfig cfg;
  Tape t;
  const Var z0 = t.constant(point({0.3, -0.2}));
  CHECK(t.value(euler_integrate(t, constant_field({0, 0}), z0, cfg)) == t.value(z0));
  const Tensor moved = t.value(euler_integrate(t, constant_field({0.5, -1.25}), z0, cfg));
  CHECK(moved(0, 0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(moved(0, 1) == doctest::Approx(-1.45).epsilon(1e-14));

  // v(t, z) = z from z0 = 1: z_{k+1} = 1.1 z_k
  VelocityField identity = [](Tape&, double, Var z) { return z; };
  const Tensor grown = t.value(euler_integrate(t, identity, t.constant(point({1.0})), cfg));
  double oracle = 1.0;
  for (int k = 0; k < 10; ++k) oracle = oracle + oracle * 0.1;
  CHECK(grown(0, 0) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(grown(0, 0) == doctest::Approx(2.5937424601).epsilon(1e-10));
}

TEST_CASE("euler_integrate: velocity sees the current iterate and time") {
  std::vector<double> times;
  VelocityField probe = [&](Tape& t, double time, Var z) {
    times.push_back(time);
    return nn::scale(t, z, 0.0);
  };
  IntegratorConfig cfg{4};
  Tape t;
  euler_integrate(t, probe, t.constant(point({1.0})), cfg);
  CHECK(times == std::vector<double>{0.0, 0.25, 0.5, 0.75});
}

TEST_CASE("euler_integrate: non-finite velocity names the step") {
  int calls = 0;
  VelocityField bad = [&](Tape& t, double, Var z) {
    const double v = ++calls == 3 ? std::numeric_limits<double>::infinity() : 0.0;
    return t.constant(Tensor::matrix(t.value(z).rows(), t.value(z).cols(), v));
  };
  Tape t;
  try {
    euler_integrate(t, bad, t.constant(point({0.0})), IntegratorConfig{});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
}

TEST_CASE("reflect_project: worked single steps") {
  const double l = 1.0;
  auto step = [&](Tensor z, Tensor d) {
    Tape t;
    std::vector<std::uint8_t> fired;
    const Tensor out = t.value(reflect_project(t, t.constant(z), t.constant(d), l, false, &fired));
    return std::pair{out, fired[0]};
  };
  {
    auto [out, fired] = step(point({0.8, 0.0}), point({0.5, 0.0}));
    CHECK(fired == 1);
    // equals <z_k, n> n with n = (1, 0)
    CHECK(out(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(out(0, 1) == 0.0);
  }
  {
    auto [out, fired] = step(point({0.0, 0.0}), point({0.3, 0.4}));
    CHECK(fired == 0);
    CHECK(out == point({0.3, 0.4}));
  }
  {
    auto [out, fired] = step(point({0.0, 0.6}), point({0.9, 0.9}));
    CHECK(fired == 1);
    // hand-applied: zhat = (0.9, 1.5), n = zhat / |zhat|, <z, n> n
    const double r = std::sqrt(0.81 + 2.25);
    const double zn = 0.6 * 1.5 / r;
    CHECK(out(0, 0) == doctest::Approx(zn * 0.9 / r).epsilon(1e-14));
    CHECK(out(0, 1) == doctest::Approx(zn * 1.5 / r).epsilon(1e-14));
    CHECK(out(0, 0) == doctest::Approx(0.2647).epsilon(1e-3));
    CHECK(out(0, 1) == doctest::Approx(0.4412).epsilon(1e-3));
    CHECK(norm(out.row(0)) == doctest::Approx(0.5145).epsilon(1e-3));
    CHECK(norm(out.row(0)) <= 0.6);
  }
}

TEST_CASE("reflect_project: boundary point with tangential motion stays put") {
  Tape t;
  // On the sphere, zero outward displacement: non-strict test keeps zhat.
  const Tensor out = t.value(
      reflect_project(t, t.constant(point({1.0, 0.0})), t.constant(point({0.0, 0.0})), 1.0));
  CHECK(out == point({1.0, 0.0}));
}

TEST_CASE("reflect_project: tape op agrees with the point reference") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng.below(6);
    const double l = rng.uniform(0.2, 3.0);
    const Tensor z = sample_ball({d, l}, rng, 1);
    Tensor delta = Tensor::matrix(1, d);
    for (double& v : delta.data()) v = rng.uniform(-2 * l, 2 * l);
    Tape t;
    const Tensor out = t.value(reflect_project(t, t.constant(z), t.constant(delta), l));
    const auto ref = reflect_project_point(z.row(0), delta.row(0), l);
    for (std::size_t j = 0; j < d; ++j) CHECK(out(0, j) == doctest::Approx(ref[j]).epsilon(1e-13));
  }
}

TEST_CASE("reflect_project: fused gradient equals the composed-primitive gradient") {
  // Second route: the same formula written with generic tape ops.
  auto composed = [](Tape& t, Var z, Var delta, double l) {
    const Var zhat = nn::add(t, z, delta);
    const Var rho = nn::row_norm(t, zhat);
    const Var n = nn::mul_col(t, zhat, nn::div(t, t.constant(Tensor::matrix(
                                                     t.value(rho).rows(), 1, 1.0)), rho));
    const Var proj = nn::sub(t, zhat, nn::mul_col(t, n, nn::row_dot(t, delta, n)));
    std::vector<std::uint8_t> inside(t.value(rho).rows());
    for (std::size_t i = 0; i < inside.size(); ++i) inside[i] = t.value(rho)[i] <= l;
    return nn::where_rows(t, inside, zhat, proj);
  };
  Rng rng(8);
  const std::size_t rows = 64, d = 3;
  const double l = 1.3;
  const Tensor z = sample_ball({d, l}, rng, rows);
  Tensor delta = Tensor::matrix(rows, d);
  for (double& v : delta.data()) v = rng.uniform(-1.5, 1.5);
  Tensor weights = Tensor::matrix(rows, d);
  for (double& v : weights.data()) v = rng.uniform(-1, 1);

  Tape a, b;
  const Var za = a.variable(z), da = a.variable(delta);
  a.backward(nn::sum(a, nn::mul(a, reflect_project(a, za, da, l), a.constant(weights))));
  const Var zb = b.variable(z), db = b.variable(delta);
  b.backward(nn::sum(b, nn::mul(b, composed(b, zb, db, l), b.constant(weights))));
  const Tensor gza = a.grad(za), gzb = b.grad(zb), gda = a.grad(da), gdb = b.grad(db);
  for (std::size_t i = 0; i < gza.size(); ++i) {
    CHECK(gza[i] == doctest::Approx(gzb[i]).epsilon(1e-12));
    CHECK(gda[i] == doctest::Approx(gdb[i]).epsilon(1e-12));
  }
}

TEST_CASE("reflected_euler_integrate: containment under adversarial fields") {
  for (std::size_t d : {2u, 8u}) {
    for (double l : {1.0, std::sqrt(static_cast<double>(d))}) {
      Rng rng(d * 31 + static_cast<std::uint64_t>(l * 100));
      IntegratorConfig cfg{10, IntegratorMode::reflect_project, l};
      Tape t;
      const Tensor w = sample_ball({d, l}, rng, 2000);
      // radial outward field of speed 10 and a huge constant push
      VelocityField outward = [](Tape& tp, double, Var z) {
        const Tensor& zv = tp.value(z);
        Tensor v = Tensor::matrix(zv.rows(), zv.cols());
        for (std::size_t i = 0; i < zv.rows(); ++i) {
          const double r = std::max(norm(zv.row(i)), 1e-300);
          for (std::size_t j = 0; j < zv.cols(); ++j) v(i, j) = 10.0 * zv(i, j) / r;
        }
        return tp.constant(std::move(v));
      };
      std::vector<double> big(d, 50.0);
      for (const auto& field : {outward, constant_field(big)}) {
        double worst = 0.0;
        StepObserver track = [&](std::size_t, const Tensor&, const Tensor& after,
                                 std::span<const std::uint8_t>) {
          worst = std::max(worst, max_row_norm(after));
        };
        const Tensor out = t.value(reflected_euler_integrate(t, field, t.constant(w), cfg,
                                                             nullptr, track));
        CHECK(max_row_norm(out) <= l * (1 + 1e-12));
        CHECK(worst <= l * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("reflected_euler_integrate: contraction whenever the correction fires") {
  Rng rng(17);
  nn::Mlp net("v", nn::MlpSpec{4, {16, 16}, 3, false}, rng);
  for (auto* p : net.parameters()) {
    for (double& v : p->value.data()) v *= 4.0;
  }
  IntegratorConfig cfg{10, IntegratorMode::reflect_project, 1.0};
  std::size_t firings = 0, violations = 0;
  StepObserver check = [&](std::size_t, const Tensor& before, const Tensor& after,
                           std::span<const std::uint8_t> fired) {
    for (std::size_t i = 0; i < fired.size(); ++i) {
      if (!fired[i]) continue;
      ++firings;
      violations += norm(after.row(i)) > norm(before.row(i));
    }
  };
  Tape t;
  reflected_euler_integrate(t, mlp_field(net, false), t.constant(sample_ball({3, 1.0}, rng, 500)),
                            cfg, nullptr, check);
  CHECK(firings > 100);
  CHECK(violations == 0);
}

TEST_CASE("reflected_euler_integrate: same number of velocity evaluations as plain Euler") {
  Rng rng(2);
  nn::Mlp net("v", nn::MlpSpec{3, {8}, 2, false}, rng);
  for (std::size_t n : {1u, 5u, 10u, 32u}) {
    IntegrationStats plain, reflected;
    Tape t;
    const Var w = t.constant(sample_ball({2, 1.0}, rng, 16));
    euler_integrate(t, mlp_field(net), w, IntegratorConfig{n}, &plain);
    reflected_euler_integrate(t, mlp_field(net), w,
                              IntegratorConfig{n, IntegratorMode::reflect_project, 1.0},
                              &reflected);
    CHECK(plain.velocity_evaluations == n);
    CHECK(reflected.velocity_evaluations == n);
  }
}

TEST_CASE("reflected_euler_integrate: start outside the ball is a precondition error") {
  Tape t;
  CHECK_THROWS_AS(reflected_euler_integrate(t, constant_field({0, 0}),
                                            t.constant(point({1.2, 0.0})),
                                            IntegratorConfig{10, IntegratorMode::reflect_project,
                                                             1.0}),
                  PreconditionError);
}

TEST_CASE("integrators: d z_N / d z0 and d z_N / d theta match finite differences") {
  for (auto mode : {IntegratorMode::plain, IntegratorMode::reflect_project,
                    IntegratorMode::reflect_billiard}) {
    Rng rng(41);
    nn::Mlp net("v", nn::MlpSpec{3, {8, 8}, 2, false}, rng);
    for (auto* p : net.parameters()) {
      for (double& v : p->value.data()) v *= 3.0;
    }
    IntegratorConfig cfg{10, mode, 1.0};
    Tensor z0 = sample_ball({2, 0.9}, rng, 6);
    Tensor weights = Tensor::matrix(6, 2);
    for (double& v : weights.data()) v = rng.uniform(-1, 1);
    auto loss_value = [&] {
      Tape t;
      const Var out = integrate(t, mlp_field(net), t.constant(z0), cfg);
      return t.value(nn::sum(t, nn::mul(t, out, t.constant(weights)))).item();
    };
    auto params = net.parameters();
    nn::zero_grads(params);
    Tape t;
    const Var zv = t.variable(z0);
    IntegrationStats stats;
    const Var out = integrate(t, mlp_field(net), zv, cfg, &stats);
    t.backward(nn::sum(t, nn::mul(t, out, t.constant(weights))));
    if (mode != IntegratorMode::plain) CHECK(stats.corrections > 0);
    const Tensor gz = t.grad(zv);
    const auto fdz = finite_difference(z0, loss_value);
    CAPTURE(to_string(mode));
    for (std::size_t i = 0; i < fdz.size(); ++i) {
      CAPTURE(i);
      CAPTURE(gz[i]);
      CAPTURE(fdz[i]);
      CHECK(relative_error(gz[i], fdz[i]) <= 1e-6);
    }
    const auto fdp = finite_difference(params, loss_value);
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < fdp[k].size(); ++i) {
        CHECK(relative_error(params[k]->grad[i], fdp[k][i]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("reflect_project: stop-gradient flag passes the raw Euler gradient") {
  Tape t;
  const Var z = t.variable(point({0.8, 0.0}));
  const Var d = t.variable(point({0.5, 0.1}));
  t.backward(nn::sum(t, reflect_project(t, z, d, 1.0, /*stop_gradient=*/true)));
  CHECK(t.grad(z) == point({1.0, 1.0}));
  CHECK(t.grad(d) == point({1.0, 1.0}));
}

TEST_CASE("reflect_cube: modular fold") {
  CHECK(reflect_cube_value(0.5) == 0.5);
  CHECK(reflect_cube_value(1.3) == doctest::Approx(0.7).epsilon(1e-14));
  // non-negative modulo: (-2) mod 4 = 2, so 1 - |2 - 2| = 1
  CHECK(reflect_cube_value(-3.0) == 1.0);
  CHECK(reflect_cube_value(-1.2) == doctest::Approx(-0.8).epsilon(1e-14));
  CHECK(reflect_cube_value(5.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(reflect_cube_value(3.0) == doctest::Approx(-1.0).epsilon(1e-14));
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(-50, 50);
    const double y = reflect_cube_value(x);
    CHECK(y >= -1.0);
    CHECK(y <= 1.0);
    if (std::abs(x) <= 1.0) CHECK(y == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("reflect_cube: integrator keeps iterates in the cube") {
  Rng rng(12);
  IntegratorConfig cfg{10, IntegratorMode::reflect_cube, 1.0};
  Tape t;
  const Tensor out = t.value(integrate(t, constant_field({7.3, -2.9, 0.4}),
                                       t.constant(sample_cube(3, rng, 100)), cfg));
  for (double v : out.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(integrate(t, constant_field({0, 0}), t.constant(point({1.5, 0})), cfg),
                  PreconditionError);
}

TEST_CASE("reflect_billiard: worked single steps") {
  auto step = [](Tensor z, Tensor d, double l) {
    Tape t;
    return t.value(reflect_billiard(t, t.constant(z), t.constant(d), l));
  };
  // no hit: plain Euler
  CHECK(step(point({0.1, 0.2}), point({0.3, -0.1}), 1.0)(0, 0) ==
        doctest::Approx(0.4).epsilon(1e-15));
  // 1-D mirror: hit (1, 0) after 0.5, remaining 0.5 comes back
  const Tensor m = step(point({0.5, 0.0}), point({1.0, 0.0}), 1.0);
  CHECK(m(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(m(0, 1) == doctest::Approx(0.0));
  // tangential graze from the boundary stays on the boundary
  const Tensor g = step(point({1.0, 0.0}), point({0.0, 0.3}), 1.0);
  CHECK(norm(g.row(0)) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("reflect_billiard: tape op agrees with the point reference and stays inside") {
  Rng rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = 1 + rng.below(5);
    const double l = rng.uniform(0.3, 2.5);
    const Tensor z = sample_ball({d, l}, rng, 1);
    Tensor delta = Tensor::matrix(1, d);
    for (double& v : delta.data()) v = rng.uniform(-3 * l, 3 * l);
    Tape t;
    const Tensor out = t.value(reflect_billiard(t, t.constant(z), t.constant(delta), l));
    const auto ref = reflect_billiard_point(z.row(0), delta.row(0), l);
    for (std::size_t j = 0; j < d; ++j) CHECK(out(0, j) == doctest::Approx(ref[j]).epsilon(1e-12));
    CHECK(norm(out.row(0)) <= l * (1 + 1e-12));
  }
}

TEST_CASE("radial_tanh_squash: values, containment and gradient") {
  Rng rng(14);
  Tensor u = Tensor::matrix(8, 3);
  for (double& v : u.data()) v = rng.uniform(-3, 3);
  u(0, 0) = 1e-5, u(0, 1) = -2e-5, u(0, 2) = 0.0;  // series branch
  const double l = 1.7;
  Tape t;
  const Var uv = t.variable(u);
  const Var y = radial_tanh_squash(t, uv, l);
  for (std::size_t i = 0; i < 8; ++i) {
    const double r = norm(u.row(i));
    CHECK(norm(t.value(y).row(i)) == doctest::Approx(std::tanh(r) * l).epsilon(1e-12));
    CHECK(norm(t.value(y).row(i)) <= l);
  }
  Tensor w = Tensor::matrix(8, 3);
  for (double& v : w.data()) v = rng.uniform(-1, 1);
  t.backward(nn::sum(t, nn::mul(t, y, t.constant(w))));
  const auto fd = finite_difference(u, [&] {
    Tape s;
    return s.value(nn::sum(s, nn::mul(s, radial_tanh_squash(s, s.constant(u), l),
                                      s.constant(w)))).item();
  });
  const Tensor g = t.grad(uv);
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(relative_error(g[i], fd[i]) <= 1e-6);
}
