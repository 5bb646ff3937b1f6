#include "reform/geometry/integrate.hpp"

#include <cmath>
#include <memory>

#include "reform/common/error.hpp"
#include "reform/geometry/ball.hpp"

namespace reform::geometry {

using nn::Tape;
using nn::Tensor;
using nn::Var;

std::string to_string(IntegratorMode mode) {
  switch (mode) {
    case IntegratorMode::plain: return "plain";
    case IntegratorMode::reflect_project: return "reflect-project";
    case IntegratorMode::reflect_cube: return "reflect-cube";
    case IntegratorMode::reflect_billiard: return "reflect-billiard";
  }
  return "unknown";
}

IntegratorMode integrator_mode_from_string(const std::string& name) {
  if (name == "plain") return IntegratorMode::plain;
  if (name == "reflect-project") return IntegratorMode::reflect_project;
  if (name == "reflect-cube") return IntegratorMode::reflect_cube;
  if (name == "reflect-billiard") return IntegratorMode::reflect_billiard;
  throw ConfigError("unknown integrator mode '" + name +
                    "' (expected plain, reflect-project, reflect-cube, reflect-billiard)");
}

namespace {

// Slack for points that sit on the sphere up to rounding.
constexpr double kContainTol = 1e-12;

Var velocity_step(Tape& tape, const VelocityField& field, Var z, std::size_t k,
                  const IntegratorConfig& cfg, IntegrationStats* stats) {
  const Var v = field(tape, static_cast<double>(k) * cfg.dt(), z);
  if (stats) ++stats->velocity_evaluations;
  const Tensor& vv = tape.value(v);
  const Tensor& zv = tape.value(z);
  if (vv.rows() != zv.rows() || vv.cols() != zv.cols()) {
    throw DimensionError("velocity field returned " + nn::shape_string(vv.shape()) +
                         " for iterate " + nn::shape_string(zv.shape()));
  }
  if (!vv.all_finite()) {
    throw NumericError("non-finite velocity at integration step " + std::to_string(k));
  }
  return nn::scale(tape, v, cfg.dt());
}

void check_steps(const IntegratorConfig& cfg) {
  if (cfg.steps == 0) throw ContractError("integrator needs at least one step");
}

void require_in_ball(const Tensor& z0, double radius) {
  for (std::size_t i = 0; i < z0.rows(); ++i) {
    if (norm(z0.row(i)) > radius * (1.0 + kContainTol)) {
      throw PreconditionError("initial point row " + std::to_string(i) + " has norm " +
                              std::to_string(norm(z0.row(i))) + " outside the ball of radius " +
                              std::to_string(radius));
    }
  }
}

void require_in_cube(const Tensor& z0) {
  for (std::size_t i = 0; i < z0.size(); ++i) {
    if (std::abs(z0[i]) > 1.0 + kContainTol) {
      throw PreconditionError("initial point entry " + std::to_string(i) +
                              " lies outside [-1, 1]");
    }
  }
}

}  // namespace

Var euler_integrate(Tape& tape, const VelocityField& field, Var z0, const IntegratorConfig& cfg,
                    IntegrationStats* stats, const StepObserver& observer) {
  check_steps(cfg);
  Var z = z0;
  std::vector<std::uint8_t> none;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const Var delta = velocity_step(tape, field, z, k, cfg, stats);
    const Var next = nn::add(tape, z, delta);
    if (observer) {
      none.assign(tape.value(z).rows(), 0);
      observer(k, tape.value(z), tape.value(next), none);
    }
    z = next;
  }
  return z;
}

Var reflected_euler_integrate(Tape& tape, const VelocityField& field, Var z0,
                              const IntegratorConfig& cfg, IntegrationStats* stats,
                              const StepObserver& observer) {
  check_steps(cfg);
  require_in_ball(tape.value(z0), cfg.radius);
  Var z = z0;
  std::vector<std::uint8_t> fired;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const Var delta = velocity_step(tape, field, z, k, cfg, stats);
    const Var next =
        reflect_project(tape, z, delta, cfg.radius, cfg.stop_gradient_reflection, &fired);
    if (stats) {
      for (auto f : fired) stats->corrections += f;
    }
    if (observer) observer(k, tape.value(z), tape.value(next), fired);
    z = next;
  }
  return z;
}

Var integrate(Tape& tape, const VelocityField& field, Var z0, const IntegratorConfig& cfg,
              IntegrationStats* stats, const StepObserver& observer) {
  switch (cfg.mode) {
    case IntegratorMode::plain:
      return euler_integrate(tape, field, z0, cfg, stats, observer);
    case IntegratorMode::reflect_project:
      return reflected_euler_integrate(tape, field, z0, cfg, stats, observer);
    case IntegratorMode::reflect_cube:
    case IntegratorMode::reflect_billiard: {
      check_steps(cfg);
      const bool cube = cfg.mode == IntegratorMode::reflect_cube;
      if (cube) {
        require_in_cube(tape.value(z0));
      } else {
        require_in_ball(tape.value(z0), cfg.radius);
      }
      Var z = z0;
      std::vector<std::uint8_t> fired;
      for (std::size_t k = 0; k < cfg.steps; ++k) {
        const Var delta = velocity_step(tape, field, z, k, cfg, stats);
        Var next;
        if (cube) {
          const Var zhat = nn::add(tape, z, delta);
          const Tensor& zh = tape.value(zhat);
          fired.assign(zh.rows(), 0);
          for (std::size_t i = 0; i < zh.rows(); ++i) {
            for (double v : zh.row(i)) {
              if (std::abs(v) > 1.0) fired[i] = 1;
            }
          }
          next = reflect_cube(tape, zhat);
        } else {
          next = reflect_billiard(tape, z, delta, cfg.radius, &fired);
        }
        if (stats) {
          for (auto f : fired) stats->corrections += f;
        }
        if (observer) observer(k, tape.value(z), tape.value(next), fired);
        z = next;
      }
      return z;
    }
  }
  throw ContractError("integrate: unknown mode");
}

// ---- reflect_project -------------------------------------------------------

Var reflect_project(Tape& tape, Var z, Var delta, double radius, bool stop_gradient,
                    std::vector<std::uint8_t>* corrected) {
  const Tensor& zv = tape.value(z);
  const Tensor& dv = tape.value(delta);
  if (zv.rows() != dv.rows() || zv.cols() != dv.cols()) {
    throw DimensionError("reflect_project: iterate " + nn::shape_string(zv.shape()) +
                         " vs displacement " + nn::shape_string(dv.shape()));
  }
  const std::size_t rows = zv.rows(), cols = zv.cols();
  Tensor out = Tensor::matrix(rows, cols);
  std::vector<std::uint8_t> fired(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    double rho2 = 0.0, a = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double zh = zv(i, j) + dv(i, j);
      out(i, j) = zh;
      rho2 += zh * zh;
      a += zv(i, j) * zh;
    }
    if (std::sqrt(rho2) <= radius) continue;
    fired[i] = 1;
    // zh - <delta, n> n written as <z, n> n: the same point without the
    // cancellation in 1 - <delta, zh> / rho^2 when the push is large.
    const double k = a / rho2;
    for (std::size_t j = 0; j < cols; ++j) out(i, j) *= k;
    // When z is parallel to n the exact result has ||z|| and rounding can
    // land an ulp outside it; shrink back so the step never grows the norm.
    const double nz = norm(zv.row(i));
    for (double no = norm(out.row(i)); no > nz; no = norm(out.row(i))) {
      const double shrink = std::nextafter(nz / no, 0.0);
      for (std::size_t j = 0; j < cols; ++j) out(i, j) *= shrink;
    }
  }
  if (corrected) *corrected = fired;
  const std::uint32_t zi = z.id, di = delta.id;
  const bool rg = tape.needs_grad(zi) || tape.needs_grad(di);
  return tape.record(std::move(out), rg,
                     [zi, di, rows, cols, stop_gradient, fired = std::move(fired)](
                         Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& zv = tp.value_of(zi);
    const Tensor& dv = tp.value_of(di);
    std::vector<double> dzh(cols), ddel(cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (!fired[i] || stop_gradient) {
        for (std::size_t j = 0; j < cols; ++j) dzh[j] = g(i, j), ddel[j] = 0.0;
      } else {
        double rho2 = 0.0, c = 0.0, gz = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const double zh = zv(i, j) + dv(i, j);
          rho2 += zh * zh;
          c += dv(i, j) * zh;
          gz += g(i, j) * zh;
        }
        // out = zh - (delta . zh) zh / rho^2
        for (std::size_t j = 0; j < cols; ++j) {
          const double zh = zv(i, j) + dv(i, j);
          dzh[j] = g(i, j) - (gz / rho2) * dv(i, j) - (c / rho2) * g(i, j) +
                   (2.0 * c * gz / (rho2 * rho2)) * zh;
          ddel[j] = -(gz / rho2) * zh;
        }
      }
      if (tp.needs_grad(zi)) {
        Tensor& d = tp.grad_of(zi);
        for (std::size_t j = 0; j < cols; ++j) d(i, j) += dzh[j];
      }
      if (tp.needs_grad(di)) {
        Tensor& d = tp.grad_of(di);
        for (std::size_t j = 0; j < cols; ++j) d(i, j) += dzh[j] + ddel[j];
      }
    }
  });
}

// ---- reflect_cube ----------------------------------------------------------

double reflect_cube_value(double x) noexcept {
  double m = std::fmod(x + 1.0, 4.0);
  if (m < 0.0) m += 4.0;
  return 1.0 - std::abs(m - 2.0);
}

Var reflect_cube(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor y = Tensor::matrix(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = reflect_cube_value(xv[i]);
  const std::uint32_t xi = x.id;
  return tape.record(std::move(y), tape.needs_grad(xi), [xi](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value_of(xi);
    Tensor& d = tp.grad_of(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      double m = std::fmod(xv[i] + 1.0, 4.0);
      if (m < 0.0) m += 4.0;
      d[i] += m < 2.0 ? g[i] : -g[i];
    }
  });
}

// ---- reflect_billiard ------------------------------------------------------

Var reflect_billiard(Tape& tape, Var z, Var delta, double radius,
                     std::vector<std::uint8_t>* corrected) {
  using namespace nn;
  const Var zhat = add(tape, z, delta);
  const std::size_t rows = tape.value(zhat).rows();
  std::vector<std::uint8_t> inside(rows), outside(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    inside[i] = norm(tape.value(zhat).row(i)) <= radius ? 1 : 0;
    outside[i] = 1 - inside[i];
  }
  if (corrected) *corrected = outside;
  const Var ones = tape.constant(Tensor::matrix(rows, 1, 1.0));
  const Var zeros = tape.constant(Tensor::matrix(rows, 1, 0.0));

  // Hit fraction alpha in [0, 1] solves ||z + alpha delta|| = radius:
  // a alpha^2 + 2 b alpha + c = 0, a = |delta|^2, b = z.delta, c = |z|^2 - l^2.
  // Rows that stay inside get harmless stand-ins so no branch produces inf.
  const Var a = where_rows(tape, inside, ones, row_dot(tape, delta, delta));
  const Var b = row_dot(tape, z, delta);
  const Var c = minimum(tape, add_scalar(tape, row_dot(tape, z, z), -radius * radius), zeros);
  const Var disc = where_rows(tape, inside, ones, sub(tape, square(tape, b), mul(tape, a, c)));
  const Var alpha = div(tape, add(tape, scale(tape, b, -1.0), sqrt(tape, disc)), a);

  const Var hit = add(tape, z, mul_col(tape, delta, alpha));
  const Var normal = scale(tape, hit, 1.0 / radius);
  const Var rest = mul_col(tape, delta, add_scalar(tape, scale(tape, alpha, -1.0), 1.0));
  const Var rn = row_dot(tape, rest, normal);
  const Var mirrored = sub(tape, rest, mul_col(tape, normal, scale(tape, rn, 2.0)));
  const Var bounced = add(tape, hit, mirrored);

  std::vector<std::uint8_t> exits(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    exits[i] = !inside[i] && norm(tape.value(bounced).row(i)) > radius ? 1 : 0;
  }
  const Var len = where_rows(tape, exits, row_norm(tape, bounced), ones);
  const Var clipped = mul_col(tape, bounced, div(tape, scale(tape, ones, radius), len));
  const Var reflected = where_rows(tape, exits, clipped, bounced);
  return where_rows(tape, inside, zhat, reflected);
}

// ---- radial tanh squash ----------------------------------------------------

Var radial_tanh_squash(Tape& tape, Var u, double radius) {
  const Tensor& uv = tape.value(u);
  const std::size_t rows = uv.rows(), cols = uv.cols();
  Tensor y = Tensor::matrix(rows, cols);
  // y = u g(rho), g = l tanh(rho) / rho; h = g'(rho) / rho for the reverse pass.
  auto h = std::make_shared<std::vector<double>>(rows);
  auto gs = std::make_shared<std::vector<double>>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double rho = norm(uv.row(i));
    double g, hh;
    if (rho < 1e-3) {
      const double r2 = rho * rho;
      g = radius * (1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0);
      hh = radius * (-2.0 / 3.0 + 8.0 * r2 / 15.0);
    } else {
      const double th = std::tanh(rho);
      g = radius * th / rho;
      hh = radius * (rho * (1.0 - th * th) - th) / (rho * rho * rho);
    }
    (*gs)[i] = g;
    (*h)[i] = hh;
    for (std::size_t j = 0; j < cols; ++j) y(i, j) = uv(i, j) * g;
  }
  const std::uint32_t ui = u.id;
  return tape.record(std::move(y), tape.needs_grad(ui),
                     [ui, rows, cols, h, gs](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& uv = tp.value_of(ui);
    Tensor& d = tp.grad_of(ui);
    for (std::size_t i = 0; i < rows; ++i) {
      double gu = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gu += g(i, j) * uv(i, j);
      for (std::size_t j = 0; j < cols; ++j) {
        d(i, j) += g(i, j) * (*gs)[i] + uv(i, j) * (*h)[i] * gu;
      }
    }
  });
}

// ---- point references --------------------------------------------------------

std::vector<double> reflect_project_point(std::span<const double> z,
                                          std::span<const double> delta, double radius) {
  std::vector<double> zhat(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) zhat[j] = z[j] + delta[j];
  const double r = norm(zhat);
  if (r <= radius) return zhat;
  std::vector<double> n(z.size());
  double dn = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    n[j] = zhat[j] / r;
    dn += delta[j] * n[j];
  }
  for (std::size_t j = 0; j < z.size(); ++j) zhat[j] -= dn * n[j];
  return zhat;
}

std::vector<double> reflect_billiard_point(std::span<const double> z,
                                           std::span<const double> delta, double radius) {
  const std::size_t d = z.size();
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = z[j] + delta[j];
  if (norm(out) <= radius) return out;
  double a = 0.0, b = 0.0, c = -radius * radius;
  for (std::size_t j = 0; j < d; ++j) {
    a += delta[j] * delta[j];
    b += z[j] * delta[j];
    c += z[j] * z[j];
  }
  c = std::min(c, 0.0);
  const double alpha = (-b + std::sqrt(b * b - a * c)) / a;
  std::vector<double> hit(d), rest(d);
  double rn = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    hit[j] = z[j] + alpha * delta[j];
    rest[j] = (1.0 - alpha) * delta[j];
    rn += rest[j] * hit[j] / radius;
  }
  for (std::size_t j = 0; j < d; ++j) out[j] = hit[j] + rest[j] - 2.0 * rn * hit[j] / radius;
  const double len = norm(out);
  if (len > radius) {
    for (double& v : out) v *= radius / len;
  }
  return out;
}

}  // namespace reform::geometry
