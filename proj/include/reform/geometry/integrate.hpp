#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "reform/nn/tape.hpp"

namespace reform::geometry {

enum class IntegratorMode {
  plain,             // z_{k+1} = z_k + v dt
  reflect_project,   // Euler step, then remove the outward component on exit
  reflect_cube,      // Euler step, then modular fold into [-1, 1]^d
  reflect_billiard,  // Euler step with one mirror bounce off the sphere
};

std::string to_string(IntegratorMode mode);
IntegratorMode integrator_mode_from_string(const std::string& name);

struct IntegratorConfig {
  std::size_t steps = 10;
  IntegratorMode mode = IntegratorMode::plain;
  // Ball radius for reflect_project / reflect_billiard.
  double radius = 1.0;
  // Treat the reflect_project correction as a constant in the reverse pass.
  bool stop_gradient_reflection = false;

  double dt() const noexcept { return 1.0 / static_cast<double>(steps); }
};

// v(t, z); the state is captured by the callable. Returns a node with the
// same shape as z.
using VelocityField = std::function<nn::Var(nn::Tape&, double t, nn::Var z)>;

// Called after every step with the iterate before and after the step and a
// per-row flag telling whether the boundary correction fired.
using StepObserver = std::function<void(std::size_t step, const nn::Tensor& before,
                                        const nn::Tensor& after,
                                        std::span<const std::uint8_t> corrected)>;

struct IntegrationStats {
  std::size_t velocity_evaluations = 0;
  std::size_t corrections = 0;
};

// N Euler steps with the velocity evaluated at the current iterate,
// z_{k+1} = z_k + v(k dt, z_k) dt. Throws NumericError naming the step if the
// field returns a non-finite value.
nn::Var euler_integrate(nn::Tape& tape, const VelocityField& field, nn::Var z0,
                        const IntegratorConfig& cfg, IntegrationStats* stats = nullptr,
                        const StepObserver& observer = {});

// Same step count as euler_integrate; after each Euler step a point that left
// the ball has its outward displacement component removed along the exit
// normal. Requires ||z0|| <= radius (PreconditionError otherwise).
nn::Var reflected_euler_integrate(nn::Tape& tape, const VelocityField& field, nn::Var z0,
                                  const IntegratorConfig& cfg,
                                  IntegrationStats* stats = nullptr,
                                  const StepObserver& observer = {});

// Dispatches on cfg.mode.
nn::Var integrate(nn::Tape& tape, const VelocityField& field, nn::Var z0,
                  const IntegratorConfig& cfg, IntegrationStats* stats = nullptr,
                  const StepObserver& observer = {});

// ---- single-step ops on the tape -------------------------------------------

// z_hat = z + delta; rows with ||z_hat|| > radius become
// z_hat - <delta, n> n with n = z_hat / ||z_hat||. The optional mask receives
// one flag per row telling whether the correction fired.
nn::Var reflect_project(nn::Tape& tape, nn::Var z, nn::Var delta, double radius,
                        bool stop_gradient = false,
                        std::vector<std::uint8_t>* corrected = nullptr);

// Elementwise 1 - |((x + 1) mod 4) - 2| with a non-negative modulo.
nn::Var reflect_cube(nn::Tape& tape, nn::Var x);

// Advance to the sphere, mirror the leftover displacement about the normal at
// the hit point, and clip to the sphere if the bounce exits again. Composed
// from tape primitives.
nn::Var reflect_billiard(nn::Tape& tape, nn::Var z, nn::Var delta, double radius,
                         std::vector<std::uint8_t>* corrected = nullptr);

// u -> u / ||u|| * tanh(||u||) * radius, with the removable singularity at
// u = 0 handled by series.
nn::Var radial_tanh_squash(nn::Tape& tape, nn::Var u, double radius);

// ---- point references --------------------------------------------------------
// Straight-line double arithmetic for single points; tests check the tape ops
// against these.

std::vector<double> reflect_project_point(std::span<const double> z,
                                          std::span<const double> delta, double radius);
double reflect_cube_value(double x) noexcept;
std::vector<double> reflect_billiard_point(std::span<const double> z,
                                           std::span<const double> delta, double radius);

}  // namespace reform::geometry
