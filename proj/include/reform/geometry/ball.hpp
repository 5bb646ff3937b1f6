#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "reform/common/rng.hpp"
#include "reform/nn/tensor.hpp"

namespace reform::geometry {

// Closed ball { z in R^d : ||z|| <= radius }.
struct BallDomain {
  std::size_t dim = 1;
  double radius = 1.0;

  // Smallest ball containing the box [-1, 1]^d.
  static BallDomain enclosing_unit_box(std::size_t d) {
    return {d, std::sqrt(static_cast<double>(d))};
  }

  // ||z|| <= radius * (1 + rel_tol)
  bool contains(std::span<const double> z, double rel_tol = 0.0) const;
};

// Source distributions a latent can be drawn from.
enum class SourceKind { ball, gaussian, cube };

// Uniform on the ball: isotropic direction, radius = l * u^(1/d).
nn::Tensor sample_ball(const BallDomain& domain, Rng& rng, std::size_t n);
// Standard normal N(0, I_d).
nn::Tensor sample_normal(std::size_t dim, Rng& rng, std::size_t n);
// Uniform on [-1, 1]^d.
nn::Tensor sample_cube(std::size_t dim, Rng& rng, std::size_t n);

nn::Tensor sample_source(SourceKind kind, const BallDomain& domain, Rng& rng, std::size_t n);

double norm(std::span<const double> z) noexcept;
double max_row_norm(const nn::Tensor& points) noexcept;

}  // namespace reform::geometry
