#include "reform/geometry/ball.hpp"

#include <algorithm>

#include "reform/common/error.hpp"

namespace reform::geometry {

double norm(std::span<const double> z) noexcept {
  double acc = 0.0;
  for (double v : z) acc += v * v;
  return std::sqrt(acc);
}

bool BallDomain::contains(std::span<const double> z, double rel_tol) const {
  return norm(z) <= radius * (1.0 + rel_tol);
}

nn::Tensor sample_ball(const BallDomain& domain, Rng& rng, std::size_t n) {
  if (domain.dim == 0 || !(domain.radius > 0.0)) {
    throw ContractError("sample_ball: need dim >= 1 and radius > 0");
  }
  const std::size_t d = domain.dim;
  nn::Tensor out = nn::Tensor::matrix(n, d);
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.row(i);
    double len = 0.0;
    while (len == 0.0) {
      for (double& v : row) v = rng.normal();
      len = norm(row);
    }
    const double r = domain.radius * std::pow(rng.uniform(), inv_d);
    for (double& v : row) v *= r / len;
  }
  return out;
}

nn::Tensor sample_normal(std::size_t dim, Rng& rng, std::size_t n) {
  nn::Tensor out = nn::Tensor::matrix(n, dim);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

nn::Tensor sample_cube(std::size_t dim, Rng& rng, std::size_t n) {
  nn::Tensor out = nn::Tensor::matrix(n, dim);
  for (double& v : out.data()) v = rng.uniform(-1.0, 1.0);
  return out;
}

nn::Tensor sample_source(SourceKind kind, const BallDomain& domain, Rng& rng, std::size_t n) {
  switch (kind) {
    case SourceKind::ball: return sample_ball(domain, rng, n);
    case SourceKind::gaussian: return sample_normal(domain.dim, rng, n);
    case SourceKind::cube: return sample_cube(domain.dim, rng, n);
  }
  throw ContractError("sample_source: unknown source kind");
}

double max_row_norm(const nn::Tensor& points) noexcept {
  double m = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) m = std::max(m, norm(points.row(i)));
  return m;
}

}  // namespace reform::geometry
