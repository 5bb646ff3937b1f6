#pragma once

// Test-only oracles. Nothing here calls into the autodiff reverse pass; the
// helpers only evaluate losses forward and compare.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "reform/nn/mlp.hpp"
#include "reform/nn/tensor.hpp"

namespace reform::testing {

// Five-point central difference at step h:
//   f'(x) ~ (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / (12 h)
// Truncation error is O(h^4), which keeps sharply curved layer-norm and
// reflection paths within the 1e-6 budget at h = 1e-5.
inline double central_difference(double& x, const std::function<double()>& f, double h) {
  const double orig = x;
  x = orig + 2 * h;
  const double f2 = f();
  x = orig + h;
  const double f1 = f();
  x = orig - h;
  const double m1 = f();
  x = orig - 2 * h;
  const double m2 = f();
  x = orig;
  return (-f2 + 8.0 * f1 - 8.0 * m1 + m2) / (12.0 * h);
}

// Derivative of a scalar function with respect to every entry of every
// parameter value. The function must rebuild its forward pass on each call.
inline std::vector<std::vector<double>> finite_difference(
    const std::vector<nn::Parameter*>& params, const std::function<double()>& loss,
    double h = 1e-5) {
  std::vector<std::vector<double>> out;
  for (nn::Parameter* p : params) {
    std::vector<double> g(p->value.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = central_difference(p->value[i], loss, h);
    out.push_back(std::move(g));
  }
  return out;
}

// Same, for a free input tensor.
inline std::vector<double> finite_difference(nn::Tensor& x, const std::function<double()>& loss,
                                             double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = central_difference(x[i], loss, h);
  return g;
}

// |a - b| / max(|a|, |b|, floor). The floor keeps entries whose true value is
// ~0 from dividing rounding noise by rounding noise.
inline double relative_error(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double exact_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Straight re-implementation of the Mlp forward pass from its parameter list.
inline nn::Tensor naive_mlp_forward(const nn::Mlp& net, const nn::Tensor& input) {
  const auto params = net.parameters();
  const bool ln = net.spec().layer_norm;
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < input.rows(); ++r) {
    rows.emplace_back(input.row(r).begin(), input.row(r).end());
  }
  std::size_t k = 0;
  const std::size_t layers = net.spec().hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const nn::Tensor& w = params[k++]->value;
    const nn::Tensor& b = params[k++]->value;
    const nn::Tensor* gain = nullptr;
    const nn::Tensor* shift = nullptr;
    const bool hidden = l + 1 < layers;
    if (hidden && ln) {
      gain = &params[k++]->value;
      shift = &params[k++]->value;
    }
    for (auto& row : rows) {
      std::vector<double> next(w.cols());
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < w.rows(); ++i) acc += row[i] * w(i, j);
        next[j] = acc;
      }
      if (hidden) {
        if (gain) {
          double mu = 0.0;
          for (double v : next) mu += v;
          mu /= static_cast<double>(next.size());
          double var = 0.0;
          for (double v : next) var += (v - mu) * (v - mu);
          var /= static_cast<double>(next.size());
          for (std::size_t j = 0; j < next.size(); ++j) {
            next[j] = (next[j] - mu) / std::sqrt(var + 1e-6) * (*gain)[j] + (*shift)[j];
          }
        }
        for (double& v : next) v = exact_gelu(v);
      }
      row = std::move(next);
    }
  }
  nn::Tensor out = nn::Tensor::matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

}  // namespace reform::testing
