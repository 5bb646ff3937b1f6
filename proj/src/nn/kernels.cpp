#include "reform/nn/kernels.hpp"

#pragma GCC diagnostic ignored "-Wpsabi"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>
#include <numbers>

namespace reform::nn::kernels {

double gelu(double x) noexcept { return 0.5 * x * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double gelu_derivative(double x) noexcept {
  return gelu_derivative_from_cdf(x, 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0));
}

double gelu_derivative_from_cdf(double x, double cdf) noexcept {
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

namespace {

// The affine kernels work on register tiles of kRows rows by a few vectors of
// columns. Every tile accumulates over the reduction index in the same order
// as the serial reference, and no multiply-add is fused, so all code paths
// agree bit for bit. An AVX2 build of the same template is picked at run time
// when the CPU supports it.
constexpr std::size_t kRows = 4;
constexpr std::size_t kVecs = 2;

using v2d = double __attribute__((vector_size(16)));
using v4d = double __attribute__((vector_size(32)));

template <class V>
constexpr std::size_t lanes = sizeof(V) / sizeof(double);

template <class V>
[[gnu::always_inline]] inline V load(const double* p) {
  V v;
  std::memcpy(&v, p, sizeof(V));
  return v;
}

template <class V>
[[gnu::always_inline]] inline void store(double* p, V v) {
  std::memcpy(p, &v, sizeof(V));
}

template <class V>
[[gnu::always_inline]] inline V splat(double x) {
  return x - V{};
}

template <class V>
[[gnu::always_inline]] inline void forward_rows(const double* xp, const double* wp,
                                                const double* bp, double* yp, std::size_t i0,
                                                std::size_t ni, std::size_t in,
                                                std::size_t out) {
  constexpr std::size_t C = kVecs * lanes<V>;
  std::size_t j0 = 0;
  if (ni == kRows) {
    for (; j0 + C <= out; j0 += C) {
      V acc[kRows][kVecs];
      for (std::size_t c = 0; c < kVecs; ++c) {
        const V bv = load<V>(bp + j0 + c * lanes<V>);
        for (std::size_t r = 0; r < kRows; ++r) acc[r][c] = bv;
      }
      for (std::size_t k = 0; k < in; ++k) {
        V wv[kVecs];
        for (std::size_t c = 0; c < kVecs; ++c) wv[c] = load<V>(wp + k * out + j0 + c * lanes<V>);
        for (std::size_t r = 0; r < kRows; ++r) {
          const V xv = splat<V>(xp[(i0 + r) * in + k]);
          for (std::size_t c = 0; c < kVecs; ++c) acc[r][c] += xv * wv[c];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t c = 0; c < kVecs; ++c) {
          store(yp + (i0 + r) * out + j0 + c * lanes<V>, acc[r][c]);
        }
      }
    }
  }
  for (std::size_t r = 0; r < ni; ++r) {
    const double* xi = xp + (i0 + r) * in;
    for (std::size_t j = j0; j < out; ++j) {
      double acc = bp[j];
      for (std::size_t k = 0; k < in; ++k) acc += xi[k] * wp[k * out + j];
      yp[(i0 + r) * out + j] = acc;
    }
  }
}

// wt is w transposed (out x in).
template <class V>
[[gnu::always_inline]] inline void backward_input_rows(const double* dyp, const double* wtp,
                                                       double* dxp, std::size_t i0,
                                                       std::size_t ni, std::size_t in,
                                                       std::size_t out) {
  constexpr std::size_t C = kVecs * lanes<V>;
  std::size_t k0 = 0;
  if (ni == kRows) {
    for (; k0 + C <= in; k0 += C) {
      V acc[kRows][kVecs];
      for (auto& row : acc) {
        for (auto& a : row) a = V{};
      }
      for (std::size_t j = 0; j < out; ++j) {
        V wv[kVecs];
        for (std::size_t c = 0; c < kVecs; ++c) wv[c] = load<V>(wtp + j * in + k0 + c * lanes<V>);
        for (std::size_t r = 0; r < kRows; ++r) {
          const V g = splat<V>(dyp[(i0 + r) * out + j]);
          for (std::size_t c = 0; c < kVecs; ++c) acc[r][c] += g * wv[c];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t c = 0; c < kVecs; ++c) {
          double* d = dxp + (i0 + r) * in + k0 + c * lanes<V>;
          store(d, load<V>(d) + acc[r][c]);
        }
      }
    }
  }
  for (std::size_t r = 0; r < ni; ++r) {
    const double* dyi = dyp + (i0 + r) * out;
    for (std::size_t k = k0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) acc += dyi[j] * wtp[j * in + k];
      dxp[(i0 + r) * in + k] += acc;
    }
  }
}

template <class V>
[[gnu::always_inline]] inline void backward_params_rows(const double* xp, const double* dyp,
                                                        double* dwp, std::size_t k0,
                                                        std::size_t nk, std::size_t rows,
                                                        std::size_t in, std::size_t out) {
  constexpr std::size_t C = kVecs * lanes<V>;
  std::size_t j0 = 0;
  if (nk == kRows) {
    for (; j0 + C <= out; j0 += C) {
      V acc[kRows][kVecs];
      for (auto& row : acc) {
        for (auto& a : row) a = V{};
      }
      for (std::size_t i = 0; i < rows; ++i) {
        V dv[kVecs];
        for (std::size_t c = 0; c < kVecs; ++c) dv[c] = load<V>(dyp + i * out + j0 + c * lanes<V>);
        for (std::size_t r = 0; r < kRows; ++r) {
          const V xv = splat<V>(xp[i * in + k0 + r]);
          for (std::size_t c = 0; c < kVecs; ++c) acc[r][c] += xv * dv[c];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t c = 0; c < kVecs; ++c) {
          double* d = dwp + (k0 + r) * out + j0 + c * lanes<V>;
          store(d, load<V>(d) + acc[r][c]);
        }
      }
    }
  }
  for (std::size_t r = 0; r < nk; ++r) {
    const std::size_t k = k0 + r;
    for (std::size_t j = j0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += xp[i * in + k] * dyp[i * out + j];
      dwp[k * out + j] += acc;
    }
  }
}

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define REFORM_HAVE_AVX2_PATH 1
__attribute__((target("avx2"))) void forward_avx2(const double* x, const double* w,
                                                  const double* b, double* y, std::size_t i0,
                                                  std::size_t ni, std::size_t in,
                                                  std::size_t out) {
  forward_rows<v4d>(x, w, b, y, i0, ni, in, out);
}
__attribute__((target("avx2"))) void backward_input_avx2(const double* dy, const double* wt,
                                                         double* dx, std::size_t i0,
                                                         std::size_t ni, std::size_t in,
                                                         std::size_t out) {
  backward_input_rows<v4d>(dy, wt, dx, i0, ni, in, out);
}
__attribute__((target("avx2"))) void backward_params_avx2(const double* x, const double* dy,
                                                          double* dw, std::size_t k0,
                                                          std::size_t nk, std::size_t rows,
                                                          std::size_t in, std::size_t out) {
  backward_params_rows<v4d>(x, dy, dw, k0, nk, rows, in, out);
}
#endif

bool use_avx2() {
#ifdef REFORM_HAVE_AVX2_PATH
  static const bool yes = __builtin_cpu_supports("avx2");
  return yes;
#else
  return false;
#endif
}

}  // namespace

void affine_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y,
                    std::size_t rows, std::size_t in, std::size_t out) {
  const double* xp = x.data();
  const double* wp = w.data();
  const double* bp = b.data();
  double* yp = y.data();
  const bool par = rows * in * out >= kParallelWork;
  const bool avx2 = use_avx2();
  const auto blocks = static_cast<std::ptrdiff_t>((rows + kRows - 1) / kRows);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t rb = 0; rb < blocks; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * kRows;
    const std::size_t ni = std::min(kRows, rows - i0);
#ifdef REFORM_HAVE_AVX2_PATH
    if (avx2) {
      forward_avx2(xp, wp, bp, yp, i0, ni, in, out);
      continue;
    }
#endif
    forward_rows<v2d>(xp, wp, bp, yp, i0, ni, in, out);
  }
  (void)avx2;
}

void affine_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out) {
  std::vector<double> wt(in * out);
  for (std::size_t k = 0; k < in; ++k) {
    for (std::size_t j = 0; j < out; ++j) wt[j * in + k] = w[k * out + j];
  }
  const double* dyp = dy.data();
  const double* wtp = wt.data();
  double* dxp = dx.data();
  const bool par = rows * in * out >= kParallelWork;
  const bool avx2 = use_avx2();
  const auto blocks = static_cast<std::ptrdiff_t>((rows + kRows - 1) / kRows);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t rb = 0; rb < blocks; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * kRows;
    const std::size_t ni = std::min(kRows, rows - i0);
#ifdef REFORM_HAVE_AVX2_PATH
    if (avx2) {
      backward_input_avx2(dyp, wtp, dxp, i0, ni, in, out);
      continue;
    }
#endif
    backward_input_rows<v2d>(dyp, wtp, dxp, i0, ni, in, out);
  }
  (void)avx2;
}

void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out) {
  const double* xp = x.data();
  const double* dyp = dy.data();
  double* dwp = dw.data();
  const bool par = rows * in * out >= kParallelWork;
  const bool avx2 = use_avx2();
  const auto blocks = static_cast<std::ptrdiff_t>((in + kRows - 1) / kRows);
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t kb = 0; kb < blocks; ++kb) {
    const std::size_t k0 = static_cast<std::size_t>(kb) * kRows;
    const std::size_t nk = std::min(kRows, in - k0);
#ifdef REFORM_HAVE_AVX2_PATH
    if (avx2) {
      backward_params_avx2(xp, dyp, dwp, k0, nk, rows, in, out);
      continue;
    }
#endif
    backward_params_rows<v2d>(xp, dyp, dwp, k0, nk, rows, in, out);
  }
  (void)avx2;
  for (std::size_t j = 0; j < out; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += dyp[i * out + j];
    db[j] += acc;
  }
}

void gelu_forward(std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork / 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = gelu(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork / 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_derivative(x[i]);
}

// Scaling by 0.5 is exact, so x * cdf matches gelu(x) bit for bit.
void gelu_forward(std::span<const double> x, std::span<double> y, std::span<double> cdf) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork / 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    cdf[i] = 0.5 * std::erfc(-x[i] * std::numbers::sqrt2 / 2.0);
    y[i] = x[i] * cdf[i];
  }
}

void gelu_backward(std::span<const double> x, std::span<const double> cdf,
                   std::span<const double> dy, std::span<double> dx) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork / 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_derivative_from_cdf(x[i], cdf[i]);
}

namespace serial {

void affine_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y,
                    std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < in; ++k) acc += x[i * in + k] * w[k * out + j];
      y[i * out + j] = acc;
    }
  }
}

void affine_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < out; ++j) acc += dy[i * out + j] * w[k * out + j];
      dx[i * in + k] += acc;
    }
  }
}

void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out) {
  for (std::size_t k = 0; k < in; ++k) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += x[i * in + k] * dy[i * out + j];
      dw[k * out + j] += acc;
    }
  }
  for (std::size_t j = 0; j < out; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += dy[i * out + j];
    db[j] += acc;
  }
}

void gelu_forward(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * gelu_derivative(x[i]);
}

}  // namespace serial
}  // namespace reform::nn::kernels
