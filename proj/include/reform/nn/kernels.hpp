#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the autodiff ops. Every kernel exists twice: the
// OpenMP version used by the networks, and a plain serial reference kept for
// tests and the benchmark. The OpenMP versions assign each output element to
// exactly one thread and accumulate in a fixed order, so results do not
// depend on the thread count.
//
// Layouts: x is rows x in, w is in x out, b and db have length out, y and dy
// are rows x out. All row-major.
namespace reform::nn::kernels {

// Below this many multiply-adds a kernel runs on the calling thread.
inline constexpr std::size_t kParallelWork = 1u << 16;

// y = x w + b
void affine_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y,
                    std::size_t rows, std::size_t in, std::size_t out);

// dx += dy w^T
void affine_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out);

// dw += x^T dy, db += column sums of dy
void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out);

// Exact GELU, x * Phi(x).
void gelu_forward(std::span<const double> x, std::span<double> y);
// dx += dy * gelu'(x)
void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);
// Same pair, with Phi(x) kept from the forward pass.
void gelu_forward(std::span<const double> x, std::span<double> y, std::span<double> cdf);
void gelu_backward(std::span<const double> x, std::span<const double> cdf,
                   std::span<const double> dy, std::span<double> dx);

double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;
double gelu_derivative_from_cdf(double x, double cdf) noexcept;

namespace serial {

void affine_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y,
                    std::size_t rows, std::size_t in, std::size_t out);
void affine_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out);
void affine_backward_params(std::span<const double> x, std::span<const double> dy,
                            std::span<double> dw, std::span<double> db, std::size_t rows,
                            std::size_t in, std::size_t out);
void gelu_forward(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

}  // namespace serial
}  // namespace reform::nn::kernels
