#pragma once

// Pointwise and reduction kernels shared by the solvers.
//
// Two implementations are kept side by side: `serial` is the plain reference
// loop, `parallel` is the OpenMP version. The unqualified entry points pick one
// by problem size. Parallel reductions sum fixed-size blocks and then combine
// the block partials in order, so results do not depend on the thread count.

#include <complex>
#include <cstddef>
#include <span>

namespace spulse::kernels {

using cplx = std::complex<double>;

namespace serial {
void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out);
void power(std::span<const double> a, int p, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void lincomb(std::span<const double> base, double alpha, std::span<const double> x, std::span<double> out);
void apply_symbol(std::span<const cplx> symbol, std::span<cplx> spec);
double sum(std::span<const double> a);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_norm2(std::span<const cplx> spec, std::span<const double> weights);
double max_abs(std::span<const double> a);
}  // namespace serial

namespace parallel {
void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out);
void power(std::span<const double> a, int p, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void lincomb(std::span<const double> base, double alpha, std::span<const double> x, std::span<double> out);
void apply_symbol(std::span<const cplx> symbol, std::span<cplx> spec);
double sum(std::span<const double> a);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_norm2(std::span<const cplx> spec, std::span<const double> weights);
double max_abs(std::span<const double> a);
}  // namespace parallel

/// Block length used by the parallel reductions.
inline constexpr std::size_t kReductionBlock = 512;

/// Sizes at or above this go to the OpenMP kernels.
std::size_t parallel_threshold() noexcept;
void set_parallel_threshold(std::size_t n) noexcept;

void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out);
void power(std::span<const double> a, int p, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void lincomb(std::span<const double> base, double alpha, std::span<const double> x, std::span<double> out);
void apply_symbol(std::span<const cplx> symbol, std::span<cplx> spec);
double sum(std::span<const double> a);
double dot(std::span<const double> a, std::span<const double> b);
double weighted_norm2(std::span<const cplx> spec, std::span<const double> weights);
double max_abs(std::span<const double> a);

}  // namespace spulse::kernels
