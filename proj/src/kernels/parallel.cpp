#include "spulse/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace spulse::kernels::parallel {

namespace {

using Index = std::ptrdiff_t;

Index ssize(std::size_t n) { return static_cast<Index>(n); }

std::size_t block_count(std::size_t n) { return (n + kReductionBlock - 1) / kReductionBlock; }

// Blocked reduction: partial[b] covers [b*B, (b+1)*B); partials are summed in order.
template <typename BlockFn>
double blocked_sum(std::size_t n, BlockFn&& block) {
    const std::size_t nb = block_count(n);
    std::vector<double> partial(nb, 0.0);
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < ssize(nb); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kReductionBlock;
        const std::size_t hi = std::min(n, lo + kReductionBlock);
        partial[static_cast<std::size_t>(b)] = block(lo, hi);
    }
    double s = 0.0;
    for (double p : partial) s += p;
    return s;
}

}  // namespace

void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    const Index n = ssize(out.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void power(std::span<const double> a, int p, std::span<double> out) {
    const Index n = ssize(out.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) {
        double v = 1.0;
        for (int j = 0; j < p; ++j) v *= a[i];
        out[i] = v;
    }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    const Index n = ssize(y.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void lincomb(std::span<const double> base, double alpha, std::span<const double> x, std::span<double> out) {
    const Index n = ssize(out.size());
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) out[i] = base[i] + alpha * x[i];
}

void apply_symbol(std::span<const cplx> symbol, std::span<cplx> spec) {
    const Index n = ssize(spec.size());
#pragma omp parallel for schedule(static)
    for (Index m = 0; m < n; ++m) spec[m] *= symbol[m];
}

double sum(std::span<const double> a) {
    return blocked_sum(a.size(), [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i];
        return s;
    });
}

double dot(std::span<const double> a, std::span<const double> b) {
    return blocked_sum(a.size(), [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
        return s;
    });
}

double weighted_norm2(std::span<const cplx> spec, std::span<const double> weights) {
    return blocked_sum(spec.size(), [&](std::size_t lo, std::size_t hi) {
        double s = 0.0;
        for (std::size_t m = lo; m < hi; ++m) s += weights[m] * std::norm(spec[m]);
        return s;
    });
}

double max_abs(std::span<const double> a) {
    const Index n = ssize(a.size());
    double m = 0.0;
    bool nan = false;
#pragma omp parallel for schedule(static) reduction(max : m) reduction(|| : nan)
    for (Index i = 0; i < n; ++i) {
        const double av = std::fabs(a[i]);
        if (std::isnan(av)) nan = true;
        else if (av > m) m = av;
    }
    return nan ? std::numeric_limits<double>::quiet_NaN() : m;
}

}  // namespace spulse::kernels::parallel
