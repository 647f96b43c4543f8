#include "spulse/kernels.hpp"

#include <cmath>

namespace spulse::kernels::serial {

void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
}

void power(std::span<const double> a, int p, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = 1.0;
        for (int j = 0; j < p; ++j) v *= a[i];
        out[i] = v;
    }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

void lincomb(std::span<const double> base, double alpha, std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = base[i] + alpha * x[i];
}

void apply_symbol(std::span<const cplx> symbol, std::span<cplx> spec) {
    for (std::size_t m = 0; m < spec.size(); ++m) spec[m] *= symbol[m];
}

double sum(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v;
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double weighted_norm2(std::span<const cplx> spec, std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t m = 0; m < spec.size(); ++m) s += weights[m] * std::norm(spec[m]);
    return s;
}

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) {
        const double av = std::fabs(v);
        if (std::isnan(av)) return av;
        if (av > m) m = av;
    }
    return m;
}

}  // namespace spulse::kernels::serial
