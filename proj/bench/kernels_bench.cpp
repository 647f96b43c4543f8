// Serial reference kernels against their OpenMP counterparts across sizes.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "spulse/kernels.hpp"
#include "spulse/short_pulse.hpp"

namespace k = spulse::kernels;

namespace {

std::vector<double> ramp(std::size_t n, double phase) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::sin(0.001 * static_cast<double>(i) + phase);
    return v;
}

template <bool Parallel>
void BM_multiply(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = ramp(n, 0.1), b = ramp(n, 0.7);
    std::vector<double> out(n);
    for (auto _ : st) {
        Parallel ? k::parallel::multiply(a, b, out) : k::serial::multiply(a, b, out);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetBytesProcessed(static_cast<std::int64_t>(st.iterations() * 3 * n * sizeof(double)));
}

template <bool Parallel>
void BM_power3(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = ramp(n, 0.3);
    std::vector<double> out(n);
    for (auto _ : st) {
        Parallel ? k::parallel::power(a, 3, out) : k::serial::power(a, 3, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_dot(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = ramp(n, 0.2), b = ramp(n, 0.9);
    for (auto _ : st) benchmark::DoNotOptimize(Parallel ? k::parallel::dot(a, b) : k::serial::dot(a, b));
}

template <bool Parallel>
void BM_weighted_norm2(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    std::vector<k::cplx> spec(n);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        spec[i] = {std::cos(0.01 * static_cast<double>(i)), std::sin(0.02 * static_cast<double>(i))};
        w[i] = 1.0 + static_cast<double>(i);
    }
    for (auto _ : st)
        benchmark::DoNotOptimize(Parallel ? k::parallel::weighted_norm2(spec, w) : k::serial::weighted_norm2(spec, w));
}

// One short-pulse RK4 step on the default grid, through the size-dispatched kernels.
void BM_sp_step(benchmark::State& st) {
    auto g = spulse::make_grid(64.0 * spulse::kPi, static_cast<std::size_t>(st.range(0)));
    const spulse::Field A0 =
        spulse::admissible_initial_data(spulse::PulseShape::GaussianDerivative, 0.01, 1.0, g);
    spulse::ShortPulseState s{0.0, A0};
    const double dt = 0.5 * spulse::sp_dt_max(A0);
    for (auto _ : st) benchmark::DoNotOptimize(spulse::sp_step(s, dt).A.values().data());
}

}  // namespace

#define SIZES ->RangeMultiplier(8)->Range(1 << 10, 1 << 22)
BENCHMARK(BM_multiply<false>) SIZES;
BENCHMARK(BM_multiply<true>) SIZES;
BENCHMARK(BM_power3<false>) SIZES;
BENCHMARK(BM_power3<true>) SIZES;
BENCHMARK(BM_dot<false>) SIZES;
BENCHMARK(BM_dot<true>) SIZES;
BENCHMARK(BM_weighted_norm2<false>) SIZES;
BENCHMARK(BM_weighted_norm2<true>) SIZES;
BENCHMARK(BM_sp_step)->Arg(1024)->Arg(4096);

BENCHMARK_MAIN();
