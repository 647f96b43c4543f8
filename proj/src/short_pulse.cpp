#include "spulse/short_pulse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spulse/errors.hpp"
#include "spulse/kernels.hpp"

namespace spulse {

namespace {

// Symbol of S(tau) on the stored half spectrum; Nyquist and m = 0 pass through.
std::vector<cplx> semigroup_symbol(const FourierGrid& g, double tau) {
    const auto k = g.wavenumbers();
    std::vector<cplx> s(k.size(), cplx{1.0, 0.0});
    for (std::size_t m = 1; m < k.size(); ++m)
        if (2 * m != g.size()) s[m] = std::polar(1.0, -tau / k[m]);
    return s;
}

Field project(Field f) {
    const double m = mean(f);
    for (double& v : f.values()) v -= m;
    return f;
}

double growth_ratio(const Field& before, const Field& after) {
    const double a = l2_norm(before);
    const double b = l2_norm(after);
    if (!std::isfinite(b)) return std::numeric_limits<double>::infinity();
    if (a == 0.0) return b == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return b / a;
}

}  // namespace

Field sp_rhs(const Field& A, const ShortPulseOptions& opt) {
    Field r = antiderivative(A, 1, opt.mean_tol);
    if (!opt.linear_only) r += differentiate(power(A, 3));
    return r;
}

TimeDerivatives sp_time_derivatives(const Field& A, const ShortPulseOptions& opt) {
    const Field a1 = antiderivative(A, 1, opt.mean_tol);
    const Field a2 = antiderivative(a1, 1, opt.mean_tol);
    const Field a3 = antiderivative(a2, 1, opt.mean_tol);
    TimeDerivatives d{a1, a2, a3, 0.0};
    if (opt.linear_only) return d;

    const Field A2 = power(A, 2);
    const Field A3 = power(A, 3);
    const Field A4 = power(A, 4);
    const Field A5 = power(A, 5);
    const Field A7 = power(A, 7);
    const Field A2x = differentiate(A2);

    d.A_tau += differentiate(A3);

    Field att = d.A_tautau;
    att += 3.0 * product(A2x, a1);
    att += 4.0 * A3;
    att += 1.8 * differentiate(A5, 2);
    d.A_tautau = project(std::move(att));

    const double m3 = mean(A3);
    d.discarded_cube_mean = m3;
    Field attt = d.A_tautautau;
    attt += antiderivative(project(A3), 1, opt.mean_tol);
    attt += 18.0 * product(A2, a1);
    attt += 3.0 * product(A2x, a2);
    attt += 6.0 * product(differentiate(A), product(a1, a1));
    attt += 13.5 * product(differentiate(A4, 2), a1);
    attt += (123.0 / 5.0) * differentiate(A5);
    attt += (27.0 / 7.0) * differentiate(A7, 3);
    // On the box the mean of A^3 removed above feeds back through the chain rule.
    attt.add_scaled(-3.0 * m3, A2x);
    d.A_tautautau = project(std::move(attt));
    return d;
}

double sp_dt_max(const Field& A) {
    const FourierGrid& g = *A.grid();
    const double amax = linf_norm(A);
    const double k = g.k_max();
    return 0.5 / (g.length() / (2.0 * kPi) + 3.0 * k * k * amax * amax);
}

ShortPulseState sp_step(const ShortPulseState& state, double dt, const ShortPulseOptions& opt) {
    const Field& A = state.A;
    auto stage = [&](double c, const Field& k) {
        Field s = A;
        s.add_scaled(c, k);
        return project(std::move(s));
    };
    const Field k1 = sp_rhs(A, opt);
    const Field k2 = sp_rhs(stage(0.5 * dt, k1), opt);
    const Field k3 = sp_rhs(stage(0.5 * dt, k2), opt);
    const Field k4 = sp_rhs(stage(dt, k3), opt);

    Field next = A;
    next.add_scaled(dt / 6.0, k1);
    next.add_scaled(dt / 3.0, k2);
    next.add_scaled(dt / 3.0, k3);
    next.add_scaled(dt / 6.0, k4);
    next = project(std::move(next));

    const double tau = state.tau + dt;
    const double growth = growth_ratio(A, next);
    if (!(growth <= 10.0) || !next.all_finite()) throw StepUnstable(tau, growth);
    return {tau, std::move(next)};
}

SpTrajectory sp_evolve(const Field& A0, double T, double dt, int sample_every, const ShortPulseOptions& opt) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidArgument("sp_evolve: T must be finite and >= 0");
    if (!(dt > 0.0)) throw InvalidArgument("sp_evolve: dt must be positive");
    if (sample_every < 1) throw InvalidArgument("sp_evolve: sample_every must be >= 1");
    require_zero_mean(A0, "sp_evolve initial data", opt.mean_tol);
    const double dt_max = sp_dt_max(A0);
    if (dt > dt_max)
        throw InvalidArgument("sp_evolve: dt = " + std::to_string(dt) + " exceeds stability limit " +
                              std::to_string(dt_max));

    const auto full = static_cast<std::size_t>(std::floor(T / dt + 1e-9));
    const double rem = T - static_cast<double>(full) * dt;
    const bool tail = rem > 1e-12 * std::max(1.0, T);

    SpTrajectory out;
    ShortPulseState s{0.0, A0};
    out.push_back(s);
    for (std::size_t i = 1; i <= full; ++i) {
        s = sp_step(s, dt, opt);
        s.tau = static_cast<double>(i) * dt;
        if (i % static_cast<std::size_t>(sample_every) == 0 || (i == full && !tail)) out.push_back(s);
    }
    if (tail) {
        s = sp_step(s, rem, opt);
        s.tau = T;
        out.push_back(s);
    }
    return out;
}

SmallNormCheck small_norm_check(const Field& A0) {
    const double d1 = l2_norm(differentiate(A0, 1));
    const double d2 = l2_norm(differentiate(A0, 2));
    SmallNormCheck r;
    r.sum = d1 * d1 + d2 * d2;
    r.ok = r.sum < 1.0 / 6.0;
    return r;
}

DeltaReport delta_of_trajectory(const SpTrajectory& traj, double s, const ShortPulseOptions& opt) {
    if (!(s > 3.5)) throw InvalidArgument("delta_of_trajectory: s must exceed 7/2");
    if (traj.empty()) throw InvalidArgument("delta_of_trajectory: empty trajectory");
    DeltaReport r;
    r.s = s;
    for (const auto& st : traj) {
        const TimeDerivatives d = sp_time_derivatives(st.A, opt);
        r.sup_A = std::max(r.sup_A, sobolev_norm(st.A, s));
        r.sup_At = std::max(r.sup_At, sobolev_norm(d.A_tau, s - 1.0));
        r.sup_Att = std::max(r.sup_Att, sobolev_norm(d.A_tautau, s - 2.0));
        r.sup_Attt = std::max(r.sup_Attt, sobolev_norm(d.A_tautautau, s - 3.0));
    }
    r.delta = r.sup_A + r.sup_At + r.sup_Att + r.sup_Attt;
    return r;
}

// ---------------------------------------------------------------------------
// Duhamel solver

namespace {

// Quadrature weights (in units of h) for int_0^{i h} over samples 0..i.
std::vector<double> simpson_weights(std::size_t i, std::size_t available) {
    std::vector<double> w(i + 1, 0.0);
    if (i == 0) return w;
    if (i == 1) {
        if (available >= 3) {
            // Quadratic through samples 0, 1, 2 integrated over [0, h].
            w.resize(3, 0.0);
            w[0] = 5.0 / 12.0;
            w[1] = 8.0 / 12.0;
            w[2] = -1.0 / 12.0;
        } else {
            w[0] = w[1] = 0.5;
        }
        return w;
    }
    const std::size_t simpson_end = (i % 2 == 0) ? i : i - 3;
    for (std::size_t j = 0; j + 2 <= simpson_end; j += 2) {
        w[j] += 1.0 / 3.0;
        w[j + 1] += 4.0 / 3.0;
        w[j + 2] += 1.0 / 3.0;
    }
    if (i % 2 == 1) {
        const std::size_t j = i - 3;
        w[j] += 3.0 / 8.0;
        w[j + 1] += 9.0 / 8.0;
        w[j + 2] += 9.0 / 8.0;
        w[j + 3] += 3.0 / 8.0;
    }
    return w;
}

// Spectral accumulation of S(tau_i) [base + sum_j w_ij S(-tau_j) G_j] for all i.
std::vector<Spectrum> duhamel_quadrature(const Spectrum& base, const std::vector<Spectrum>& pulled_back,
                                         double h, const std::vector<std::vector<cplx>>& forward_symbols) {
    const std::size_t N = pulled_back.size();
    std::vector<Spectrum> out;
    out.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        Spectrum acc = base;
        const auto w = simpson_weights(i, N);
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (w[j] == 0.0) continue;
            const double c = w[j] * h;
            auto dst = acc.coeffs();
            const auto src = pulled_back[j].coeffs();
            for (std::size_t m = 0; m < dst.size(); ++m) dst[m] += c * src[m];
        }
        kernels::apply_symbol(forward_symbols[i], acc.coeffs());
        out.push_back(std::move(acc));
    }
    return out;
}

}  // namespace

std::vector<Field> duhamel_solve(const Field& B0, const ForcingSource& forcing, double T, double dt,
                                 DuhamelCase which, const DuhamelOptions& opt) {
    if (!(dt > 0.0) || !(T >= 0.0)) throw InvalidArgument("duhamel_solve: need dt > 0 and T >= 0");
    const double steps_real = T / dt;
    const auto steps = static_cast<std::size_t>(std::llround(steps_real));
    if (std::fabs(steps_real - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_real))
        throw InvalidArgument("duhamel_solve: T must be an integer multiple of dt");
    require_zero_mean(B0, "duhamel_solve B0", opt.mean_tol);

    const Grid& grid = B0.grid();
    const std::size_t N = steps + 1;

    std::vector<Field> offset;  // F_i in the differentiable case
    std::vector<Spectrum> pulled;
    std::vector<std::vector<cplx>> fwd;
    pulled.reserve(N);
    fwd.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double tau = static_cast<double>(i) * dt;
        ForcingSample fs = forcing(i, tau);
        require_same_grid(B0, fs.value, "duhamel_solve forcing");
        const Field* integrand = &fs.value;
        if (which == DuhamelCase::Differentiable) {
            if (!fs.rate) throw InvalidArgument("duhamel_solve: differentiable case needs F_tau samples");
            require_zero_mean(fs.value, "duhamel_solve F", opt.mean_tol);
            integrand = &*fs.rate;
        }
        require_zero_mean(*integrand, "duhamel_solve forcing", opt.mean_tol);
        Spectrum g = to_spectrum(*integrand);
        kernels::apply_symbol(semigroup_symbol(*grid, -tau), g.coeffs());
        pulled.push_back(std::move(g));
        fwd.push_back(semigroup_symbol(*grid, tau));
        if (which == DuhamelCase::Differentiable) offset.push_back(std::move(fs.value));
    }

    Field start = B0;
    if (which == DuhamelCase::Differentiable) start += offset.front();
    const Spectrum base = to_spectrum(start);
    const auto spec = duhamel_quadrature(base, pulled, dt, fwd);

    std::vector<Field> out;
    out.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        Field b = to_field(spec[i]);
        if (which == DuhamelCase::Differentiable) b -= offset[i];
        out.push_back(std::move(b));
    }

    // Resolution check: redo the final-time quadrature on every other sample.
    if (steps >= 4 && steps % 2 == 0) {
        std::vector<Spectrum> coarse;
        std::vector<std::vector<cplx>> coarse_fwd;
        for (std::size_t i = 0; i < N; i += 2) {
            coarse.push_back(pulled[i]);
            coarse_fwd.push_back(fwd[i]);
        }
        const auto cspec = duhamel_quadrature(base, coarse, 2.0 * dt, coarse_fwd);
        Field bc = to_field(cspec.back());
        if (which == DuhamelCase::Differentiable) bc -= offset.back();
        const double ref = l2_norm(out.back());
        const double diff = l2_norm(out.back() - bc);
        if (ref > 0.0 && diff > opt.resolution_tol * ref)
            throw QuadratureUnderResolved("duhamel_solve: halving the sample spacing changes the result by " +
                                          std::to_string(diff / ref) + " (relative)");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Data

Field admissible_initial_data(PulseShape shape, double amplitude, double width, const Grid& grid,
                              std::optional<double> center) {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
        throw InvalidArgument("admissible_initial_data: amplitude must be finite and >= 0");
    if (!(width > 0.0)) throw InvalidArgument("admissible_initial_data: width must be positive");
    const double L = grid->length();
    const double c = center.value_or(0.5 * L);
    const double carrier = 2.0 / width;

    auto psi = [&](double x) {
        // Nearest periodic image of x - c.
        double y = std::remainder(x - c, L);
        const double env = std::exp(-0.5 * y * y / (width * width));
        return shape == PulseShape::SinePacket ? env * std::cos(carrier * y) : env;
    };
    const Field p = Field::sample(grid, psi);
    const double peak = linf_norm(p);
    const double edge = std::fabs(psi(c + 0.5 * L));
    if (!(edge <= 1e-10 * peak))
        throw BoundaryLeak("admissible_initial_data: profile is " + std::to_string(edge / peak) +
                           " of its peak at the box edge");

    Field A = project(differentiate(p, 3));
    if (amplitude == 0.0) return Field(grid);
    const double norm = sobolev_norm(A, 2.0);
    if (!(norm > 0.0)) throw InvalidArgument("admissible_initial_data: profile is not resolved on the grid");
    A *= amplitude / norm;
    return A;
}

AntiderivativeDiagnostics antiderivative_diagnostics(const Field& A, const ShortPulseOptions& opt) {
    AntiderivativeDiagnostics d{antiderivative(A, 1, opt.mean_tol), antiderivative(A, 2, opt.mean_tol),
                                antiderivative(A, 3, opt.mean_tol), 0.0};
    if (!opt.linear_only) {
        const Field A3 = power(A, 3);
        d.discarded_cube_mean = mean(A3);
        d.B3 += antiderivative(project(A3), 1, opt.mean_tol);
    }
    return d;
}

}  // namespace spulse
