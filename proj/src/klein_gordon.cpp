#include "spulse/klein_gordon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spulse/errors.hpp"

namespace spulse {

namespace {

void require_valid(const Field& u, double t) {
    const double m = linf_norm(u);
    if (!(m < kUCritical))
        throw ValidityRegionExceeded(t, "sup|u| = " + std::to_string(m) + " >= 1/sqrt(3)");
}

// Pointwise map followed by 2/3 truncation.
template <typename F>
Field pointwise(const Grid& g, F&& f) {
    Field out(g);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = f(j);
    return dealias(out);
}

}  // namespace

KGRates kg_rhs(const KGState& s, const KGOptions& opt) {
    require_same_grid(s.u, s.ut, "kg_rhs");
    require_valid(s.u, s.t);
    Field dut = differentiate(s.u, 2) - s.u;
    if (!opt.linear_only) dut -= differentiate(power(s.u, 3), 2);
    return {s.ut, std::move(dut)};
}

double kg_dt(const FourierGrid& grid, double cfl) {
    if (!(cfl > 0.0)) throw InvalidArgument("kg_dt: cfl must be positive");
    const double k = grid.k_max();
    return cfl / std::sqrt(1.0 + k * k);
}

KGState kg_step(const KGState& s, double dt, const KGOptions& opt) {
    auto stage = [&](double c, const KGRates& k) {
        KGState x{s.t + c, s.u, s.ut};
        x.u.add_scaled(c, k.du);
        x.ut.add_scaled(c, k.dut);
        return x;
    };
    const KGRates k1 = kg_rhs(s, opt);
    const KGRates k2 = kg_rhs(stage(0.5 * dt, k1), opt);
    const KGRates k3 = kg_rhs(stage(0.5 * dt, k2), opt);
    const KGRates k4 = kg_rhs(stage(dt, k3), opt);
    KGState next{s.t + dt, s.u, s.ut};
    next.u.add_scaled(dt / 6.0, k1.du).add_scaled(dt / 3.0, k2.du).add_scaled(dt / 3.0, k3.du).add_scaled(dt / 6.0, k4.du);
    next.ut.add_scaled(dt / 6.0, k1.dut)
        .add_scaled(dt / 3.0, k2.dut)
        .add_scaled(dt / 3.0, k3.dut)
        .add_scaled(dt / 6.0, k4.dut);
    return next;
}

KGRun kg_evolve(const Field& u0, const Field& v0, double t_end, double dt, int sample_every, const KGOptions& opt) {
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw InvalidArgument("kg_evolve: t_end must be finite and >= 0");
    if (!(dt > 0.0)) throw InvalidArgument("kg_evolve: dt must be positive");
    if (sample_every < 1) throw InvalidArgument("kg_evolve: sample_every must be >= 1");
    require_same_grid(u0, v0, "kg_evolve");
    require_valid(u0, 0.0);

    const auto full = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9));
    const double rem = t_end - static_cast<double>(full) * dt;
    const bool tail = rem > 1e-12 * std::max(1.0, t_end);
    const double u_limit = kUCritical - opt.margin;

    KGRun run;
    KGState s{0.0, u0, v0};
    run.samples.push_back(s);

    auto check = [&](const KGState& x) -> bool {
        if (!x.u.all_finite() || !x.ut.all_finite()) {
            run.abort = KGAbort{x.t, "non-finite values"};
            return false;
        }
        const double m0 = linf_norm(x.u);
        if (m0 >= u_limit) {
            run.abort = KGAbort{x.t, "sup|u| = " + std::to_string(m0) + " reached 1/sqrt(3) - margin"};
            return false;
        }
        const double m2 = linf_norm(differentiate(x.u));
        if (m2 > opt.slope_cap) {
            run.abort = KGAbort{x.t, "sup|u_x| = " + std::to_string(m2) + " exceeds the slope cap"};
            return false;
        }
        return true;
    };
    if (!check(s)) return run;

    const std::size_t total = full + (tail ? 1 : 0);
    for (std::size_t i = 1; i <= total; ++i) {
        const bool last_tail = tail && i == total;
        const double h = last_tail ? rem : dt;
        try {
            s = kg_step(s, h, opt);
        } catch (const ValidityRegionExceeded& e) {
            run.abort = KGAbort{e.time(), e.reason()};
            return run;
        }
        s.t = last_tail ? t_end : static_cast<double>(i) * dt;
        ++run.steps;
        if (!check(s)) return run;
        if (last_tail || (i == full && !tail) || i % static_cast<std::size_t>(sample_every) == 0) run.samples.push_back(s);
    }
    return run;
}

// ---------------------------------------------------------------------------
// Symmetric system

SymmetricState to_symmetric(const KGState& s) {
    require_valid(s.u, s.t);
    const Field ux = differentiate(s.u);
    Field u2(s.u.grid());
    for (std::size_t j = 0; j < u2.size(); ++j) u2[j] = std::sqrt(1.0 - 3.0 * s.u[j] * s.u[j]) * ux[j];
    return {s.t, s.ut, std::move(u2), s.u};
}

SymmetricRates symmetric_rhs(const SymmetricState& s) {
    require_valid(s.u3, s.t);
    const Grid& g = s.u1.grid();
    const Field u1x = differentiate(s.u1);
    const Field u2x = differentiate(s.u2);
    auto w2 = [&](std::size_t j) { return 1.0 - 3.0 * s.u3[j] * s.u3[j]; };
    Field d1 = pointwise(g, [&](std::size_t j) {
        return std::sqrt(w2(j)) * u2x[j] - s.u3[j] - 3.0 * s.u2[j] * s.u2[j] * s.u3[j] / w2(j);
    });
    Field d2 = pointwise(g, [&](std::size_t j) {
        return std::sqrt(w2(j)) * u1x[j] - 3.0 * s.u1[j] * s.u2[j] * s.u3[j] / w2(j);
    });
    return {std::move(d1), std::move(d2), s.u1};
}

SymmetricState symmetric_step(const SymmetricState& s, double dt) {
    auto stage = [&](double c, const SymmetricRates& k) {
        SymmetricState x{s.t + c, s.u1, s.u2, s.u3};
        x.u1.add_scaled(c, k.d1);
        x.u2.add_scaled(c, k.d2);
        x.u3.add_scaled(c, k.d3);
        return x;
    };
    const SymmetricRates k1 = symmetric_rhs(s);
    const SymmetricRates k2 = symmetric_rhs(stage(0.5 * dt, k1));
    const SymmetricRates k3 = symmetric_rhs(stage(0.5 * dt, k2));
    const SymmetricRates k4 = symmetric_rhs(stage(dt, k3));
    SymmetricState next{s.t + dt, s.u1, s.u2, s.u3};
    const double w[4] = {dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0};
    const SymmetricRates* k[4] = {&k1, &k2, &k3, &k4};
    for (int i = 0; i < 4; ++i) {
        next.u1.add_scaled(w[i], k[i]->d1);
        next.u2.add_scaled(w[i], k[i]->d2);
        next.u3.add_scaled(w[i], k[i]->d3);
    }
    return next;
}

SymmetricState symmetric_evolve(const SymmetricState& s0, double t_end, double dt) {
    if (!(dt > 0.0) || !(t_end >= 0.0)) throw InvalidArgument("symmetric_evolve: need dt > 0 and t_end >= 0");
    const auto steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
    const double h = steps == 0 ? 0.0 : t_end / static_cast<double>(steps);
    SymmetricState s = s0;
    for (std::size_t i = 0; i < steps; ++i) s = symmetric_step(s, h);
    s.t = s0.t + t_end;
    return s;
}

// ---------------------------------------------------------------------------
// Energies

KGEnergies kg_energies(const KGState& s) {
    require_valid(s.u, s.t);
    const Field ux = differentiate(s.u), uxx = differentiate(s.u, 2), uxxx = differentiate(s.u, 3);
    const Field vx = differentiate(s.ut), vxx = differentiate(s.ut, 2);
    const double h = s.u.grid()->spacing();
    KGEnergies e;
    for (std::size_t j = 0; j < s.u.size(); ++j) {
        const double w = 1.0 - 3.0 * s.u[j] * s.u[j];
        e.E1 += s.u[j] * s.u[j] + s.ut[j] * s.ut[j] + ux[j] * ux[j] * w;
        e.E2 += ux[j] * ux[j] + vx[j] * vx[j] + uxx[j] * uxx[j] * w;
        e.E3 += uxx[j] * uxx[j] + vxx[j] * vxx[j] + uxxx[j] * uxxx[j] * w;
    }
    e.E1 *= h;
    e.E2 *= h;
    e.E3 *= h;
    return e;
}

KGEnergies kg_energy_rates(const KGState& s) {
    const Field& u = s.u;
    const Field& v = s.ut;
    const Field ux = differentiate(u), uxx = differentiate(u, 2), uxxx = differentiate(u, 3);
    const Field vx = differentiate(v), vxx = differentiate(v, 2);
    const double h = u.grid()->spacing();
    double r1 = 0.0, r2 = 0.0, r3 = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        r1 += -3.0 * u[j] * v[j] * ux[j] * ux[j];
        r2 += -3.0 * u[j] * v[j] * uxx[j] * uxx[j] - 6.0 * ux[j] * ux[j] * ux[j] * vx[j] -
              12.0 * u[j] * ux[j] * uxx[j] * vx[j];
        r3 += -3.0 * u[j] * v[j] * uxxx[j] * uxxx[j] - 36.0 * ux[j] * ux[j] * uxx[j] * vxx[j] -
              18.0 * u[j] * ux[j] * uxxx[j] * vxx[j] - 18.0 * u[j] * uxx[j] * uxx[j] * vxx[j];
    }
    return {2.0 * h * r1, 2.0 * h * r2, 2.0 * h * r3};
}

EnergyRateCheck energy_rate_check(const std::vector<KGState>& traj) {
    EnergyRateCheck out;
    if (traj.size() < 3) return out;
    std::vector<KGEnergies> E;
    E.reserve(traj.size());
    for (const auto& s : traj) E.push_back(kg_energies(s));
    auto pick = [](const KGEnergies& e, int i) { return i == 0 ? e.E1 : (i == 1 ? e.E2 : e.E3); };
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const KGEnergies r = kg_energy_rates(traj[i]);
        for (int c = 0; c < 3; ++c) out.rate_scale[c] = std::max(out.rate_scale[c], std::fabs(pick(r, c)));
        if (i == 0 || i + 1 == traj.size()) continue;
        const double span = traj[i + 1].t - traj[i - 1].t;
        std::array<double, 3> res{};
        for (int c = 0; c < 3; ++c) {
            const double fd = (pick(E[i + 1], c) - pick(E[i - 1], c)) / span;
            res[c] = std::fabs(fd - pick(r, c));
        }
        out.t.push_back(traj[i].t);
        out.residual.push_back(res);
    }
    for (int c = 0; c < 3; ++c) {
        const double scale = out.rate_scale[c] > 0.0 ? out.rate_scale[c] : 1.0;
        double m = 0.0;
        for (const auto& r : out.residual) m = std::max(m, r[c] / scale);
        out.max_normalized[c] = m;
    }
    return out;
}

ContinuationReport continuation_monitor(const std::vector<KGState>& traj, double margin) {
    ContinuationReport r;
    for (const auto& s : traj) {
        r.M0 = std::max(r.M0, linf_norm(s.u));
        r.M1 = std::max(r.M1, linf_norm(s.ut));
        r.M2 = std::max(r.M2, linf_norm(differentiate(s.u)));
    }
    r.ok = r.M0 < kUCritical - margin && std::isfinite(r.M1) && std::isfinite(r.M2);
    return r;
}

// ---------------------------------------------------------------------------
// Frame maps

namespace {

void require_commensurate(const FourierGrid& gx, const FourierGrid& gxi, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
    const double want = 2.0 * eps * gxi.length();
    if (gx.size() != gxi.size() || std::fabs(gx.length() - want) > 1e-12 * want)
        throw GridMismatch("x-grid must have the same size as the xi-grid and length 2 eps L_xi");
}

Field reinterpret(const Field& f, const Grid& g) { return Field(g, std::vector<double>(f.values().begin(), f.values().end())); }

}  // namespace

Grid x_grid_for(const Grid& grid_xi, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
    return make_grid(2.0 * eps * grid_xi->length(), grid_xi->size());
}

ScaledState scale_down(const KGState& s, double eps, const Grid& grid_xi) {
    require_commensurate(*s.u.grid(), *grid_xi, eps);
    const double inv = 1.0 / (2.0 * eps);
    Field U = reinterpret(translate(s.u, -s.t), grid_xi);
    U *= inv;
    Field Ut = reinterpret(translate(s.ut + differentiate(s.u), -s.t), grid_xi);
    Ut *= inv / eps;
    return {eps * s.t, std::move(U), std::move(Ut)};
}

KGState scale_up(const Field& U, const Field& Utau, double tau, double eps, const Grid& grid_x,
                 bool include_tau_term) {
    require_same_grid(U, Utau, "scale_up");
    require_commensurate(*grid_x, *U.grid(), eps);
    const double t = tau / eps;
    Field w = -differentiate(U);
    if (include_tau_term) w.add_scaled(2.0 * eps * eps, Utau);
    Field u = reinterpret(U, grid_x);
    u *= 2.0 * eps;
    return {t, translate(u, t), translate(reinterpret(w, grid_x), t)};
}

}  // namespace spulse
