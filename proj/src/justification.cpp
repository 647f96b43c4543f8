#include "spulse/justification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "spulse/errors.hpp"

namespace spulse {

namespace {

Field reinterpret(const Field& f, const Grid& g) {
    return Field(g, std::vector<double>(f.values().begin(), f.values().end()));
}

void require_sync(double t, double tau, double eps) {
    if (!(std::fabs(eps * t - tau) < 1e-12 * std::max(1.0, std::fabs(tau))))
        throw SyncError("states not synchronized: eps t = " + std::to_string(eps * t) + ", tau = " +
                        std::to_string(tau));
}

Field project(Field f) {
    const double m = mean(f);
    for (double& v : f.values()) v -= m;
    return f;
}

using Fine = std::vector<double>;

Fine times(const Fine& a, const Fine& b) {
    Fine out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] * b[j];
    return out;
}

Fine lin(double ca, const Fine& a, double cb, const Fine& b) {
    Fine out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = ca * a[j] + cb * b[j];
    return out;
}

// Every integrand of Etilde and J is a product of at most four band-limited
// factors, so on the doubled grid the trapezoidal sum is exact.
struct FineFields {
    double w = 0.0;
    double eps = 0.0;
    Fine R, Rx, Rxx, Rt, Rxt, Rtt;
    Fine A, Ax, Axx, Axxx, At, Axt, Axxt, Att, Attx, Attt;
    Fine AAx, AAx_x, AAx_xx, AAt, AAt_x, AAt_xx, A2, RRx_x;

    FineFields(const ErrorState& es, const Field& Af, const TimeDerivatives& d) {
        const Grid& g = es.R.grid();
        eps = es.eps;
        w = g->length() / static_cast<double>(2 * g->size());
        auto up = [](const Field& f) { return refine(f, 2); };
        R = up(es.R);
        Rx = up(differentiate(es.R));
        Rxx = up(differentiate(es.R, 2));
        Rt = up(es.Rtau);
        Rxt = up(differentiate(es.Rtau));
        Rtt = up(es.Rtautau);
        A = up(Af);
        Ax = up(differentiate(Af));
        Axx = up(differentiate(Af, 2));
        Axxx = up(differentiate(Af, 3));
        At = up(d.A_tau);
        Axt = up(differentiate(d.A_tau));
        Axxt = up(differentiate(d.A_tau, 2));
        Att = up(d.A_tautau);
        Attx = up(differentiate(d.A_tautau));
        Attt = up(d.A_tautautau);
        AAx = times(A, Ax);
        AAx_x = lin(1.0, times(Ax, Ax), 1.0, times(A, Axx));
        AAx_xx = lin(3.0, times(Ax, Axx), 1.0, times(A, Axxx));
        AAt = times(A, At);
        AAt_x = lin(1.0, times(Ax, At), 1.0, times(A, Axt));
        AAt_xx = lin(1.0, times(Axx, At), 2.0, times(Ax, Axt));
        AAt_xx = lin(1.0, AAt_xx, 1.0, times(A, Axxt));
        A2 = times(A, A);
        RRx_x = lin(1.0, times(Rx, Rx), 1.0, times(R, Rxx));
    }

    template <typename... F>
    double integral(const F&... f) const {
        double s = 0.0;
        for (std::size_t j = 0; j < R.size(); ++j) s += (f[j] * ...);
        return w * s;
    }
};

class Ledger {
public:
    explicit Ledger(const FineFields& f) : f_(f) {}

    template <typename... F>
    void add(std::string label, double c, bool pure_R, const F&... fields) {
        const double v = c * f_.integral(fields...);
        out_.total += v;
        out_.terms.push_back({std::move(label), v, pure_R});
    }

    TermLedger take() { return std::move(out_); }

private:
    const FineFields& f_;
    TermLedger out_;
};

TermLedger tilde_impl(const FineFields& f) {
    const double e = f.eps, e2 = e * e, e3 = e2 * e, e4 = e2 * e2;
    Ledger l(f);
    l.add("-2eps^2 R_xi R_tau", -2.0 * e2, true, f.Rx, f.Rt);
    l.add("-3 A^2 R_xi^2", -3.0, false, f.A2, f.Rx, f.Rx);
    l.add("-6eps A R R_xi^2", -6.0 * e, false, f.A, f.R, f.Rx, f.Rx);
    l.add("-3eps^2 R^2 R_xi^2", -3.0 * e2, true, f.R, f.R, f.Rx, f.Rx);
    l.add("-2eps^2 R_xixi R_xitau", -2.0 * e2, true, f.Rxx, f.Rxt);
    l.add("-3eps^2 A^2 R_xitau^2", -3.0 * e2, false, f.A2, f.Rxt, f.Rxt);
    l.add("+6eps^2 (A A_xi)_xi R_tau^2", 6.0 * e2, false, f.AAx_x, f.Rt, f.Rt);
    l.add("-6eps^3 A R R_xitau^2", -6.0 * e3, false, f.A, f.R, f.Rxt, f.Rxt);
    l.add("-3eps^4 R^2 R_xitau^2", -3.0 * e4, true, f.R, f.R, f.Rxt, f.Rxt);
    return l.take();
}

TermLedger flux_impl(const FineFields& f) {
    const double e = f.eps, e2 = e * e, e3 = e2 * e;
    const Fine RxmRt = lin(1.0, f.Rx, -1.0, f.Rt);
    Ledger l(f);

    // H1 level.
    l.add("H1: 2eps (R_xi - R_tau) A_tautau", 2.0 * e, false, RxmRt, f.Att);
    l.add("H1: 18 A A_xi R_xi^2", 18.0, false, f.AAx, f.Rx, f.Rx);
    l.add("H1: -6 (A A_xi)_xixi R^2", -6.0, false, f.AAx_xx, f.R, f.R);
    l.add("H1: -6 A A_tau R_xi^2", -6.0, false, f.AAt, f.Rx, f.Rx);
    l.add("H1: 12 A A_xi R R_xitau", 12.0, false, f.AAx, f.R, f.Rxt);
    l.add("H1: -2eps A_xixixi R^3", -2.0 * e, false, f.Axxx, f.R, f.R, f.R);
    l.add("H1: 18eps A_xi R R_xi^2", 18.0 * e, false, f.Ax, f.R, f.Rx, f.Rx);
    l.add("H1: 6eps A R_xi^3", 6.0 * e, false, f.A, f.Rx, f.Rx, f.Rx);
    l.add("H1: -6eps A_xixi R^2 R_tau", -6.0 * e, false, f.Axx, f.R, f.R, f.Rt);
    l.add("H1: -12eps A_xi R R_xi R_tau", -12.0 * e, false, f.Ax, f.R, f.Rx, f.Rt);
    l.add("H1: -6eps A_tau R R_xi^2", -6.0 * e, false, f.At, f.R, f.Rx, f.Rx);
    l.add("H1: -6eps A R_xi^2 R_tau", -6.0 * e, false, f.A, f.Rx, f.Rx, f.Rt);
    l.add("H1: 6eps^2 R R_xi^2 (R_xi - R_tau)", 6.0 * e2, true, f.R, f.Rx, f.Rx, RxmRt);

    // H2 level.
    l.add("H2: 2eps R_xixi A_tautauxi", 2.0 * e, false, f.Rxx, f.Attx);
    l.add("H2: -2eps^3 R_tautau A_tautautau", -2.0 * e3, false, f.Rtt, f.Attt);

    // 2 I1
    l.add("I1: 15 A A_xi R_xixi^2", 30.0, false, f.AAx, f.Rxx, f.Rxx);
    l.add("I1: 18 (A A_xi)_xi R_xi R_xixi", 36.0, false, f.AAx_x, f.Rx, f.Rxx);
    l.add("I1: 6 (A A_xi)_xixi R R_xixi", 12.0, false, f.AAx_xx, f.R, f.Rxx);
    l.add("I1: -3eps^2 A A_tau R_xitau^2", -6.0 * e2, false, f.AAt, f.Rxt, f.Rxt);
    l.add("I1: -6eps^2 A A_xi R_tautau R_xitau", -12.0 * e2, false, f.AAx, f.Rtt, f.Rxt);
    l.add("I1: -6eps^2 A A_tau R_tautau R_xixi", -12.0 * e2, false, f.AAt, f.Rtt, f.Rxx);
    l.add("I1: 3eps^2 (A A_tau)_xixi R_tau^2", 6.0 * e2, false, f.AAt_xx, f.Rt, f.Rt);
    l.add("I1: -6eps^2 (A A_tau)_xixi R R_tautau", -12.0 * e2, false, f.AAt_xx, f.R, f.Rtt);
    l.add("I1: -12eps^2 (A A_tau)_xi R_xi R_tautau", -24.0 * e2, false, f.AAt_x, f.Rx, f.Rtt);

    // 2 eps I2
    const double c2 = 2.0 * e;
    l.add("I2: 3 A_xixixi R^2 R_xixi", 3.0 * c2, false, f.Axxx, f.R, f.R, f.Rxx);
    l.add("I2: 18 A_xixi R R_xi R_xixi", 18.0 * c2, false, f.Axx, f.R, f.Rx, f.Rxx);
    l.add("I2: 15 A_xi R R_xixi^2", 15.0 * c2, false, f.Ax, f.R, f.Rxx, f.Rxx);
    l.add("I2: 18 A_xi R_xi^2 R_xixi", 18.0 * c2, false, f.Ax, f.Rx, f.Rx, f.Rxx);
    l.add("I2: 15 A R_xi R_xixi^2", 15.0 * c2, false, f.A, f.Rx, f.Rxx, f.Rxx);
    l.add("I2: -3eps^2 A_xixitau R^2 R_tautau", -3.0 * e2 * c2, false, f.Axxt, f.R, f.R, f.Rtt);
    l.add("I2: -12eps^2 A_xitau R R_xi R_tautau", -12.0 * e2 * c2, false, f.Axt, f.R, f.Rx, f.Rtt);
    l.add("I2: -6eps^2 A_tau (R R_xi)_xi R_tautau", -6.0 * e2 * c2, false, f.At, f.RRx_x, f.Rtt);
    l.add("I2: -6eps^2 A_xixi R R_tau R_tautau", -6.0 * e2 * c2, false, f.Axx, f.R, f.Rt, f.Rtt);
    l.add("I2: -12eps^2 A_xi R_xi R_tau R_tautau", -12.0 * e2 * c2, false, f.Ax, f.Rx, f.Rt, f.Rtt);
    l.add("I2: -6eps^2 A_xi R R_tautau R_xitau", -6.0 * e2 * c2, false, f.Ax, f.R, f.Rtt, f.Rxt);
    l.add("I2: -3eps^2 A_tau R R_xitau^2", -3.0 * e2 * c2, false, f.At, f.R, f.Rxt, f.Rxt);
    l.add("I2: -6eps^2 A R_tau R_tautau R_xixi", -6.0 * e2 * c2, false, f.A, f.Rt, f.Rtt, f.Rxx);
    l.add("I2: -6eps^2 A R_xi R_tautau R_xitau", -6.0 * e2 * c2, false, f.A, f.Rx, f.Rtt, f.Rxt);
    l.add("I2: -3eps^2 A R_tau R_xitau^2", -3.0 * e2 * c2, false, f.A, f.Rt, f.Rxt, f.Rxt);

    // 2 eps^2 I3
    const double c3 = 2.0 * e2;
    l.add("I3: 15 R R_xi R_xixi^2", 15.0 * c3, true, f.R, f.Rx, f.Rxx, f.Rxx);
    l.add("I3: -6eps^2 R_xi^2 R_tau R_tautau", -6.0 * e2 * c3, true, f.Rx, f.Rx, f.Rt, f.Rtt);
    l.add("I3: -6eps^2 R R_tau R_xixi R_tautau", -6.0 * e2 * c3, true, f.R, f.Rt, f.Rxx, f.Rtt);
    l.add("I3: -6eps^2 R R_xi R_xitau R_tautau", -6.0 * e2 * c3, true, f.R, f.Rx, f.Rxt, f.Rtt);
    l.add("I3: -3eps^2 R R_tau R_xitau^2", -3.0 * e2 * c3, true, f.R, f.Rt, f.Rxt, f.Rxt);
    return l.take();
}

void check_pair(const ErrorState& es, const ShortPulseState& sp) {
    require_same_grid(es.R, sp.A, "error state");
    require_sync(es.tau, sp.tau, 1.0);
}

AprioriLedger apriori_impl(const ErrorState& es, double E, double Et, double J, double delta, double cap) {
    const double e = es.eps;
    const double rE = std::sqrt(E);
    auto make = [](double lhs, double bracket) {
        BoundCheck b{lhs, bracket, 0.0};
        if (bracket > 0.0) b.constant = lhs / bracket;
        else if (lhs > 0.0) b.constant = std::numeric_limits<double>::infinity();
        return b;
    };
    AprioriLedger a;
    a.R_xitau_l2 = make(l2_norm(differentiate(es.Rtau)),
                        delta * e + rE + delta * delta * rE + delta * e * E + e * e * E * rE);
    a.eps_Rtau_inf = make(e * linf_norm(es.Rtau), rE + delta * e * e + delta * e * e * E + e * e * e * E * rE);
    a.Etilde = make(std::fabs(Et), e * E + delta * delta * E + delta * e * E * rE + e * e * E * E);
    a.J = make(std::fabs(J), delta * rE + delta * delta * E + delta * E * rE + e * E * E);
    a.coercivity = E > 0.0 ? std::fabs(Et) / E : 0.0;
    a.cap = cap;
    a.within_cap = a.R_xitau_l2.constant <= cap && a.eps_Rtau_inf.constant <= cap && a.Etilde.constant <= cap &&
                   a.J.constant <= cap;
    return a;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ErrorSeries make_series(std::vector<double> tau, std::vector<double> value) {
    ErrorSeries s{std::move(tau), std::move(value), 0.0, 0.0};
    for (std::size_t i = 0; i < s.value.size(); ++i)
        if (i == 0 || s.value[i] > s.sup) {
            s.sup = s.value[i];
            s.tau_at_sup = s.tau[i];
        }
    return s;
}

void require_paired(const std::vector<KGState>& kg, const SpTrajectory& sp, double eps) {
    if (kg.size() != sp.size())
        throw SyncError("trajectories have " + std::to_string(kg.size()) + " and " + std::to_string(sp.size()) +
                        " samples");
    for (std::size_t i = 0; i < kg.size(); ++i) require_sync(kg[i].t, sp[i].tau, eps);
}

}  // namespace

// ---------------------------------------------------------------------------
// Paired data

PairedData build_paired_initial_data(const Field& A0, const std::optional<Field>& perturbation, double eps,
                                     const PairedDataOptions& opt) {
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
    require_zero_mean(A0, "build_paired_initial_data(A0)");
    const TimeDerivatives d = sp_time_derivatives(A0);

    Field U0 = A0;
    Field V0 = d.A_tau;
    if (perturbation && opt.mode != PerturbationMode::None) {
        require_same_grid(A0, *perturbation, "build_paired_initial_data");
        const Field p = project(*perturbation);
        if (!(sobolev_norm(p, 2.0) <= 1.0 + 1e-12))
            throw InvalidArgument("perturbation must satisfy ||p||_{H^2} <= 1");
        U0.add_scaled(eps, p);
        if (opt.mode == PerturbationMode::Slow) {
            Field pv = antiderivative(p) + 3.0 * differentiate(product(power(A0, 2), p));
            V0.add_scaled(eps, pv);
        }
    }
    if (opt.well_prepared) V0.add_scaled(eps * eps, antiderivative(d.A_tautau));

    const double bound = sobolev_norm(U0 - A0, 2.0) + sobolev_norm(V0 - d.A_tau, 1.0);
    if (bound > eps * (1.0 + 1e-12))
        throw Bound7Violated("initial data are " + std::to_string(bound) + " apart, more than eps = " +
                             std::to_string(eps));

    const Grid gx = x_grid_for(A0.grid(), eps);
    KGState kg0 = scale_up(U0, V0, 0.0, eps, gx, opt.include_tau_term);
    const Field lead_u = 2.0 * eps * reinterpret(A0, gx);
    const Field lead_ut = reinterpret(differentiate(A0), gx);
    PairedData out{ShortPulseState{0.0, A0}, kg0, U0, V0, bound, 0.0, 0.0, 0.0, 0.0};
    out.unscaled_u = sobolev_norm(kg0.u - lead_u, 2.0);
    out.unscaled_ut = sobolev_norm(kg0.ut + lead_ut, 1.0);
    out.unscaled_u_constant = out.unscaled_u / std::sqrt(eps);
    out.unscaled_ut_constant = out.unscaled_ut / std::sqrt(eps);
    return out;
}

// ---------------------------------------------------------------------------
// Error state and energies

ErrorState error_state(const KGState& kg, const ShortPulseState& sp, double eps) {
    return error_state(kg, sp, eps, sp_time_derivatives(sp.A));
}

ErrorState error_state(const KGState& kg, const ShortPulseState& sp, double eps, const TimeDerivatives& d) {
    require_sync(kg.t, sp.tau, eps);
    const ScaledState s = scale_down(kg, eps, sp.A.grid());
    const double inv = 1.0 / eps;
    Field Utt = differentiate(s.Utau) - s.U - differentiate(power(s.U, 3), 2);
    Utt *= inv * inv;
    return {sp.tau, eps, inv * (s.U - sp.A), inv * (s.Utau - d.A_tau), inv * (Utt - d.A_tautau)};
}

ErrorEnergy error_energy(const ErrorState& es) {
    const double e2 = es.eps * es.eps;
    const Field Rx = differentiate(es.R);
    const Field Rxx = differentiate(es.R, 2);
    ErrorEnergy out;
    out.terms = {inner(es.R, es.R), inner(Rx, Rx), inner(Rxx, Rxx),
                 2.0 * e2 * inner(es.Rtau, es.Rtau), e2 * e2 * inner(es.Rtautau, es.Rtautau)};
    for (double t : out.terms) out.E += t;
    out.sup_norms = linf_norm(es.R) + linf_norm(Rx);
    out.embedding_constant = out.E > 0.0 ? out.sup_norms / std::sqrt(out.E) : 0.0;
    return out;
}

TermLedger tilde_energy(const ErrorState& es, const ShortPulseState& sp) {
    return tilde_energy(es, sp, sp_time_derivatives(sp.A));
}

TermLedger tilde_energy(const ErrorState& es, const ShortPulseState& sp, const TimeDerivatives& d) {
    check_pair(es, sp);
    return tilde_impl(FineFields(es, sp.A, d));
}

TermLedger flux_J(const ErrorState& es, const ShortPulseState& sp) {
    return flux_J(es, sp, sp_time_derivatives(sp.A));
}

TermLedger flux_J(const ErrorState& es, const ShortPulseState& sp, const TimeDerivatives& d) {
    check_pair(es, sp);
    return flux_impl(FineFields(es, sp.A, d));
}

EnergyBreakdown energy_breakdown(const ErrorState& es, const ShortPulseState& sp) {
    return energy_breakdown(es, sp, sp_time_derivatives(sp.A));
}

EnergyBreakdown energy_breakdown(const ErrorState& es, const ShortPulseState& sp, const TimeDerivatives& d) {
    check_pair(es, sp);
    const FineFields f(es, sp.A, d);
    TermLedger et = tilde_impl(f);
    TermLedger j = flux_impl(f);
    EnergyBreakdown out{es.tau, error_energy(es).E, et.total, j.total, {}};
    out.components.reserve(et.terms.size() + j.terms.size());
    for (auto& t : et.terms) out.components.push_back({"Etilde: " + t.label, t.value, t.pure_R});
    for (auto& t : j.terms) out.components.push_back({"J: " + t.label, t.value, t.pure_R});
    return out;
}

BalanceResidual balance_residual(const std::vector<EnergyBreakdown>& series) {
    BalanceResidual out;
    if (series.size() < 3) return out;
    const double h = series[1].tau - series[0].tau;
    if (!(h > 0.0)) throw InvalidArgument("balance_residual: samples must increase in tau");
    for (std::size_t i = 1; i < series.size(); ++i)
        if (std::fabs(series[i].tau - series[i - 1].tau - h) > 1e-9 * std::max(1.0, series[i].tau))
            throw InvalidArgument("balance_residual: samples must be uniformly spaced");
    for (std::size_t i = 1; i + 1 < series.size(); ++i) {
        const double up = series[i + 1].E + series[i + 1].Etilde;
        const double down = series[i - 1].E + series[i - 1].Etilde;
        const double r = std::fabs((up - down) / (2.0 * h) - series[i].J) / std::max(1.0, std::fabs(series[i].J));
        out.tau.push_back(series[i].tau);
        out.residual.push_back(r);
        out.max_residual = std::max(out.max_residual, r);
    }
    return out;
}

AprioriLedger apriori_bound_checks(const ErrorState& es, const ShortPulseState& sp, double delta, double cap) {
    const EnergyBreakdown b = energy_breakdown(es, sp);
    return apriori_impl(es, b.E, b.Etilde, b.J, delta, cap);
}

AprioriLedger merge_max(const AprioriLedger& a, const AprioriLedger& b) {
    auto mx = [](const BoundCheck& x, const BoundCheck& y) {
        return BoundCheck{std::max(x.lhs, y.lhs), std::max(x.bracket, y.bracket), std::max(x.constant, y.constant)};
    };
    AprioriLedger m;
    m.R_xitau_l2 = mx(a.R_xitau_l2, b.R_xitau_l2);
    m.eps_Rtau_inf = mx(a.eps_Rtau_inf, b.eps_Rtau_inf);
    m.Etilde = mx(a.Etilde, b.Etilde);
    m.J = mx(a.J, b.J);
    m.coercivity = std::max(a.coercivity, b.coercivity);
    m.cap = std::max(a.cap, b.cap);
    m.within_cap = a.within_cap && b.within_cap;
    return m;
}

// ---------------------------------------------------------------------------
// Error norms

ErrorSeries theorem_one_error(const std::vector<KGState>& kg, const SpTrajectory& sp, double eps) {
    require_paired(kg, sp, eps);
    std::vector<double> tau, val;
    for (std::size_t i = 0; i < kg.size(); ++i) {
        const ScaledState s = scale_down(kg[i], eps, sp[i].A.grid());
        tau.push_back(sp[i].tau);
        val.push_back(sobolev_norm(s.U - sp[i].A, 2.0));
    }
    return make_series(std::move(tau), std::move(val));
}

std::pair<double, double> leading_order_norms(const Field& A0, double eps) {
    const Grid gx = x_grid_for(A0.grid(), eps);
    return {sobolev_norm(eps * reinterpret(A0, gx), 2.0), sobolev_norm(reinterpret(differentiate(A0), gx), 1.0)};
}

UnscaledError unscaled_error(const std::vector<KGState>& kg, const SpTrajectory& sp, double eps) {
    require_paired(kg, sp, eps);
    UnscaledError out;
    if (kg.empty()) return out;
    std::vector<double> tau, val;
    for (std::size_t i = 0; i < kg.size(); ++i) {
        const Field zero(sp[i].A.grid());
        const KGState lead = scale_up(sp[i].A, zero, sp[i].tau, eps, kg[i].u.grid(), false);
        tau.push_back(sp[i].tau);
        val.push_back(sobolev_norm(kg[i].u - lead.u, 2.0));
    }
    out.error = make_series(std::move(tau), std::move(val));
    std::tie(out.leading_u, out.leading_ut) = leading_order_norms(sp.front().A, eps);
    return out;
}

// ---------------------------------------------------------------------------
// Fits

GronwallFit gronwall_fit(const std::vector<double>& tau, const std::vector<double>& E, double delta, double T,
                         double cap_C0, double cap_C1) {
    if (tau.size() != E.size() || tau.size() < 2) throw FitFailed("gronwall_fit: need at least two (tau, E) pairs");
    if (!(delta > 0.0) || !(T > 0.0)) throw FitFailed("gronwall_fit: delta and T must be positive");
    for (std::size_t i = 0; i < E.size(); ++i)
        if (!std::isfinite(E[i]) || !std::isfinite(tau[i])) throw FitFailed("gronwall_fit: non-finite sample");
    const double E0 = E.front();
    if (!(E0 > 0.0)) throw FitFailed("gronwall_fit: E(0) must be positive");

    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < E.size(); ++i) {
        if (!(E[i] > 0.0)) continue;
        const double x = delta * (tau[i] - tau.front());
        sxy += x * std::log(E[i] / E0);
        sxx += x * x;
    }
    GronwallFit f;
    f.C1 = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;
    for (std::size_t i = 0; i < E.size(); ++i) {
        const double x = delta * (tau[i] - tau.front());
        f.C0 = std::max(f.C0, E[i] / ((E0 + x) * std::exp(f.C1 * x)));
    }
    f.envelope = f.C0 * (E0 + delta * T) * std::exp(f.C1 * delta * T);
    f.ok = f.C0 <= cap_C0 && f.C1 <= cap_C1;
    return f;
}

LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw FitFailed("fit_loglog: need at least three points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw FitFailed("fit_loglog: values must be positive and finite");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (!(den > 0.0)) throw FitFailed("fit_loglog: abscissae coincide");
    LogLogFit f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
}

// ---------------------------------------------------------------------------
// Study

SpTrajectory shared_sp_trajectory(const StudyConfig& cfg, double* sp_dt_used) {
    if (!(cfg.T > 0.0) || !(cfg.stride > 0.0)) throw InvalidArgument("T and stride must be positive");
    const double ratio = cfg.T / cfg.stride;
    if (std::fabs(ratio - std::round(ratio)) > 1e-9 * ratio)
        throw InvalidArgument("T must be an integer multiple of the stride");
    double dt = cfg.sp_dt;
    std::size_t every = 0;
    if (dt > 0.0) {
        const double m = cfg.stride / dt;
        if (std::fabs(m - std::round(m)) > 1e-9 * m) throw InvalidArgument("sp_dt must divide the stride");
        every = static_cast<std::size_t>(std::llround(m));
    } else {
        every = static_cast<std::size_t>(std::ceil(cfg.stride / (0.5 * sp_dt_max(cfg.A0)) - 1e-12));
        every = std::max<std::size_t>(every, 1);
    }
    dt = cfg.stride / static_cast<double>(every);
    if (sp_dt_used) *sp_dt_used = dt;
    ShortPulseOptions opt;
    opt.mean_tol = cfg.mean_tol;
    return sp_evolve(cfg.A0, cfg.T, dt, static_cast<int>(every), opt);
}

KGRun synchronized_kg_run(const PairedData& data, const SpTrajectory& sp, double eps, const StudyConfig& cfg) {
    const double dt_sample = cfg.stride / eps;
    const double rule = kg_dt(*data.kg0.u.grid(), cfg.cfl);
    const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt_sample / rule - 1e-12)));
    const double dt = dt_sample / static_cast<double>(every);
    return kg_evolve(data.kg0.u, data.kg0.ut, sp.back().tau / eps, dt, static_cast<int>(every), cfg.kg);
}

JustificationReport convergence_study(const StudyConfig& cfg) {
    if (cfg.eps.size() < 3) throw InvalidArgument("convergence_study: need at least three epsilon values");
    for (double e : cfg.eps)
        if (!(e > 0.0 && e < 1.0)) throw InvalidArgument("convergence_study: epsilon must lie in (0, 1)");

    JustificationReport rep;
    const SpTrajectory sp = shared_sp_trajectory(cfg);
    rep.sp_samples = sp.size();
    ShortPulseOptions sopt;
    sopt.mean_tol = cfg.mean_tol;
    rep.delta = delta_of_trajectory(sp, cfg.s, sopt);

    // Closures along the shared trajectory, reused by every eps.
    std::vector<TimeDerivatives> closures;
    if (cfg.energies || cfg.manufactured_identity) {
        closures.reserve(sp.size());
        for (const auto& s : sp) closures.push_back(sp_time_derivatives(s.A, sopt));
    }

    rep.runs.resize(cfg.eps.size());
    const int count = static_cast<int>(cfg.eps.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (int r = 0; r < count; ++r) {
        EpsilonResult& out = rep.runs[static_cast<std::size_t>(r)];
        const double eps = cfg.eps[static_cast<std::size_t>(r)];
        out.eps = eps;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::tie(out.leading_u, out.leading_ut) = leading_order_norms(cfg.A0, eps);
            const PairedData data = build_paired_initial_data(cfg.A0, cfg.perturbation, eps, cfg.data);
            out.bound7 = data.bound7;
            out.unscaled_u_constant = data.unscaled_u_constant;
            out.unscaled_ut_constant = data.unscaled_ut_constant;

            std::vector<KGState> kg;
            if (cfg.manufactured_identity) {
                const Grid gx = data.kg0.u.grid();
                for (std::size_t i = 0; i < sp.size(); ++i)
                    kg.push_back(scale_up(sp[i].A, closures[i].A_tau, sp[i].tau, eps, gx, cfg.data.include_tau_term));
            } else {
                KGRun run = synchronized_kg_run(data, sp, eps, cfg);
                out.kg_steps = run.steps;
                out.abort = run.abort;
                kg = std::move(run.samples);
            }
            const SpTrajectory sp_used(sp.begin(), sp.begin() + static_cast<std::ptrdiff_t>(std::min(kg.size(), sp.size())));
            out.error = theorem_one_error(kg, sp_used, eps);
            out.unscaled = unscaled_error(kg, sp_used, eps).error;

            if (cfg.energies) {
                std::optional<AprioriLedger> ap;
                for (std::size_t i = 0; i < kg.size(); ++i) {
                    const ErrorState es = error_state(kg[i], sp[i], eps, closures[i]);
                    EnergyBreakdown b = energy_breakdown(es, sp[i], closures[i]);
                    const AprioriLedger a = apriori_impl(es, b.E, b.Etilde, b.J, rep.delta.delta, cfg.cap_C);
                    ap = ap ? merge_max(*ap, a) : a;
                    b.components.clear();
                    out.energy.push_back(std::move(b));
                }
                out.apriori = ap;
                out.balance = balance_residual(out.energy);
                std::vector<double> tau, E;
                for (const auto& b : out.energy) {
                    tau.push_back(b.tau);
                    E.push_back(b.E);
                }
                try {
                    out.gronwall = gronwall_fit(tau, E, rep.delta.delta, cfg.T, cfg.cap_C, cfg.cap_C);
                } catch (const FitFailed& e) {
                    out.gronwall_failure = e.what();
                }
            }
            if (out.abort)
                out.failure = "Klein-Gordon run stopped at t=" + std::to_string(out.abort->t) + ": " + out.abort->reason;
            out.ok = !out.abort;
        } catch (const Error& e) {
            out.ok = false;
            out.failure = e.what();
        }
        out.seconds = elapsed(t0);
    }

    std::vector<double> es, sup, unsc, band;
    for (const auto& r : rep.runs) {
        if (!r.ok || !(r.error.sup > cfg.noise_floor)) continue;
        es.push_back(r.eps);
        sup.push_back(r.error.sup);
        unsc.push_back(r.unscaled.sup);
        band.push_back(r.error.sup / r.eps);
    }
    if (es.size() >= 3) {
        rep.slope = fit_loglog(es, sup).slope;
        rep.unscaled_slope = fit_loglog(es, unsc).slope;
        rep.band_ratio = *std::max_element(band.begin(), band.end()) / *std::min_element(band.begin(), band.end());
    }
    std::vector<double> el, lead;
    for (const auto& r : rep.runs)
        if (r.leading_u > 0.0) {
            el.push_back(r.eps);
            lead.push_back(r.leading_u);
        }
    if (el.size() >= 3) rep.leading_slope = fit_loglog(el, lead).slope;
    return rep;
}

BalanceRefinement balance_refinement(const StudyConfig& cfg, double eps, double coarse, double window, int levels,
                                     double cfl) {
    if (levels < 2) throw InvalidArgument("balance_refinement: need at least two levels");
    if (!(coarse > 0.0) || !(window >= 2.0 * coarse))
        throw InvalidArgument("balance_refinement: window must hold at least two coarse strides");
    const std::size_t top = std::size_t{1} << (levels - 1);
    StudyConfig c = cfg;
    c.T = window;
    c.stride = coarse / static_cast<double>(top);
    c.cfl = cfl;
    c.sp_dt = 0.0;
    const SpTrajectory sp = shared_sp_trajectory(c);
    const PairedData data = build_paired_initial_data(c.A0, c.perturbation, eps, c.data);
    const KGRun run = synchronized_kg_run(data, sp, eps, c);
    if (run.abort) throw ValidityRegionExceeded(run.abort->t, run.abort->reason);

    ShortPulseOptions sopt;
    sopt.mean_tol = c.mean_tol;
    std::vector<EnergyBreakdown> fine;
    double scale = 0.0;
    for (std::size_t i = 0; i < run.samples.size(); ++i) {
        const TimeDerivatives d = sp_time_derivatives(sp[i].A, sopt);
        fine.push_back(energy_breakdown(error_state(run.samples[i], sp[i], eps, d), sp[i], d));
        fine.back().components.clear();
        scale = std::max(scale, std::fabs(fine.back().E + fine.back().Etilde));
    }

    BalanceRefinement out;
    out.eps = eps;
    for (std::size_t thin = top; thin >= 1; thin /= 2) {
        std::vector<EnergyBreakdown> picked;
        for (std::size_t i = 0; i < fine.size(); i += thin) picked.push_back(fine[i]);
        out.strides.push_back(c.stride * static_cast<double>(thin));
        out.residuals.push_back(balance_residual(picked).max_residual);
    }
    out.roundoff_floor = 10.0 * std::numeric_limits<double>::epsilon() * scale / c.stride;
    out.measurable = out.residuals.back() > out.roundoff_floor;
    return out;
}

}  // namespace spulse
