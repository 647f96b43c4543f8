#pragma once

// Error analysis between co-evolved Klein-Gordon and short-pulse solutions.
// The Klein-Gordon state is written in the moving frame as U = A + eps R; the
// error R, its energy E, the correction Etilde and the flux J are diagnosed
// from the two independent solutions, and the balance d/dtau (E + Etilde) = J
// becomes a testable numerical identity. convergence_study drives the eps-sweep.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spulse/klein_gordon.hpp"
#include "spulse/short_pulse.hpp"

namespace spulse {

enum class PerturbationMode {
    /// U0 = A0, V0 = A_tau(0).
    None,
    /// U0 = A0 + eps p, V0 = A_tau(0).
    Bump,
    /// U0 = A0 + eps p, V0 = A_tau(0) + eps (d^{-1}p + 3(A0^2 p)_xi): p moves with the
    /// linearized short-pulse flow, so no O(eps) fast waves are launched.
    Slow,
};

struct PairedDataOptions {
    PerturbationMode mode = PerturbationMode::Slow;
    /// Add eps^2 d^{-1}A_tautau(0) to V0, which removes the O(1) mismatch in U_tautau(0).
    bool well_prepared = false;
    /// Keep the 2 eps^2 U_tau term of u_t when mapping to the original variables.
    bool include_tau_term = true;
};

struct PairedData {
    ShortPulseState sp0;
    KGState kg0;
    Field U0;
    Field V0;
    /// ||U0 - A0||_{H^2} + ||V0 - A_tau(0)||_{H^1}; must not exceed eps.
    double bound7 = 0.0;
    /// ||u(0) - 2 eps A0(./(2 eps))||_{H^2} and ||u_t(0) + A0'(./(2 eps))||_{H^1} on the x-grid.
    double unscaled_u = 0.0;
    double unscaled_ut = 0.0;
    /// The two norms above divided by eps^{1/2}.
    double unscaled_u_constant = 0.0;
    double unscaled_ut_constant = 0.0;
};

/// Initial data for both equations. The perturbation must satisfy ||p||_{H^2} <= 1 and
/// is scaled by eps here. Throws Bound7Violated if the pair is farther than eps apart.
PairedData build_paired_initial_data(const Field& A0, const std::optional<Field>& perturbation, double eps,
                                     const PairedDataOptions& opt = {});

struct ErrorState {
    double tau = 0.0;
    double eps = 0.0;
    Field R;
    Field Rtau;
    Field Rtautau;
};

/// R = (U - A)/eps, R_tau = (U_tau - A_tau)/eps, R_tautau = (U_tautau - A_tautau)/eps with
/// U_tautau = (dU_tau/dxi - U - (U^3)_xixi)/eps^2. Throws SyncError unless |eps t - tau| < 1e-12.
ErrorState error_state(const KGState& kg, const ShortPulseState& sp, double eps);
/// Same, reusing closures already computed for sp.A.
ErrorState error_state(const KGState& kg, const ShortPulseState& sp, double eps, const TimeDerivatives& d);

struct ErrorEnergy {
    double E = 0.0;
    /// int R^2, int R_xi^2, int R_xixi^2, 2 eps^2 int R_tau^2, eps^4 int R_tautau^2.
    std::array<double, 5> terms{};
    /// ||R||_inf + ||R_xi||_inf.
    double sup_norms = 0.0;
    /// sup_norms / E^{1/2}; zero when E = 0.
    double embedding_constant = 0.0;
};

ErrorEnergy error_energy(const ErrorState& es);

struct Term {
    std::string label;
    double value = 0.0;
    /// True when the integrand contains no factor of A.
    bool pure_R = false;
};

struct TermLedger {
    double total = 0.0;
    std::vector<Term> terms;
};

TermLedger tilde_energy(const ErrorState& es, const ShortPulseState& sp);
TermLedger tilde_energy(const ErrorState& es, const ShortPulseState& sp, const TimeDerivatives& d);

/// Right-hand sides of the H1- and H2-level balances, term by term.
TermLedger flux_J(const ErrorState& es, const ShortPulseState& sp);
TermLedger flux_J(const ErrorState& es, const ShortPulseState& sp, const TimeDerivatives& d);

struct EnergyBreakdown {
    double tau = 0.0;
    double E = 0.0;
    double Etilde = 0.0;
    double J = 0.0;
    std::vector<Term> components;
};

EnergyBreakdown energy_breakdown(const ErrorState& es, const ShortPulseState& sp);
EnergyBreakdown energy_breakdown(const ErrorState& es, const ShortPulseState& sp, const TimeDerivatives& d);

struct BalanceResidual {
    std::vector<double> tau;       ///< interior sample times
    std::vector<double> residual;  ///< |centered d(E + Etilde)/dtau - J| / max(1, |J|)
    double max_residual = 0.0;
};

/// Centered differences over uniformly spaced breakdowns.
BalanceResidual balance_residual(const std::vector<EnergyBreakdown>& series);

struct BoundCheck {
    double lhs = 0.0;
    double bracket = 0.0;
    /// lhs / bracket, the smallest constant for which the bound holds here.
    double constant = 0.0;
};

struct AprioriLedger {
    BoundCheck R_xitau_l2;   ///< ||R_xitau|| <= C(delta eps + E^{1/2} + delta^2 E^{1/2} + delta eps E + eps^2 E^{3/2})
    BoundCheck eps_Rtau_inf; ///< ||eps R_tau||_inf <= C(E^{1/2} + delta eps^2 + delta eps^2 E + eps^3 E^{3/2})
    BoundCheck Etilde;       ///< |Etilde| <= C(eps E + delta^2 E + delta eps E^{3/2} + eps^2 E^2)
    BoundCheck J;            ///< |J| <= C(delta E^{1/2} + delta^2 E + delta E^{3/2} + eps E^2)
    /// |Etilde| / E; zero when E = 0.
    double coercivity = 0.0;
    double cap = 0.0;
    bool within_cap = true;
};

AprioriLedger apriori_bound_checks(const ErrorState& es, const ShortPulseState& sp, double delta, double cap = 1e3);
/// Componentwise maximum of two ledgers.
AprioriLedger merge_max(const AprioriLedger& a, const AprioriLedger& b);

struct ErrorSeries {
    std::vector<double> tau;
    std::vector<double> value;
    double sup = 0.0;
    double tau_at_sup = 0.0;
};

/// ||U - A||_{H^2} per sample pair. Throws SyncError if the samples do not pair up in time.
ErrorSeries theorem_one_error(const std::vector<KGState>& kg, const SpTrajectory& sp, double eps);

struct UnscaledError {
    ErrorSeries error;  ///< ||u(t) - 2 eps A(eps t, (. - t)/(2 eps))||_{H^2} on the x-grid
    double leading_u = 0.0;   ///< ||eps A0(./(2 eps))||_{H^2}
    double leading_ut = 0.0;  ///< ||A0'(./(2 eps))||_{H^1}
};

UnscaledError unscaled_error(const std::vector<KGState>& kg, const SpTrajectory& sp, double eps);

/// ||eps A0(./(2 eps))||_{H^2} and ||A0'(./(2 eps))||_{H^1} on the commensurate x-grid.
std::pair<double, double> leading_order_norms(const Field& A0, double eps);

struct GronwallFit {
    double C0 = 0.0;
    double C1 = 0.0;
    /// C0 (E(0) + delta T) exp(C1 delta T).
    double envelope = 0.0;
    bool ok = false;
};

/// C1 = max(0, least-squares slope through the origin of log(E/E(0)) against delta tau);
/// C0 = smallest constant with E(tau) <= C0 (E(0) + delta tau) exp(C1 delta tau) at every sample.
/// Throws FitFailed for non-finite values, E(0) <= 0, or fewer than two samples.
GronwallFit gronwall_fit(const std::vector<double>& tau, const std::vector<double>& E, double delta, double T,
                         double cap_C0 = 1e3, double cap_C1 = 1e3);

struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Least squares of log y against log x. Throws FitFailed for fewer than three points or
/// non-positive values.
LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct StudyConfig {
    explicit StudyConfig(Field initial) : A0(std::move(initial)) {}

    Field A0;
    std::optional<Field> perturbation;
    PairedDataOptions data;
    std::vector<double> eps{0.2, 0.1, 0.05, 0.025};
    double T = 1.0;
    /// tau-spacing of the paired samples.
    double stride = 0.01;
    /// Short-pulse step; zero picks half the stability limit, rounded to divide the stride.
    double sp_dt = 0.0;
    double cfl = 0.2;
    double s = 4.0;
    KGOptions kg;
    /// Replace the Klein-Gordon run by the scaled-up short-pulse trajectory.
    bool manufactured_identity = false;
    /// Evaluate E, Etilde, J and the a-priori ledgers at every sample.
    bool energies = true;
    double cap_C = 1e3;
    double mean_tol = kDefaultMeanTol;
    /// Sup errors below this are treated as round-off and left out of the slope fits.
    double noise_floor = 1e-10;
};

struct EpsilonResult {
    double eps = 0.0;
    bool ok = false;
    std::string failure;
    std::optional<KGAbort> abort;
    double bound7 = 0.0;
    double unscaled_u_constant = 0.0;
    double unscaled_ut_constant = 0.0;
    ErrorSeries error;
    ErrorSeries unscaled;
    double leading_u = 0.0;
    double leading_ut = 0.0;
    std::vector<EnergyBreakdown> energy;  ///< components dropped to keep the report small
    BalanceResidual balance;
    std::optional<GronwallFit> gronwall;
    std::string gronwall_failure;
    std::optional<AprioriLedger> apriori;  ///< maxima over the samples
    std::size_t kg_steps = 0;
    double seconds = 0.0;
};

struct JustificationReport {
    DeltaReport delta;
    std::size_t sp_samples = 0;
    std::vector<EpsilonResult> runs;
    /// Fitted slope of log sup ||U - A||_{H^2} against log eps; present with >= 3 usable runs.
    std::optional<double> slope;
    std::optional<double> unscaled_slope;
    std::optional<double> leading_slope;
    /// max / min of sup error / eps over the usable runs.
    std::optional<double> band_ratio;
};

struct BalanceRefinement {
    double eps = 0.0;
    /// Coarsest first; each stride is half the previous one.
    std::vector<double> strides;
    std::vector<double> residuals;
    /// 10 machine epsilons of max|E + Etilde| divided by the finest stride: the
    /// size of round-off in the centered difference.
    double roundoff_floor = 0.0;
    /// True when the finest residual lies above roundoff_floor.
    bool measurable = false;
};

/// Balance residual on [0, window] at `levels` strides from `coarse` down, all taken
/// from one run sampled at the finest stride. Uses cfg for data, grid options and
/// mean_tol; cfg.T, cfg.stride and cfg.cfl are replaced by window, the finest stride
/// and `cfl`. Residual fast waves oscillate at tau-frequencies ~ k / eps^2, so the
/// decay is second order only once coarse is a small multiple of eps^2.
BalanceRefinement balance_refinement(const StudyConfig& cfg, double eps, double coarse, double window, int levels,
                                     double cfl);

/// One short-pulse run shared by every eps, one Klein-Gordon run per eps (in parallel).
/// A failing eps is recorded and the study continues with the others.
JustificationReport convergence_study(const StudyConfig& cfg);

/// Short-pulse trajectory sampled every `stride` in tau, with the step used.
SpTrajectory shared_sp_trajectory(const StudyConfig& cfg, double* sp_dt_used = nullptr);
/// Klein-Gordon run synchronized with the samples of sp (t_i = tau_i / eps).
KGRun synchronized_kg_run(const PairedData& data, const SpTrajectory& sp, double eps, const StudyConfig& cfg);

}  // namespace spulse
