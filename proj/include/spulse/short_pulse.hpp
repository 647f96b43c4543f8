#pragma once

// Short-pulse equation A_{xi tau} = A + (A^3)_{xi xi} in its evolution form
// A_tau = d^{-1}A + (A^3)_xi on a periodic box, with the tau-derivative
// closures, the linear inhomogeneous (Duhamel) solver and the data
// constructions used by the justification harness.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "spulse/spectral.hpp"

namespace spulse {

struct ShortPulseOptions {
    /// Drop the cubic term (linear short-pulse flow).
    bool linear_only = false;
    double mean_tol = kDefaultMeanTol;
};

struct ShortPulseState {
    double tau = 0.0;
    Field A;
};

using SpTrajectory = std::vector<ShortPulseState>;

struct TimeDerivatives {
    Field A_tau;
    Field A_tautau;
    Field A_tautautau;
    /// Mean of A^3 removed before taking d^{-1}(A^3); zero on the whole line.
    double discarded_cube_mean = 0.0;
};

struct DeltaReport {
    double s = 0.0;
    double sup_A = 0.0;
    double sup_At = 0.0;
    double sup_Att = 0.0;
    double sup_Attt = 0.0;
    double delta = 0.0;
};

struct AntiderivativeDiagnostics {
    Field B1;  ///< d^{-1}A
    Field B2;  ///< d^{-2}A
    Field B3;  ///< d^{-3}A + d^{-1}A^3
    double discarded_cube_mean = 0.0;
};

struct SmallNormCheck {
    double sum = 0.0;
    bool ok = true;
};

/// d^{-1}A + (A^3)_xi with a dealiased cube.
Field sp_rhs(const Field& A, const ShortPulseOptions& opt = {});

/// A_tau, A_tautau, A_tautautau from the closed-form tau-derivative formulas.
TimeDerivatives sp_time_derivatives(const Field& A, const ShortPulseOptions& opt = {});

/// 0.5 / (L/(2 pi) + 3 k_max^2 max|A|^2).
double sp_dt_max(const Field& A);

/// One classical RK4 step; dt may be negative (backward integration).
/// Throws StepUnstable if the L2 norm grows by more than 10x in one step.
ShortPulseState sp_step(const ShortPulseState& state, double dt, const ShortPulseOptions& opt = {});

/// Samples at tau = 0, dt*sample_every, ..., and always at tau = T (reached
/// by a shortened last step when T is not a multiple of dt).
SpTrajectory sp_evolve(const Field& A0, double T, double dt, int sample_every, const ShortPulseOptions& opt = {});

/// ||A0'||^2 + ||A0''||^2 against the 1/6 global-existence threshold.
SmallNormCheck small_norm_check(const Field& A0);

/// Suprema over the samples of ||A||_{H^s}, ||A_tau||_{H^{s-1}}, ||A_tautau||_{H^{s-2}},
/// ||A_tautautau||_{H^{s-3}}; requires s > 7/2.
DeltaReport delta_of_trajectory(const SpTrajectory& traj, double s, const ShortPulseOptions& opt = {});

enum class DuhamelCase {
    /// F = G_xi: B = S(tau)B0 + int_0^tau S(tau - t') G(t') dt'.
    DivergenceForm,
    /// F differentiable in tau: B = -F + S(tau)(B0 + F(0)) + int_0^tau S(tau - t') F_tau(t') dt'.
    Differentiable,
};

struct ForcingSample {
    Field value;               ///< G (divergence form) or F (differentiable case)
    std::optional<Field> rate; ///< F_tau, differentiable case only
};

/// Forcing evaluated at sample index i, tau_i = i * dt.
using ForcingSource = std::function<ForcingSample(std::size_t i, double tau)>;

struct DuhamelOptions {
    double mean_tol = kDefaultMeanTol;
    /// Relative change allowed when the quadrature spacing is doubled.
    double resolution_tol = 1e-4;
};

/// Solves B_{tau xi} = B + F, B(0) = B0 by composite Simpson quadrature of the
/// Duhamel integral. T must be an integer multiple of dt. Returns B at tau_i = i dt.
std::vector<Field> duhamel_solve(const Field& B0, const ForcingSource& forcing, double T, double dt,
                                 DuhamelCase which, const DuhamelOptions& opt = {});

enum class PulseShape { GaussianDerivative, SinePacket };

/// A0 = d^3 psi for a localized psi centred at `center` (default: middle of the box),
/// scaled so that ||A0||_{H^2} = amplitude. Throws BoundaryLeak if psi is not
/// below 1e-10 of its peak at the box edge.
Field admissible_initial_data(PulseShape shape, double amplitude, double width, const Grid& grid,
                              std::optional<double> center = std::nullopt);

/// B1 = d^{-1}A, B2 = d^{-2}A, B3 = d^{-3}A + d^{-1}A^3 by direct anti-differentiation.
AntiderivativeDiagnostics antiderivative_diagnostics(const Field& A, const ShortPulseOptions& opt = {});

}  // namespace spulse
