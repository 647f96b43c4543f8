#pragma once

// Quasilinear Klein-Gordon equation u_tt - u_xx + u + (u^3)_xx = 0 in the
// original variables: RK4 time stepping, the equivalent symmetric first-order
// system, the energies E1..E3 with their balance laws, the continuation
// monitor, and the maps to and from the short-pulse frame
// u(t, x) = 2 eps U(tau, xi), tau = eps t, xi = (x - t) / (2 eps).

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spulse/spectral.hpp"

namespace spulse {

/// 1/sqrt(3): the weight 1 - 3u^2 vanishes at |u| = kUCritical.
inline const double kUCritical = 1.0 / std::sqrt(3.0);

struct KGState {
    double t = 0.0;
    Field u;
    Field ut;
};

struct KGOptions {
    /// Drop the cubic term (linear Klein-Gordon).
    bool linear_only = false;
    /// Abort once sup|u| reaches kUCritical - margin.
    double margin = 0.02;
    /// Abort once sup|u_x| exceeds this.
    double slope_cap = 1e3;
};

struct KGRates {
    Field du;
    Field dut;
};

struct KGAbort {
    double t = 0.0;
    std::string reason;
};

struct KGRun {
    std::vector<KGState> samples;
    std::optional<KGAbort> abort;
    std::size_t steps = 0;
};

struct SymmetricState {
    double t = 0.0;
    Field u1;  ///< u_t
    Field u2;  ///< (1 - 3u^2)^{1/2} u_x
    Field u3;  ///< u
};

struct SymmetricRates {
    Field d1;
    Field d2;
    Field d3;
};

struct KGEnergies {
    double E1 = 0.0;
    double E2 = 0.0;
    double E3 = 0.0;
};

struct EnergyRateCheck {
    std::vector<double> t;                      ///< interior sample times
    std::vector<std::array<double, 3>> residual; ///< |centered dE_i/dt - stated rate|
    std::array<double, 3> rate_scale{};         ///< sup of |stated rate| over the samples
    std::array<double, 3> max_normalized{};     ///< sup residual / max(rate_scale, tiny)
};

struct ContinuationReport {
    double M0 = 0.0;
    double M1 = 0.0;
    double M2 = 0.0;
    bool ok = true;
};

struct ScaledState {
    double tau = 0.0;
    Field U;
    Field Utau;
};

/// (u_t, u_xx - u - (u^3)_xx). Throws ValidityRegionExceeded if sup|u| >= 1/sqrt(3).
KGRates kg_rhs(const KGState& s, const KGOptions& opt = {});

/// cfl / sqrt(1 + k_max^2).
double kg_dt(const FourierGrid& grid, double cfl = 0.2);

KGState kg_step(const KGState& s, double dt, const KGOptions& opt = {});

/// RK4 from (u0, v0) to t_end, sampled at t = i * dt * sample_every and at t_end.
/// A breach of the continuation criterion ends the run; the samples gathered so
/// far are kept and the abort time is recorded instead of throwing.
KGRun kg_evolve(const Field& u0, const Field& v0, double t_end, double dt, int sample_every,
                const KGOptions& opt = {});

SymmetricState to_symmetric(const KGState& s);
/// Time derivatives of (u1, u2, u3) read off the symmetric system.
SymmetricRates symmetric_rhs(const SymmetricState& s);
SymmetricState symmetric_step(const SymmetricState& s, double dt);
SymmetricState symmetric_evolve(const SymmetricState& s0, double t_end, double dt);

KGEnergies kg_energies(const KGState& s);
/// dE_i/dt from the balance laws (twice the stated half-rates).
KGEnergies kg_energy_rates(const KGState& s);
/// Centered differences of E1..E3 over uniformly spaced samples against kg_energy_rates.
EnergyRateCheck energy_rate_check(const std::vector<KGState>& traj);

ContinuationReport continuation_monitor(const std::vector<KGState>& traj, double margin = 0.02);

/// Short-pulse frame of a Klein-Gordon state. grid_xi must have the same n and
/// length_x / (2 eps); throws GridMismatch otherwise.
ScaledState scale_down(const KGState& s, double eps, const Grid& grid_xi);

/// Inverse of scale_down: u = 2 eps U((x - t)/(2 eps)), u_t = -U_xi + 2 eps^2 U_tau,
/// with t = tau / eps. The 2 eps^2 U_tau term can be left out.
KGState scale_up(const Field& U, const Field& Utau, double tau, double eps, const Grid& grid_x,
                 bool include_tau_term = true);

/// x-grid commensurate with grid_xi for a given eps.
Grid x_grid_for(const Grid& grid_xi, double eps);

}  // namespace spulse
