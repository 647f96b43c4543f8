#include "spulse/runner.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "spulse/errors.hpp"

#ifndef SPULSE_VERSION
#define SPULSE_VERSION "0.0.0"
#endif

namespace spulse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ScenarioName {
    Scenario s;
    const char* name;
};
constexpr ScenarioName kScenarios[] = {{Scenario::SimulateSp, "simulate-sp"},
                                       {Scenario::SimulateKg, "simulate-kg"},
                                       {Scenario::Justify, "justify"},
                                       {Scenario::Converge, "converge"},
                                       {Scenario::Balance, "balance"}};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ConfigInvalid(key, "'" + t + "' is not a number");
    }
    if (used != t.size() || !std::isfinite(v)) throw ConfigInvalid(key, "'" + t + "' is not a finite number");
    return v;
}

long long to_integer(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(t, &used);
    } catch (const std::exception&) {
        throw ConfigInvalid(key, "'" + t + "' is not an integer");
    }
    if (used != t.size()) throw ConfigInvalid(key, "'" + t + "' is not an integer");
    return v;
}

bool to_bool(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigInvalid(key, "'" + t + "' is not a boolean");
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string eps_label(double e) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", e);
    return buf;
}

const char* shape_name(PulseShape s) {
    return s == PulseShape::GaussianDerivative ? "gaussian_derivative" : "sine_packet";
}

const char* perturbation_name(PerturbationKind k) {
    switch (k) {
    case PerturbationKind::None: return "none";
    case PerturbationKind::GaussianDerivative: return "gaussian_derivative";
    case PerturbationKind::Random: return "random";
    }
    return "";
}

const char* mode_name(PerturbationMode m) {
    switch (m) {
    case PerturbationMode::None: return "none";
    case PerturbationMode::Bump: return "bump";
    case PerturbationMode::Slow: return "slow";
    }
    return "";
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

Setter real(double ExperimentConfig::*m) {
    return [m](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*m = to_double(k, v); };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"grid.length", real(&ExperimentConfig::length)},
        {"grid.length_pi",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.length = kPi * to_double(k, v); }},
        {"grid.n",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const long long n = to_integer(k, v);
             if (n < 8 || n % 2 != 0) throw ConfigInvalid(k, "must be an even integer >= 8");
             c.n = static_cast<std::size_t>(n);
         }},
        {"data.shape",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const std::string t = trim(v);
             if (t == "gaussian_derivative") c.shape = PulseShape::GaussianDerivative;
             else if (t == "sine_packet") c.shape = PulseShape::SinePacket;
             else throw ConfigInvalid(k, "expected gaussian_derivative or sine_packet");
         }},
        {"data.amplitude", real(&ExperimentConfig::amplitude)},
        {"data.width", real(&ExperimentConfig::width)},
        {"data.center", real(&ExperimentConfig::center)},
        {"data.perturbation",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const std::string t = trim(v);
             if (t == "none") c.perturbation = PerturbationKind::None;
             else if (t == "gaussian_derivative") c.perturbation = PerturbationKind::GaussianDerivative;
             else if (t == "random") c.perturbation = PerturbationKind::Random;
             else throw ConfigInvalid(k, "expected none, gaussian_derivative or random");
         }},
        {"data.perturbation_norm", real(&ExperimentConfig::perturbation_norm)},
        {"data.perturbation_width", real(&ExperimentConfig::perturbation_width)},
        {"data.perturbation_center", real(&ExperimentConfig::perturbation_center)},
        {"data.perturbation_modes",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const long long m = to_integer(k, v);
             if (m < 1) throw ConfigInvalid(k, "must be >= 1");
             c.perturbation_modes = static_cast<std::size_t>(m);
         }},
        {"data.mode",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const std::string t = trim(v);
             if (t == "none") c.mode = PerturbationMode::None;
             else if (t == "bump") c.mode = PerturbationMode::Bump;
             else if (t == "slow") c.mode = PerturbationMode::Slow;
             else throw ConfigInvalid(k, "expected none, bump or slow");
         }},
        {"data.well_prepared",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.well_prepared = to_bool(k, v); }},
        {"run.scenario",
         [](ExperimentConfig& c, const std::string&, const std::string& v) { c.scenario = parse_scenario(trim(v)); }},
        {"run.epsilons",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.eps.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) c.eps.push_back(to_double(k, item));
         }},
        {"run.T", real(&ExperimentConfig::T)},
        {"run.stride", real(&ExperimentConfig::stride)},
        {"run.cfl", real(&ExperimentConfig::cfl)},
        {"run.sp_dt", real(&ExperimentConfig::sp_dt)},
        {"run.s", real(&ExperimentConfig::s)},
        {"run.seed",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             const long long s = to_integer(k, v);
             if (s < 0) throw ConfigInvalid(k, "must be >= 0");
             c.seed = static_cast<std::uint64_t>(s);
         }},
        {"run.threads",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.threads = static_cast<int>(to_integer(k, v));
         }},
        {"run.expect_abort",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.expect_abort = to_bool(k, v); }},
        {"run.balance_coarse", real(&ExperimentConfig::balance_coarse)},
        {"run.balance_window", real(&ExperimentConfig::balance_window)},
        {"run.balance_levels",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.balance_levels = static_cast<int>(to_integer(k, v));
         }},
        {"run.balance_cfl", real(&ExperimentConfig::balance_cfl)},
        {"tolerances.mean_tol", real(&ExperimentConfig::mean_tol)},
        {"tolerances.delta_cap", real(&ExperimentConfig::delta_cap)},
        {"tolerances.balance_cap", real(&ExperimentConfig::balance_cap)},
        {"tolerances.band_cap", real(&ExperimentConfig::band_cap)},
        {"tolerances.slope_min", real(&ExperimentConfig::slope_min)},
        {"tolerances.unscaled_slope_tol", real(&ExperimentConfig::unscaled_slope_tol)},
        {"tolerances.leading_slope_tol", real(&ExperimentConfig::leading_slope_tol)},
        {"tolerances.gronwall_cap", real(&ExperimentConfig::gronwall_cap)},
        {"tolerances.gronwall_spread", real(&ExperimentConfig::gronwall_spread)},
        {"tolerances.coercivity_cap", real(&ExperimentConfig::coercivity_cap)},
        {"tolerances.ratio_tol", real(&ExperimentConfig::ratio_tol)},
        {"tolerances.noise_floor", real(&ExperimentConfig::noise_floor)},
    };
    return table;
}

void require(bool ok, const char* key, const std::string& reason) {
    if (!ok) throw ConfigInvalid(key, reason);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

StudyConfig study_config(const ExperimentConfig& cfg) {
    auto [A0, p] = scenario_data(cfg);
    StudyConfig sc(std::move(A0));
    sc.perturbation = std::move(p);
    sc.data.mode = cfg.mode;
    sc.data.well_prepared = cfg.well_prepared;
    sc.eps = cfg.eps;
    sc.T = cfg.T;
    sc.stride = cfg.stride;
    sc.sp_dt = cfg.sp_dt;
    sc.cfl = cfg.cfl;
    sc.s = cfg.s;
    sc.cap_C = cfg.gronwall_cap;
    sc.mean_tol = cfg.mean_tol;
    sc.noise_floor = cfg.noise_floor;
    return sc;
}

Check make_check(std::string name, bool passed, double value, double limit, std::string detail = {},
                 bool hard = true) {
    return {std::move(name), passed, hard, value, limit, std::move(detail)};
}

bool all_finite(const std::vector<KGState>& traj) {
    return std::all_of(traj.begin(), traj.end(), [](const KGState& s) { return s.u.all_finite() && s.ut.all_finite(); });
}

AbortRecord abort_record(double eps, double t, const std::string& reason) {
    const char* kind = reason == "non-finite values" ? "NonFiniteValues" : "ValidityRegionExceeded";
    return {kind, eps, t, eps * t, reason};
}

double spread(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo > 0.0 ? (*hi - *lo) / *lo : std::numeric_limits<double>::infinity();
}

void simulate_sp(const ExperimentConfig& cfg, RunOutput& out) {
    RunManifest& m = out.manifest;
    const StudyConfig sc = study_config(cfg);
    auto t0 = std::chrono::steady_clock::now();
    double dt = 0.0;
    const SpTrajectory sp = shared_sp_trajectory(sc, &dt);
    m.timings.emplace_back("sp_evolve", elapsed(t0));
    m.metrics.emplace_back("sp_dt", dt);
    m.metrics.emplace_back("samples", static_cast<double>(sp.size()));

    Table tr{"trajectory_sp", {"tau", "l2", "h2", "hs", "linf"}, {}};
    bool finite = true;
    for (const auto& s : sp) {
        finite = finite && s.A.all_finite();
        tr.rows.push_back({s.tau, l2_norm(s.A), sobolev_norm(s.A, 2.0), sobolev_norm(s.A, cfg.s), linf_norm(s.A)});
    }
    out.tables.push_back(std::move(tr));
    m.checks.push_back(make_check("sp_finite", finite, finite ? 1.0 : 0.0, 1.0));
    const SmallNormCheck sn = small_norm_check(sc.A0);
    m.checks.push_back(make_check("small_norm", sn.ok, sn.sum, 1.0 / 6.0, "global existence threshold", false));
    if (finite && cfg.s > 3.5) {
        ShortPulseOptions opt;
        opt.mean_tol = cfg.mean_tol;
        const double delta = delta_of_trajectory(sp, cfg.s, opt).delta;
        m.metrics.emplace_back("delta", delta);
        m.checks.push_back(make_check("delta_cap", delta <= cfg.delta_cap, delta, cfg.delta_cap, {}, false));
    }
}

void simulate_kg(const ExperimentConfig& cfg, RunOutput& out) {
    RunManifest& m = out.manifest;
    const StudyConfig sc = study_config(cfg);
    for (double eps : cfg.eps) {
        const std::string tag = "eps" + eps_label(eps);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const PairedData data = build_paired_initial_data(sc.A0, sc.perturbation, eps, sc.data);
            const double dt_sample = cfg.stride / eps;
            const double rule = kg_dt(*data.kg0.u.grid(), cfg.cfl);
            const auto every = std::max<long long>(1, static_cast<long long>(std::ceil(dt_sample / rule - 1e-12)));
            const double dt = dt_sample / static_cast<double>(every);
            const KGRun run = kg_evolve(data.kg0.u, data.kg0.ut, cfg.T / eps, dt, static_cast<int>(every));
            m.timings.emplace_back("kg_" + tag, elapsed(t0));
            m.metrics.emplace_back("steps_" + tag, static_cast<double>(run.steps));

            Table tr{"trajectory_kg_" + tag, {"t", "tau", "l2_u", "h2_u", "linf_u", "E1", "E2", "E3"}, {}};
            for (const auto& s : run.samples) {
                const bool ok = s.u.all_finite() && s.ut.all_finite();
                const KGEnergies e = ok ? kg_energies(s) : KGEnergies{kNaN, kNaN, kNaN};
                tr.rows.push_back({s.t, eps * s.t, l2_norm(s.u), sobolev_norm(s.u, 2.0), linf_norm(s.u), e.E1, e.E2, e.E3});
            }
            out.tables.push_back(std::move(tr));

            const bool finite = all_finite(run.samples);
            if (run.abort) m.aborts.push_back(abort_record(eps, run.abort->t, run.abort->reason));
            if (cfg.expect_abort) {
                const bool clean = run.abort && finite && run.abort->reason != "non-finite values";
                m.checks.push_back(make_check("kg_" + tag + "_abort_before_nonfinite", clean,
                                              run.abort ? run.abort->t : kNaN, cfg.T / eps,
                                              run.abort ? run.abort->reason : "no abort"));
            } else {
                m.checks.push_back(make_check("kg_" + tag + "_completed", !run.abort && finite,
                                              run.samples.empty() ? 0.0 : run.samples.back().t, cfg.T / eps,
                                              run.abort ? run.abort->reason : ""));
            }
            if (!run.abort && run.samples.size() >= 3) {
                const EnergyRateCheck rc = energy_rate_check(run.samples);
                const double worst = *std::max_element(rc.max_normalized.begin(), rc.max_normalized.end());
                m.checks.push_back(make_check("kg_" + tag + "_energy_rate", worst <= 1e-5, worst, 1e-5,
                                              "centered differences at the sampling stride", false));
            }
        } catch (const ValidityRegionExceeded& e) {
            // The initial state itself lies outside |u| < 1/sqrt(3).
            m.aborts.push_back(abort_record(eps, e.time(), e.reason()));
            m.checks.push_back(make_check("kg_" + tag + (cfg.expect_abort ? "_abort_before_nonfinite" : "_completed"),
                                          cfg.expect_abort, e.time(), cfg.T / eps, e.reason()));
        } catch (const Error& e) {
            m.errors.push_back({"kg_" + tag, e.what()});
        }
    }
}

void study(const ExperimentConfig& cfg, RunOutput& out) {
    RunManifest& m = out.manifest;
    StudyConfig sc = study_config(cfg);
    const bool energies = cfg.scenario != Scenario::Converge;
    sc.energies = energies;
    auto t0 = std::chrono::steady_clock::now();
    const JustificationReport rep = convergence_study(sc);
    m.timings.emplace_back("study", elapsed(t0));

    m.metrics.emplace_back("delta", rep.delta.delta);
    m.metrics.emplace_back("sp_samples", static_cast<double>(rep.sp_samples));
    m.checks.push_back(make_check("delta_cap", rep.delta.delta <= cfg.delta_cap, rep.delta.delta, cfg.delta_cap));

    Table conv{"convergence", {"epsilon", "sup_h2_error", "tau_at_sup", "slope_running"}, {}};
    std::vector<double> es, sups;
    for (const auto& r : rep.runs) {
        const std::string tag = "eps" + eps_label(r.eps);
        m.timings.emplace_back("run_" + tag, r.seconds);
        m.metrics.emplace_back("bound7_" + tag, r.bound7);
        if (r.abort) m.aborts.push_back(abort_record(r.eps, r.abort->t, r.abort->reason));
        m.checks.push_back(make_check("run_" + tag, r.ok, r.ok ? 1.0 : 0.0, 1.0, r.failure));
        double running = kNaN;
        if (r.ok && r.error.sup > cfg.noise_floor) {
            es.push_back(r.eps);
            sups.push_back(r.error.sup);
            if (es.size() >= 3) running = fit_loglog(es, sups).slope;
        }
        conv.rows.push_back({r.eps, r.ok ? r.error.sup : kNaN, r.ok ? r.error.tau_at_sup : kNaN, running});

        Table tr{"trajectory_error_" + tag, {"tau", "h2_error", "unscaled_h2_error"}, {}};
        for (std::size_t i = 0; i < r.error.tau.size(); ++i)
            tr.rows.push_back({r.error.tau[i], r.error.value[i], i < r.unscaled.value.size() ? r.unscaled.value[i] : kNaN});
        out.tables.push_back(std::move(tr));
    }
    out.tables.insert(out.tables.begin(), std::move(conv));

    if (cfg.scenario != Scenario::Balance) {
        const double slope = rep.slope.value_or(kNaN);
        const double band = rep.band_ratio.value_or(kNaN);
        const double unscaled = rep.unscaled_slope.value_or(kNaN);
        const double leading = rep.leading_slope.value_or(kNaN);
        m.metrics.emplace_back("slope", slope);
        m.metrics.emplace_back("band_ratio", band);
        m.metrics.emplace_back("unscaled_slope", unscaled);
        m.metrics.emplace_back("leading_slope", leading);
        m.checks.push_back(make_check("slope", rep.slope && slope >= cfg.slope_min, slope, cfg.slope_min,
                                      rep.slope ? "" : "fewer than three usable runs"));
        m.checks.push_back(make_check("band", rep.band_ratio && band <= cfg.band_cap, band, cfg.band_cap));
        m.checks.push_back(make_check("unscaled_slope",
                                      rep.unscaled_slope && std::fabs(unscaled - 0.5) <= cfg.unscaled_slope_tol,
                                      unscaled, 0.5, "tolerance " + eps_label(cfg.unscaled_slope_tol)));
        m.checks.push_back(make_check("leading_slope",
                                      rep.leading_slope && std::fabs(leading + 0.5) <= cfg.leading_slope_tol, leading,
                                      -0.5, "tolerance " + eps_label(cfg.leading_slope_tol)));
    }
    if (!energies) return;

    Table en{"energy", {"epsilon", "tau", "E", "Etilde", "J", "balance_residual"}, {}};
    std::vector<double> c0s, growth;
    bool gronwall_all = true;
    for (const auto& r : rep.runs) {
        const std::string tag = "eps" + eps_label(r.eps);
        for (std::size_t i = 0; i < r.energy.size(); ++i) {
            const auto& b = r.energy[i];
            const double res = (i >= 1 && i <= r.balance.residual.size()) ? r.balance.residual[i - 1] : kNaN;
            en.rows.push_back({r.eps, b.tau, b.E, b.Etilde, b.J, res});
        }
        if (!r.ok) {
            gronwall_all = false;
            continue;
        }
        m.checks.push_back(make_check("balance_" + tag, r.balance.max_residual <= cfg.balance_cap,
                                      r.balance.max_residual, cfg.balance_cap, "stride " + eps_label(cfg.stride)));
        if (cfg.scenario != Scenario::Justify) continue;
        if (r.gronwall) {
            const GronwallFit& g = *r.gronwall;
            m.metrics.emplace_back("C0_" + tag, g.C0);
            m.metrics.emplace_back("C1_" + tag, g.C1);
            m.metrics.emplace_back("envelope_" + tag, g.envelope);
            const bool ok = g.ok && g.C0 <= cfg.gronwall_cap && g.C1 <= cfg.gronwall_cap;
            m.checks.push_back(make_check("gronwall_" + tag, ok, std::max(g.C0, g.C1), cfg.gronwall_cap));
            c0s.push_back(g.C0);
            growth.push_back(std::exp(g.C1 * rep.delta.delta * cfg.T));
        } else {
            gronwall_all = false;
            m.checks.push_back(make_check("gronwall_" + tag, false, kNaN, cfg.gronwall_cap, r.gronwall_failure));
        }
        if (r.apriori) {
            const AprioriLedger& a = *r.apriori;
            m.metrics.emplace_back("apriori_R_xitau_" + tag, a.R_xitau_l2.constant);
            m.metrics.emplace_back("apriori_eps_Rtau_inf_" + tag, a.eps_Rtau_inf.constant);
            m.metrics.emplace_back("apriori_Etilde_" + tag, a.Etilde.constant);
            m.metrics.emplace_back("apriori_J_" + tag, a.J.constant);
            m.checks.push_back(make_check("coercivity_" + tag, a.coercivity <= cfg.coercivity_cap, a.coercivity,
                                          cfg.coercivity_cap));
            const double worst = std::max({a.R_xitau_l2.constant, a.eps_Rtau_inf.constant, a.Etilde.constant,
                                           a.J.constant});
            m.checks.push_back(make_check("apriori_" + tag, a.within_cap, worst, a.cap,
                                          "fitted bound constants within the cap", false));
        }
    }
    out.tables.push_back(std::move(en));
    if (cfg.scenario == Scenario::Justify) {
        const bool have = gronwall_all && c0s.size() >= 2;
        const double s0 = have ? spread(c0s) : kNaN;
        const double s1 = have ? spread(growth) : kNaN;
        m.metrics.emplace_back("gronwall_C0_spread", s0);
        m.metrics.emplace_back("gronwall_growth_spread", s1);
        m.checks.push_back(make_check("gronwall_C0_spread", have && s0 <= cfg.gronwall_spread, s0, cfg.gronwall_spread));
        m.checks.push_back(make_check("gronwall_growth_spread", have && s1 <= cfg.gronwall_spread, s1,
                                      cfg.gronwall_spread, "spread of exp(C1 delta T)"));
    }
}

void balance(const ExperimentConfig& cfg, RunOutput& out) {
    study(cfg, out);
    RunManifest& m = out.manifest;
    const StudyConfig sc = study_config(cfg);
    Table tb{"balance_refinement", {"epsilon", "stride", "max_residual", "ratio", "roundoff_floor", "measurable"}, {}};
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t measured = 0;
    for (double eps : cfg.eps) {
        const std::string tag = "eps" + eps_label(eps);
        try {
            const BalanceRefinement b = balance_refinement(sc, eps, cfg.balance_coarse * eps * eps,
                                                           cfg.balance_window * eps * eps, cfg.balance_levels,
                                                           cfg.balance_cfl);
            bool ok = true;
            double worst = 0.0;
            for (std::size_t i = 0; i < b.strides.size(); ++i) {
                const double ratio = i == 0 ? kNaN : b.residuals[i - 1] / b.residuals[i];
                if (i > 0) {
                    const double dev = std::fabs(ratio - 4.0);
                    worst = std::max(worst, dev);
                    ok = ok && dev <= cfg.ratio_tol;
                }
                tb.rows.push_back({eps, b.strides[i], b.residuals[i], ratio, b.roundoff_floor, b.measurable ? 1.0 : 0.0});
            }
            if (b.measurable) {
                ++measured;
                m.checks.push_back(make_check("balance_decay_" + tag, ok, worst, cfg.ratio_tol,
                                              "max |ratio - 4| under stride halving"));
            } else {
                m.checks.push_back(make_check("balance_decay_" + tag, ok, worst, cfg.ratio_tol,
                                              "finest residual below the round-off floor " + eps_label(b.roundoff_floor),
                                              false));
            }
        } catch (const Error& e) {
            m.errors.push_back({"balance_refinement_" + tag, e.what()});
        }
    }
    m.timings.emplace_back("balance_refinement", elapsed(t0));
    m.checks.push_back(make_check("balance_decay_measured", measured >= 1, static_cast<double>(measured), 1.0,
                                  "epsilon values with residuals above round-off"));
    out.tables.push_back(std::move(tb));
}

}  // namespace

std::string scenario_name(Scenario s) {
    for (const auto& e : kScenarios)
        if (e.s == s) return e.name;
    return "";
}

Scenario parse_scenario(std::string_view name) {
    for (const auto& e : kScenarios)
        if (name == e.name) return e.s;
    throw ConfigInvalid("run.scenario", "unknown scenario '" + std::string(name) + "'");
}

ExperimentConfig parse_config_text(const std::string& text, std::optional<Scenario> scenario) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigInvalid("<file>", e.message() + " at line " + std::to_string(e.line()));
    }
    ExperimentConfig cfg;
    const auto& table = setters();
    for (const auto& [section, node] : tree) {
        if (node.empty())
            throw ConfigInvalid(section, "key outside of a section");
        if (section != "grid" && section != "data" && section != "run" && section != "tolerances")
            throw ConfigInvalid(section, "unknown section");
        for (const auto& [key, value] : node) {
            const std::string path = section + "." + key;
            const auto it = table.find(path);
            if (it == table.end()) throw ConfigInvalid(path, "unknown key");
            it->second(cfg, path, value.data());
        }
    }
    if (tree.count("grid") && tree.get_child("grid").count("length") && tree.get_child("grid").count("length_pi"))
        throw ConfigInvalid("grid.length_pi", "give either length or length_pi");
    if (scenario) cfg.scenario = *scenario;
    validate(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path, std::optional<Scenario> scenario) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigInvalid("<file>", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), scenario);
}

void validate(const ExperimentConfig& c) {
    require(c.length > 0.0, "grid.length", "must be positive");
    require(c.n >= 8 && c.n % 2 == 0, "grid.n", "must be an even integer >= 8");
    require(c.amplitude >= 0.0, "data.amplitude", "must be >= 0");
    require(c.width > 0.0, "data.width", "must be positive");
    require(c.center > 0.0 && c.center < 1.0, "data.center", "must lie in (0, 1)");
    require(c.perturbation_norm >= 0.0 && c.perturbation_norm <= 1.0, "data.perturbation_norm", "must lie in [0, 1]");
    require(c.perturbation_width > 0.0, "data.perturbation_width", "must be positive");
    require(c.perturbation_center > 0.0 && c.perturbation_center < 1.0, "data.perturbation_center",
            "must lie in (0, 1)");
    require(c.perturbation != PerturbationKind::Random || c.perturbation_modes <= c.n / 3, "data.perturbation_modes", "must not exceed n/3");
    require(!c.eps.empty(), "run.epsilons", "must list at least one value");
    for (double e : c.eps) require(e > 0.0 && e < 1.0, "run.epsilons", "values must lie in (0, 1)");
    require(c.T > 0.0, "run.T", "must be positive");
    require(c.stride > 0.0 && c.stride <= c.T, "run.stride", "must lie in (0, T]");
    const double m = c.T / c.stride;
    require(std::fabs(m - std::round(m)) <= 1e-9 * m, "run.stride", "must divide T");
    require(c.cfl > 0.0 && c.cfl <= 1.0, "run.cfl", "must lie in (0, 1]");
    require(c.sp_dt >= 0.0, "run.sp_dt", "must be >= 0 (0 picks a stable step)");
    require(c.threads >= 0, "run.threads", "must be >= 0");
    const bool study = c.scenario == Scenario::Justify || c.scenario == Scenario::Converge ||
                       c.scenario == Scenario::Balance;
    if (study) {
        require(c.s > 3.5, "run.s", "must exceed 7/2");
        require(c.eps.size() >= 3, "run.epsilons", "need at least three values for a slope fit");
    }
    require(c.balance_coarse > 0.0, "run.balance_coarse", "must be positive");
    require(c.balance_window >= 2.0 * c.balance_coarse, "run.balance_window", "must hold two coarse strides");
    require(c.balance_levels >= 2 && c.balance_levels <= 12, "run.balance_levels", "must lie in [2, 12]");
    require(c.balance_cfl > 0.0 && c.balance_cfl <= 1.0, "run.balance_cfl", "must lie in (0, 1]");
    require(c.mean_tol > 0.0, "tolerances.mean_tol", "must be positive");
    require(c.delta_cap > 0.0, "tolerances.delta_cap", "must be positive");
    require(c.balance_cap > 0.0, "tolerances.balance_cap", "must be positive");
    require(c.band_cap >= 1.0, "tolerances.band_cap", "must be >= 1");
    require(c.unscaled_slope_tol > 0.0, "tolerances.unscaled_slope_tol", "must be positive");
    require(c.leading_slope_tol > 0.0, "tolerances.leading_slope_tol", "must be positive");
    require(c.gronwall_cap > 0.0, "tolerances.gronwall_cap", "must be positive");
    require(c.gronwall_spread > 0.0, "tolerances.gronwall_spread", "must be positive");
    require(c.coercivity_cap > 0.0, "tolerances.coercivity_cap", "must be positive");
    require(c.ratio_tol > 0.0, "tolerances.ratio_tol", "must be positive");
    require(c.noise_floor >= 0.0, "tolerances.noise_floor", "must be >= 0");
}

std::vector<std::pair<std::string, std::string>> config_snapshot(const ExperimentConfig& c) {
    std::string eps;
    for (std::size_t i = 0; i < c.eps.size(); ++i) eps += (i ? "," : "") + fmt(c.eps[i]);
    return {
        {"grid.length", fmt(c.length)},
        {"grid.n", std::to_string(c.n)},
        {"data.shape", shape_name(c.shape)},
        {"data.amplitude", fmt(c.amplitude)},
        {"data.width", fmt(c.width)},
        {"data.center", fmt(c.center)},
        {"data.perturbation", perturbation_name(c.perturbation)},
        {"data.perturbation_norm", fmt(c.perturbation_norm)},
        {"data.perturbation_width", fmt(c.perturbation_width)},
        {"data.perturbation_center", fmt(c.perturbation_center)},
        {"data.perturbation_modes", std::to_string(c.perturbation_modes)},
        {"data.mode", mode_name(c.mode)},
        {"data.well_prepared", c.well_prepared ? "true" : "false"},
        {"run.scenario", scenario_name(c.scenario)},
        {"run.epsilons", eps},
        {"run.T", fmt(c.T)},
        {"run.stride", fmt(c.stride)},
        {"run.cfl", fmt(c.cfl)},
        {"run.sp_dt", fmt(c.sp_dt)},
        {"run.s", fmt(c.s)},
        {"run.seed", std::to_string(c.seed)},
        {"run.threads", std::to_string(c.threads)},
        {"run.expect_abort", c.expect_abort ? "true" : "false"},
        {"run.balance_coarse", fmt(c.balance_coarse)},
        {"run.balance_window", fmt(c.balance_window)},
        {"run.balance_levels", std::to_string(c.balance_levels)},
        {"run.balance_cfl", fmt(c.balance_cfl)},
        {"tolerances.mean_tol", fmt(c.mean_tol)},
        {"tolerances.delta_cap", fmt(c.delta_cap)},
        {"tolerances.balance_cap", fmt(c.balance_cap)},
        {"tolerances.band_cap", fmt(c.band_cap)},
        {"tolerances.slope_min", fmt(c.slope_min)},
        {"tolerances.unscaled_slope_tol", fmt(c.unscaled_slope_tol)},
        {"tolerances.leading_slope_tol", fmt(c.leading_slope_tol)},
        {"tolerances.gronwall_cap", fmt(c.gronwall_cap)},
        {"tolerances.gronwall_spread", fmt(c.gronwall_spread)},
        {"tolerances.coercivity_cap", fmt(c.coercivity_cap)},
        {"tolerances.ratio_tol", fmt(c.ratio_tol)},
        {"tolerances.noise_floor", fmt(c.noise_floor)},
    };
}

std::pair<Field, std::optional<Field>> scenario_data(const ExperimentConfig& cfg) {
    const Grid g = make_grid(cfg.length, cfg.n);
    Field A0 = admissible_initial_data(cfg.shape, cfg.amplitude, cfg.width, g, cfg.center * cfg.length);
    std::optional<Field> p;
    switch (cfg.perturbation) {
    case PerturbationKind::None: break;
    case PerturbationKind::GaussianDerivative:
        p = admissible_initial_data(PulseShape::GaussianDerivative, cfg.perturbation_norm, cfg.perturbation_width, g,
                                    cfg.perturbation_center * cfg.length);
        break;
    case PerturbationKind::Random: {
        // Zero-mean trigonometric polynomial with normal coefficients decaying like (1 + k^2)^{-1}.
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> normal;
        std::vector<double> a(cfg.perturbation_modes + 1), b(cfg.perturbation_modes + 1);
        const double k1 = 2.0 * kPi / cfg.length;
        for (std::size_t mode = 1; mode <= cfg.perturbation_modes; ++mode) {
            const double k = k1 * static_cast<double>(mode);
            a[mode] = normal(rng) / (1.0 + k * k);
            b[mode] = normal(rng) / (1.0 + k * k);
        }
        Field f = Field::sample(g, [&](double x) {
            double v = 0.0;
            for (std::size_t mode = 1; mode <= cfg.perturbation_modes; ++mode) {
                const double kx = k1 * static_cast<double>(mode) * x;
                v += a[mode] * std::cos(kx) + b[mode] * std::sin(kx);
            }
            return v;
        });
        const double norm = sobolev_norm(f, 2.0);
        f *= norm > 0.0 ? cfg.perturbation_norm / norm : 0.0;
        p = std::move(f);
        break;
    }
    }
    return {std::move(A0), std::move(p)};
}

std::string version_string() { return std::string("spulse ") + SPULSE_VERSION; }

bool RunManifest::passed() const {
    if (!errors.empty()) return false;
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return !c.hard || c.passed; });
}

const Check* RunManifest::find(std::string_view name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

RunOutput run(const ExperimentConfig& cfg) {
    validate(cfg);
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
    RunOutput out;
    RunManifest& m = out.manifest;
    m.scenario = scenario_name(cfg.scenario);
    m.version = version_string();
    m.config = config_snapshot(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        switch (cfg.scenario) {
        case Scenario::SimulateSp: simulate_sp(cfg, out); break;
        case Scenario::SimulateKg: simulate_kg(cfg, out); break;
        case Scenario::Justify:
        case Scenario::Converge: study(cfg, out); break;
        case Scenario::Balance: balance(cfg, out); break;
        }
    } catch (const Error& e) {
        m.errors.push_back({m.scenario, e.what()});
    }
    m.timings.emplace_back("total", elapsed(t0));
    return out;
}

void emit_reports(const RunOutput& out, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    auto write = [&](const std::string& file, const std::string& body) {
        std::ofstream f(dir / file, std::ios::binary | std::ios::trunc);
        f << body;
        f.flush();
        if (!f) throw IoError("cannot write " + (dir / file).string());
    };

    nlohmann::ordered_json j;
    const RunManifest& m = out.manifest;
    j["scenario"] = m.scenario;
    j["version"] = m.version;
    j["passed"] = m.passed();
    j["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.config) j["config"][k] = v;
    j["timings_seconds"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.timings) j["timings_seconds"][k] = v;
    j["metrics"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m.metrics) j["metrics"][k] = v;
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : m.checks)
        j["checks"].push_back({{"name", c.name},
                               {"passed", c.passed},
                               {"hard", c.hard},
                               {"value", c.value},
                               {"limit", c.limit},
                               {"detail", c.detail}});
    j["aborts"] = nlohmann::ordered_json::array();
    for (const auto& a : m.aborts)
        j["aborts"].push_back({{"kind", a.kind}, {"epsilon", a.eps}, {"t", a.t}, {"tau", a.tau}, {"reason", a.reason}});
    j["errors"] = nlohmann::ordered_json::array();
    for (const auto& e : m.errors) j["errors"].push_back({{"stage", e.stage}, {"message", e.message}});
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& t : out.tables)
        j["files"].push_back({{"name", t.name + ".csv"}, {"rows", t.rows.size()}});

    for (const auto& t : out.tables) {
        std::string body;
        for (std::size_t c = 0; c < t.columns.size(); ++c) body += (c ? "," : "") + t.columns[c];
        body += '\n';
        for (const auto& row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) body += (c ? "," : "") + fmt(row[c]);
            body += '\n';
        }
        write(t.name + ".csv", body);
    }
    write("summary.json", j.dump(2) + "\n");
}

}  // namespace spulse
