#pragma once

// Experiment orchestration: INI configuration, the five scenarios, the run
// manifest with its pass/fail checks, and CSV/JSON report emission.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spulse/justification.hpp"

namespace spulse {

enum class Scenario { SimulateSp, SimulateKg, Justify, Converge, Balance };

/// "simulate-sp", "simulate-kg", "justify", "converge", "balance".
std::string scenario_name(Scenario s);
/// Throws ConfigInvalid (key "run.scenario") for an unknown name.
Scenario parse_scenario(std::string_view name);

enum class PerturbationKind { None, GaussianDerivative, Random };

struct ExperimentConfig {
    Scenario scenario = Scenario::Converge;

    // [grid]
    double length = 64.0 * kPi;
    std::size_t n = 1024;

    // [data]
    PulseShape shape = PulseShape::GaussianDerivative;
    double amplitude = 0.01;  ///< ||A0||_{H^2}
    double width = 1.0;
    double center = 0.5;      ///< fraction of the box
    PerturbationKind perturbation = PerturbationKind::GaussianDerivative;
    double perturbation_norm = 0.4;  ///< ||p||_{H^2}, at most 1
    double perturbation_width = 1.5;
    double perturbation_center = 0.45;
    /// Highest Fourier mode of a random perturbation.
    std::size_t perturbation_modes = 32;
    PerturbationMode mode = PerturbationMode::Slow;
    bool well_prepared = false;

    // [run]
    std::vector<double> eps{0.2, 0.1, 0.05, 0.025};
    double T = 1.0;
    double stride = 0.01;
    double cfl = 0.2;
    double sp_dt = 0.0;
    double s = 4.0;
    std::uint64_t seed = 0;
    int threads = 0;  ///< 0 leaves the OpenMP default
    /// simulate-kg: the run is meant to breach the validity region.
    bool expect_abort = false;
    /// balance: coarsest stride and window in units of eps^2, number of halvings + 1, Klein-Gordon cfl.
    double balance_coarse = 0.25;
    double balance_window = 8.0;
    int balance_levels = 3;
    double balance_cfl = 0.0125;

    // [tolerances]
    double mean_tol = kDefaultMeanTol;
    double delta_cap = 0.1;
    double balance_cap = 1e-3;
    double band_cap = 2.0;
    double slope_min = 0.8;
    double unscaled_slope_tol = 0.1;
    double leading_slope_tol = 0.05;
    double gronwall_cap = 1e3;
    double gronwall_spread = 0.2;
    double coercivity_cap = 0.5;
    double ratio_tol = 0.5;
    double noise_floor = 1e-10;
};

/// Reads an INI file with sections [grid], [data], [run], [tolerances]. Unknown
/// sections or keys, malformed values and violated invariants raise ConfigInvalid
/// naming the key. When `scenario` is given it replaces run.scenario before validation.
ExperimentConfig parse_config(const std::filesystem::path& path, std::optional<Scenario> scenario = std::nullopt);
ExperimentConfig parse_config_text(const std::string& text, std::optional<Scenario> scenario = std::nullopt);
/// Throws ConfigInvalid if an invariant is violated.
void validate(const ExperimentConfig& cfg);

/// Key-value snapshot, "section.key" -> value text, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_snapshot(const ExperimentConfig& cfg);

struct Check {
    std::string name;
    bool passed = false;
    /// Hard checks decide the exit status; soft ones are reported only.
    bool hard = true;
    double value = 0.0;
    double limit = 0.0;
    std::string detail;
};

struct AbortRecord {
    /// "ValidityRegionExceeded", or "NonFiniteValues" if the monitor was too late.
    std::string kind;
    double eps = 0.0;
    double t = 0.0;
    double tau = 0.0;
    std::string reason;
};

struct StageError {
    std::string stage;
    std::string message;
};

struct RunManifest {
    std::string scenario;
    std::string version;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, double>> timings;
    std::vector<Check> checks;
    std::vector<AbortRecord> aborts;
    std::vector<StageError> errors;
    /// Scenario-level numbers (delta, slopes, band ratio, ...).
    std::vector<std::pair<std::string, double>> metrics;

    /// True when every hard check passed and no stage failed.
    bool passed() const;
    const Check* find(std::string_view name) const;
};

struct Table {
    std::string name;  ///< file stem
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct RunOutput {
    RunManifest manifest;
    std::vector<Table> tables;
};

/// Executes the configured scenario. Solver aborts and per-stage failures are
/// recorded in the manifest rather than thrown.
RunOutput run(const ExperimentConfig& cfg);

/// summary.json plus one CSV per table (header row, 17 significant digits, LF).
/// Throws IoError if the directory cannot be created or a file cannot be written.
void emit_reports(const RunOutput& out, const std::filesystem::path& dir);

/// Builds the initial pulse and perturbation described by cfg on its xi-grid.
std::pair<Field, std::optional<Field>> scenario_data(const ExperimentConfig& cfg);

std::string version_string();

}  // namespace spulse
