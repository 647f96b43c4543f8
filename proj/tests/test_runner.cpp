#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spulse/errors.hpp"
#include "spulse/runner.hpp"

using namespace spulse;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error_key(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigInvalid& e) {
        return e.key();
    }
    return "";
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("spulse_test_runner_" + name);
    std::filesystem::remove_all(p);
    return p;
}

const Table* table(const RunOutput& out, const std::string& name) {
    for (const auto& t : out.tables)
        if (t.name == name) return &t;
    return nullptr;
}

// Small box and short horizon so each scenario runs in about a second.
const char* kSmall = R"([grid]
length_pi = 32
n = 512
[data]
amplitude = 0.1
perturbation_norm = 0.4
[run]
epsilons = 0.2, 0.1, 0.05
T = 0.1
stride = 0.05
)";

}  // namespace

TEST_CASE("parse_config fills defaults") {
    const ExperimentConfig c = parse_config_text("[run]\nscenario = converge\n");
    CHECK(c.scenario == Scenario::Converge);
    CHECK(c.s == 4.0);
    CHECK(c.cfl == 0.2);
    CHECK(c.eps == std::vector<double>{0.2, 0.1, 0.05, 0.025});
    CHECK(c.T == 1.0);
    CHECK(c.length == doctest::Approx(64.0 * kPi));
    CHECK(c.n == 1024);

    const ExperimentConfig d = parse_config_text("[grid]\nlength_pi = 8\nn = 64\n[run]\nepsilons = 0.3,0.2 , 0.1\n");
    CHECK(d.length == doctest::Approx(8.0 * kPi));
    CHECK(d.n == 64);
    CHECK(d.eps == std::vector<double>{0.3, 0.2, 0.1});
}

TEST_CASE("parse_config rejects invalid input") {
    CHECK(config_error_key("[run]\nscenario = converge\ns = 3\n") == "run.s");
    CHECK(config_error_key("[run]\nscenario = justify\ns = 3.5\n") == "run.s");
    CHECK(config_error_key("[run]\nscenario = simulate-sp\ns = 3\n").empty());
    CHECK(config_error_key("[run]\nT = -1\n") == "run.T");
    CHECK(config_error_key("[run]\nT = 1\nstride = 0.3\n") == "run.stride");
    CHECK(config_error_key("[run]\nepsilons = 0.2, 1.5, 0.1\n") == "run.epsilons");
    CHECK(config_error_key("[run]\nepsilons = 0.2, 0.1\n") == "run.epsilons");
    CHECK(config_error_key("[run]\nscenario = warp\n") == "run.scenario");
    CHECK(config_error_key("[run]\ncfl = fast\n") == "run.cfl");
    CHECK(config_error_key("[run]\nunknown = 1\n") == "run.unknown");
    CHECK(config_error_key("[plot]\nx = 1\n") == "plot");
    CHECK(config_error_key("loose = 1\n") == "loose");
    CHECK(config_error_key("[grid]\nn = 63\n") == "grid.n");
    CHECK(config_error_key("[grid]\nlength = 10\nlength_pi = 3\n") == "grid.length_pi");
    CHECK(config_error_key("[data]\nperturbation_norm = 1.5\n") == "data.perturbation_norm");
    CHECK(config_error_key("[data]\nmode = fast\n") == "data.mode");
    CHECK(config_error_key("[tolerances]\nbalance_cap = 0\n") == "tolerances.balance_cap");
    CHECK(config_error_key("[run\n") == "<file>");
    CHECK_THROWS_AS(parse_config("/nonexistent/spulse.ini"), ConfigInvalid);

    // The subcommand replaces run.scenario before validation.
    CHECK_THROWS_AS(parse_config_text("[run]\nscenario = simulate-sp\ns = 3\n", Scenario::Converge), ConfigInvalid);
    CHECK(parse_config_text("[run]\ns = 3\n", Scenario::SimulateKg).scenario == Scenario::SimulateKg);
}

TEST_CASE("scenario names round-trip") {
    for (Scenario s : {Scenario::SimulateSp, Scenario::SimulateKg, Scenario::Justify, Scenario::Converge,
                       Scenario::Balance})
        CHECK(parse_scenario(scenario_name(s)) == s);
}

TEST_CASE("simulate-sp with zero amplitude") {
    ExperimentConfig c = parse_config_text(kSmall, Scenario::SimulateSp);
    c.amplitude = 0.0;
    const RunOutput out = run(c);
    CHECK(out.manifest.passed());
    CHECK(out.manifest.errors.empty());
    const Table* t = table(out, "trajectory_sp");
    REQUIRE(t);
    CHECK(t->rows.size() == 3);
    for (const auto& row : t->rows)
        for (std::size_t c2 = 1; c2 < row.size(); ++c2) CHECK(row[c2] == 0.0);
}

TEST_CASE("emit_reports") {
    const auto dir = scratch("emit");
    RunOutput empty;
    empty.tables.push_back({"convergence", {"epsilon", "sup_h2_error", "tau_at_sup", "slope_running"}, {}});
    emit_reports(empty, dir);
    CHECK(read_file(dir / "convergence.csv") == "epsilon,sup_h2_error,tau_at_sup,slope_running\n");
    const std::string summary = read_file(dir / "summary.json");
    CHECK(summary.find("\"checks\": []") != std::string::npos);
    CHECK(summary.find("\"passed\": true") != std::string::npos);

    RunOutput two;
    two.tables.push_back({"convergence", {"epsilon", "sup_h2_error"}, {{0.2, 0.1}, {0.1, 1.0 / 3.0}}});
    emit_reports(two, dir);
    const std::string body = read_file(dir / "convergence.csv");
    CHECK(body == "epsilon,sup_h2_error\n0.20000000000000001,0.10000000000000001\n"
                  "0.10000000000000001,0.33333333333333331\n");
    CHECK(body.find('\r') == std::string::npos);

    CHECK_THROWS_AS(emit_reports(two, dir / "convergence.csv" / "sub"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("converge reports a slope and identical reruns") {
    const ExperimentConfig c = parse_config_text(kSmall, Scenario::Converge);
    const RunOutput a = run(c);
    INFO(a.manifest.errors.size());
    CHECK(a.manifest.errors.empty());
    const Table* conv = table(a, "convergence");
    REQUIRE(conv);
    CHECK(conv->rows.size() == 3);
    CHECK(std::isnan(conv->rows[1][3]));
    CHECK(std::isfinite(conv->rows[2][3]));
    CHECK(a.manifest.find("slope"));
    CHECK(a.manifest.find("band"));
    CHECK_FALSE(a.manifest.find("balance_eps0.1"));

    const auto d1 = scratch("rerun1"), d2 = scratch("rerun2");
    emit_reports(a, d1);
    emit_reports(run(c), d2);
    for (const char* f : {"convergence.csv", "trajectory_error_eps0.05.csv"})
        CHECK(read_file(d1 / f) == read_file(d2 / f));
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("justify records energies, balance and Gronwall checks") {
    const ExperimentConfig c = parse_config_text(kSmall, Scenario::Justify);
    const RunOutput out = run(c);
    CHECK(out.manifest.errors.empty());
    const Table* en = table(out, "energy");
    REQUIRE(en);
    CHECK(en->columns == std::vector<std::string>{"epsilon", "tau", "E", "Etilde", "J", "balance_residual"});
    CHECK(en->rows.size() == 9);
    for (const char* name : {"balance_eps0.2", "gronwall_eps0.05", "coercivity_eps0.1", "gronwall_C0_spread",
                             "gronwall_growth_spread", "delta_cap", "slope"})
        CHECK_MESSAGE(out.manifest.find(name), name);
    // Every check name appears once.
    for (const auto& ch : out.manifest.checks) {
        int n = 0;
        for (const auto& other : out.manifest.checks) n += other.name == ch.name;
        CHECK(n == 1);
    }
}

TEST_CASE("simulate-kg seeds and aborts") {
    ExperimentConfig c = parse_config_text(kSmall, Scenario::SimulateKg);
    c.perturbation = PerturbationKind::Random;
    c.mode = PerturbationMode::Bump;
    c.eps = {0.1};
    c.seed = 7;
    const RunOutput a = run(c), b = run(c);
    CHECK(a.manifest.passed());
    REQUIRE(table(a, "trajectory_kg_eps0.1"));
    CHECK(table(a, "trajectory_kg_eps0.1")->rows == table(b, "trajectory_kg_eps0.1")->rows);
    c.seed = 8;
    CHECK(table(run(c), "trajectory_kg_eps0.1")->rows != table(a, "trajectory_kg_eps0.1")->rows);

    // A pulse far outside the small-data regime breaches |u| < 1/sqrt(3).
    ExperimentConfig big = parse_config_text(kSmall, Scenario::SimulateKg);
    big.perturbation = PerturbationKind::None;
    big.amplitude = 8.0;
    big.eps = {0.2};
    big.T = 1.0;
    const RunOutput fail = run(big);
    CHECK_FALSE(fail.manifest.passed());
    REQUIRE(fail.manifest.aborts.size() == 1);
    CHECK(fail.manifest.aborts[0].t > 0.0);
    CHECK(fail.manifest.aborts[0].t < big.T / 0.2);
    CHECK(fail.manifest.errors.empty());
    big.expect_abort = true;
    const RunOutput expected = run(big);
    CHECK(expected.manifest.passed());
    REQUIRE(expected.manifest.find("kg_eps0.2_abort_before_nonfinite"));
    for (const auto& row : table(expected, "trajectory_kg_eps0.2")->rows)
        for (double v : row) CHECK(std::isfinite(v));

    // Data already outside the validity region: recorded at t = 0, not raised.
    big.amplitude = 20.0;
    const RunOutput at_start = run(big);
    CHECK(at_start.manifest.errors.empty());
    REQUIRE(at_start.manifest.aborts.size() == 1);
    CHECK(at_start.manifest.aborts[0].t == 0.0);
}

TEST_CASE("balance writes a refinement table") {
    ExperimentConfig c = parse_config_text(kSmall, Scenario::Balance);
    c.eps = {0.2, 0.15, 0.1};
    const RunOutput out = run(c);
    CHECK(out.manifest.errors.empty());
    const Table* t = table(out, "balance_refinement");
    REQUIRE(t);
    CHECK(t->rows.size() == 9);
    CHECK(out.manifest.find("balance_decay_eps0.2"));
    const Check* m = out.manifest.find("balance_decay_measured");
    REQUIRE(m);
    CHECK(m->passed);
    CHECK(out.manifest.find("balance_decay_eps0.2")->passed);
}
