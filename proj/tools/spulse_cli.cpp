// Command-line front end: one subcommand per scenario.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spulse/errors.hpp"
#include "spulse/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Short-pulse / Klein-Gordon justification harness"};
    app.set_version_flag("--version", spulse::version_string());
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    for (const char* name : {"simulate-sp", "simulate-kg", "justify", "converge", "balance"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "seed for random perturbations");
        sub->add_option("--threads", threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);
    }
    CLI11_PARSE(app, argc, argv);

    try {
        const spulse::Scenario scenario = spulse::parse_scenario(app.get_subcommands().front()->get_name());
        spulse::ExperimentConfig cfg;
        if (!config_path.empty()) {
            cfg = spulse::parse_config(config_path, scenario);
        } else {
            cfg.scenario = scenario;
        }
        if (seed) cfg.seed = *seed;
        if (threads) cfg.threads = *threads;
        spulse::validate(cfg);

        const spulse::RunOutput out = spulse::run(cfg);
        spulse::emit_reports(out, out_dir);
        const auto& m = out.manifest;
        for (const auto& c : m.checks)
            std::cout << (c.passed ? "pass " : (c.hard ? "FAIL " : "warn ")) << c.name << "  value=" << c.value
                      << "  limit=" << c.limit << (c.detail.empty() ? "" : "  (" + c.detail + ")") << "\n";
        for (const auto& a : m.aborts)
            std::cout << "abort eps=" << a.eps << " t=" << a.t << ": " << a.reason << "\n";
        for (const auto& e : m.errors) std::cout << "error [" << e.stage << "] " << e.message << "\n";
        std::cout << (m.passed() ? "all hard checks passed" : "hard checks failed") << "; reports in " << out_dir
                  << "\n";
        return m.passed() ? 0 : 1;
    } catch (const spulse::ConfigInvalid& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const spulse::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}
