#pragma once

// Command-line front end: one subcommand per experiment family plus `report`.
// Exit codes: 0 success, 2 validation error (bad flags, config, inputs),
// 3 numeric failure (solver breakdown, corrupt run data).

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qelab/runner.hpp"

namespace qelab::runner {

inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"qelab: random spherical-harmonic bases from Wigner ensembles"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    long draws = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file (INI)")->required();
        sub->add_option("--out", out_dir, "output directory (overrides config)");
        sub->add_option("--seed", seed, "master seed (overrides config)")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--workers", workers, "worker threads (overrides config)");
        sub->add_option("--draws", draws, "draws per N (overrides config)");
    };

    CLI::App* qe = app.add_subcommand("qe", "decay of the quantum-ergodicity statistic X_N");
    CLI::App* normality = app.add_subcommand("normality", "eigenvector moments against Wick values");
    CLI::App* que = app.add_subcommand("que", "local flatness tail probabilities");
    CLI::App* weingarten = app.add_subcommand("weingarten", "Haar moment oracle cross-checks");
    for (CLI::App* sub : {qe, normality, que, weingarten}) add_common(sub);

    CLI::App* report = app.add_subcommand("report", "re-emit aggregates from a finished run");
    report->add_option("--out", out_dir, "run directory holding config.ini and raw.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (report->parsed()) {
            report_from_dir(out_dir);
            return 0;
        }
        ConfigMap raw = ConfigMap::parse_file(config_path);
        for (CLI::App* sub : {qe, normality, que, weingarten})
            if (sub->parsed()) raw.set("experiment.kind", sub->get_name());
        if (!out_dir.empty()) raw.set("experiment.out", out_dir);
        if (seed_set) raw.set("experiment.seed", std::to_string(seed));
        if (workers > 0) raw.set("experiment.workers", std::to_string(workers));
        if (draws > 0) raw.set("experiment.draws", std::to_string(draws));
        ExperimentConfig cfg = resolve_config(raw);
        run_experiment(cfg);
        return 0;
    } catch (const validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace qelab::runner
