#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "catlab/config.hpp"
#include "catlab/runner.hpp"
#include "catlab/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{
        "numerical laboratory for skew products over a hyperbolic torus automorphism"};
    app.set_version_flag("--version", catlab::kVersion);
    app.require_subcommand(1);

    std::string config = "coupled";
    std::uint64_t seed = 0;
    std::string output_dir;
    int threads = 1;
    auto* config_opt =
        app.add_option("--config", config, "config file path or shipped fixture name");
    auto* seed_opt = app.add_option("--seed", seed, "override the run seed");
    auto* outdir_opt =
        app.add_option("--output-dir", output_dir, "directory for CSV and JSON artifacts");
    app.add_option("--threads", threads, "worker threads for parallel sweeps")
        ->check(CLI::PositiveNumber);

    const std::pair<const char*, const char*> experiments[] = {
        {"verify-partition", "check the Markov partition structure and export its data"},
        {"properties", "report system constants and the fiber Lyapunov exponent"},
        {"estimate-mu", "build the invariant-measure particle cloud and integrate the catalog"},
        {"hitting", "exact and Monte Carlo section-hitting averages with a rate fit"},
        {"transverse", "transverse measures on two sections and their holonomy comparison"},
        {"coupling", "recursive coupling of two plaque measures with tail and shadow fits"},
        {"ldp", "empirical large-deviation tails of time averages"},
        {"correlations", "autocorrelation decay of catalog observables"},
        {"center-atoms", "fiber cluster structure of the invariant measure over a thin slab"},
    };
    for (const auto& [name, desc] : experiments) app.add_subcommand(name, desc)->fallthrough();
    app.add_subcommand("list-fixtures", "print the shipped fixture configs")->fallthrough();

    CLI11_PARSE(app, argc, argv);

    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "list-fixtures") {
        for (const auto& name : catlab::fixture_names()) {
            const catlab::ExperimentConfig f = catlab::fixture_config(name);
            std::cout << name << " kappa=" << f.system.kappa << " delta=" << f.system.delta
                      << " alpha=" << f.system.alpha << "\n";
        }
        return 0;
    }

    try {
        catlab::ExperimentConfig cfg = catlab::load_config(config);
        if (cfg.experiment.empty()) {
            cfg.experiment = sub;
        } else if (cfg.experiment != sub) {
            throw catlab::ConfigError("config selects experiment '" + cfg.experiment +
                                      "' but the subcommand is '" + sub + "'");
        }
        if (seed_opt->count()) cfg.seed = seed;
        if (outdir_opt->count()) cfg.output_dir = output_dir;
        (void)config_opt;
        return catlab::run_experiment(cfg, threads, std::cout, std::cerr);
    } catch (const catlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
