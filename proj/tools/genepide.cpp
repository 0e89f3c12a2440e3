#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genepide/cli.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<double> dt, t_end;
    std::vector<std::size_t> cells;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples;
    std::optional<std::string> out;
};

void apply(const Overrides& o, genepide::RunConfig& c) {
    if (o.dt) c.solver.dt = *o.dt;
    if (o.t_end) c.solver.t_end = *o.t_end;
    if (!o.cells.empty()) c.grid.cells = o.cells;
    if (o.seed) {
        c.ssa.seed = *o.seed;
        c.entropy.seed = *o.seed;
    }
    if (o.samples) c.ssa.samples = *o.samples;
    if (o.out) c.output = *o.out;
    genepide::validate(c);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stationary densities, entropy decay and burst simulations for self-regulating genes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", genepide::kVersion);
    bool dump = false;
    app.add_flag("--dump-config", dump, "print the resolved configuration and exit");

    Overrides o;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"stationary", "normalised stationary density and its shape class"},
        {"classify", "print the shape class of a 1D model"},
        {"simulate", "integrate the density equation and fit the entropy decay"},
        {"ssa", "exact stochastic simulation and histogram"},
        {"verify", "invariant battery with measured margins"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--dt", o.dt, "time step");
        sub->add_option("--t-end", o.t_end, "final time");
        sub->add_option("--cells", o.cells, "cells, one value or one per axis");
        sub->add_option("--seed", o.seed, "seed for the stochastic simulation and the probes");
        sub->add_option("--samples", o.samples, "stationary samples for ssa");
        sub->add_option("-o,--out", o.out, "output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return genepide::cli::kConfigError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    genepide::RunConfig config;
    try {
        config = genepide::load_config(o.config);
        apply(o, config);
    } catch (const genepide::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return genepide::cli::kConfigError;
    }
    if (dump) {
        std::cout << genepide::serialize_config(config);
        return genepide::cli::kOk;
    }
    return genepide::cli::dispatch(command, config, std::cout, std::cerr);
}
