// Command-line front end: scenario-driven bridge solving, manufactured-case
// integration, stored-solution verification, refinement studies, and particle
// ensembles.  Exit codes: 0 pass, 1 check failed, 2 usage/config error,
// 3 numerical failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "casb/casb.hpp"

namespace {

// Shared flag state filled by CLI11.
struct Args {
    std::string config;
    std::string out;
    std::string solution_dir;
    std::size_t levels = 0;
    std::size_t particles = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double tol = 0.0;
    bool tol_set = false;
    bool dump_trajectory = false;
};

casb::Scenario scenario_for(const Args& args, const std::vector<std::string>& need) {
    if (args.config.empty())
        throw casb::ConfigError("missing --config");
    const std::filesystem::path path(args.config);
    const casb::ConfigFile cfg = casb::ConfigFile::parse_file(path);
    casb::Scenario sc = casb::load_scenario(cfg, need, path.parent_path());
    if (!args.out.empty()) sc.output_dir = args.out;
    if (args.levels > 0) sc.refine.levels = args.levels;
    if (args.particles > 0) sc.particles = args.particles;
    if (args.seed_set) sc.seed = args.seed;
    if (args.tol_set) {
        if (args.tol <= 0.0) throw casb::ConfigError("--tol must be > 0");
        sc.solve.tol = args.tol;
    }
    return sc;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grid-based bridge steering: solvers, wave-form checks, ensembles"};
    app.set_version_flag("--version", std::string("casb ") + casb::kToolVersion);
    app.require_subcommand(1);
    Args args;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", args.config, "scenario file (INI sections)")
            ->required();
        cmd->add_option("--out", args.out, "output directory (overrides output.dir)");
    };

    CLI::App* solve = app.add_subcommand(
        "solve-sb", "solve the endpoint-steering problem and verify its wave form");
    add_config(solve);
    solve->add_option("--tol", args.tol, "solver marginal tolerance")
        ->each([&](const std::string&) { args.tol_set = true; });

    CLI::App* manufactured = app.add_subcommand(
        "manufactured", "integrate a catalog case and run all residual checks");
    add_config(manufactured);

    CLI::App* verify = app.add_subcommand(
        "verify", "rerun residual checks on a stored solution directory");
    verify->add_option("dir", args.solution_dir, "solution directory")->required();
    verify->add_option("--tol", args.tol, "relative check tolerance")
        ->each([&](const std::string&) { args.tol_set = true; });

    CLI::App* refine = app.add_subcommand(
        "refine", "run a refinement pipeline and report convergence slopes");
    add_config(refine);
    refine->add_option("--levels", args.levels, "number of grid levels");

    CLI::App* ensemble = app.add_subcommand(
        "ensemble", "simulate particles under the recovered control");
    ensemble->add_option("dir", args.solution_dir, "solution directory")->required();
    ensemble->add_option("--particles", args.particles, "ensemble size");
    ensemble->add_option("--seed", args.seed, "RNG seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    ensemble->add_option("--tol", args.tol, "terminal L1 tolerance")
        ->each([&](const std::string&) { args.tol_set = true; });
    ensemble->add_flag("--dump-trajectory", args.dump_trajectory,
                       "write the binary trajectory dump");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help/version exit 0; every usage error maps to the documented 2.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (solve->parsed())
            return casb::cmd_solve_sb(scenario_for(args, {"bridge"}), std::cout);
        if (manufactured->parsed())
            return casb::cmd_manufactured(scenario_for(args, {"manufactured"}),
                                          std::cout);
        if (verify->parsed())
            return casb::cmd_verify(args.solution_dir, std::cout,
                                    args.tol_set ? args.tol : 0.02);
        if (refine->parsed())
            return casb::cmd_refine(scenario_for(args, {"refine"}), std::cout);
        if (ensemble->parsed()) {
            std::size_t particles = args.particles;
            std::uint64_t seed = args.seed;
            if (!particles || !args.seed_set) {
                // Fall back to the manifest's recorded ensemble settings
                // (config echo holds raw strings).
                const casb::Json manifest =
                    casb::read_json(std::filesystem::path(args.solution_dir) /
                                    "manifest.json");
                const casb::Json cfg =
                    manifest.value("config", casb::Json::object())
                        .value("ensemble", casb::Json::object());
                if (!particles)
                    particles = std::stoull(cfg.value("particles", "100000"));
                if (!args.seed_set) seed = std::stoull(cfg.value("seed", "1"));
            }
            return casb::cmd_ensemble(args.solution_dir, particles, seed, std::cout,
                                      args.tol_set ? args.tol : 0.05,
                                      args.dump_trajectory);
        }
    } catch (const casb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const casb::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
