// cavmodes — command-line front end: steady, dynamics, sweep, decompose, validate.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cavmodes/commands.hpp"

namespace cli = cavmodes::cli;

int main(int argc, char** argv) {
    CLI::App app{"Quantum-trajectory simulation of a pumped atom in a lossy cavity, with mixture-model analysis"};
    app.require_subcommand(1);

    std::string config_path, out_dir, input;
    std::vector<std::string> assignments;
    int workers = 0;
    long long seed = -1;

    app.add_option("--config", config_path, "TOML configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", assignments, "override a configuration value, table.key=value (repeatable)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--workers", workers, "parallel trajectory workers")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "master seed; trajectory seeds run sequentially from it")
        ->check(CLI::NonNegativeNumber);
    app.footer("Environment: CAVMODES_<TABLE>_<KEY>=value overrides the file; --set and the flags above win.");

    auto* steady = app.add_subcommand("steady", "single-run steady state: density, chi, photon fit, modes");
    auto* dynamics = app.add_subcommand("dynamics", "ensemble time evolution: negativity, Mandel Q, mode weights");
    auto* sweep = app.add_subcommand("sweep", "steady state for each sweep.ut_values entry");
    auto* decompose = app.add_subcommand("decompose", "fit and decompose a saved density matrix");
    decompose->add_option("input", input, "density-matrix JSON")->required()->check(CLI::ExistingFile);
    auto* validate = app.add_subcommand("validate", "invariant suite against the master-equation oracle");
    for (auto* sub : {steady, dynamics, sweep, decompose, validate}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);
    const std::string command = app.get_subcommands().front()->get_name();

    std::optional<cavmodes::cli::fs::path> out_for_errors;
    try {
        std::vector<std::string> sets = assignments;
        if (!out_dir.empty()) sets.push_back("run.out=\"" + out_dir + "\"");
        if (workers > 0) sets.push_back("run.workers=" + std::to_string(workers));
        if (seed >= 0) sets.push_back("schedule.seed=" + std::to_string(seed));
        std::optional<cavmodes::cli::fs::path> file;
        if (!config_path.empty()) file = config_path;
        const cavmodes::RunConfig config = cli::resolve_config(file, sets);
        out_for_errors = config.out_dir;

        cli::CommandResult result;
        if (command == "steady") result = cli::cmd_steady(config);
        else if (command == "dynamics") result = cli::cmd_dynamics(config);
        else if (command == "sweep") result = cli::cmd_sweep(config);
        else if (command == "decompose") result = cli::cmd_decompose(config, input);
        else result = cli::cmd_validate(config);

        std::cout << result.summary.dump(2) << '\n';
        return result.ok ? EXIT_SUCCESS : EXIT_FAILURE;
    } catch (const cavmodes::Error& e) {
        const auto record = cli::error_record(command, e);
        std::cerr << record.dump() << '\n';
        if (out_for_errors) {
            try {
                cavmodes::io::write_text(*out_for_errors / "error.json", record.dump(2) + "\n");
            } catch (const cavmodes::Error&) {
            }
        }
        return EXIT_FAILURE;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"command", command}, {"status", "error"}, {"kind", "internal"},
                                    {"message", e.what()}}
                         .dump()
                  << '\n';
        return EXIT_FAILURE;
    }
}
