#include "nlsem/scenario.hpp"
#include "nlsem/types.hpp"

#include "CLI11.hpp"

#include <iomanip>
#include <iostream>

namespace {

int print_record(const nlsem::RunRecord& record, const std::filesystem::path& out_dir) {
    const auto& r = record.results;
    std::cout << "scenario " << record.scenario << "  config " << record.config_hash << '\n';
    if (!r["value"].is_null()) {
        std::cout << "value " << std::setprecision(8) << r["value"].get<double>();
        if (!r["stderr"].is_null()) {
            std::cout << "  stderr " << r["stderr"].get<double>();
        }
        std::cout << '\n';
    }
    if (!r["policy"].get<std::string>().empty()) {
        std::cout << "policy " << r["policy"].get<std::string>() << '\n';
    }
    for (const auto& c : r["criteria"]) {
        std::cout << (c["pass"].get<bool>() ? "  PASS  " : "  FAIL  ") << c["name"].get<std::string>()
                  << "  observed " << c["observed"].dump() << "  threshold "
                  << c["threshold"].dump() << '\n';
    }
    std::cout << "results written to " << (out_dir / "results.json").string() << " ("
              << std::setprecision(3) << record.wall_time_s << " s)\n";
    return record.pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nlsem: nonlinear expectations of path functionals under drift and volatility "
                 "uncertainty"};
    app.require_subcommand(1);

    std::string config_path;
    nlsem::RunOptions options;
    std::string out_dir = "results";
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    std::size_t steps = 0;
    auto* run = app.add_subcommand("run", "run a scenario config and write results.json");
    run->add_option("config", config_path, "scenario config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory")->capture_default_str();
    auto* seed_opt = run->add_option("--seed", seed, "override the config seed");
    auto* paths_opt = run->add_option("--paths", paths, "override engine.paths")->check(CLI::PositiveNumber);
    auto* steps_opt = run->add_option("--steps", steps, "override grid.steps")->check(CLI::PositiveNumber);
    run->add_flag("--dump-paths", options.dump_paths, "write up to 1000 simulated paths as CSV");

    app.add_subcommand("list", "list the scenario registry");
    std::string describe_id;
    auto* describe = app.add_subcommand("describe", "describe one scenario");
    describe->add_option("id", describe_id, "scenario id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("list")) {
            for (const auto& info : nlsem::scenario_registry()) {
                std::cout << std::left << std::setw(16) << info.id << info.summary << '\n';
            }
            return 0;
        }
        if (app.got_subcommand("describe")) {
            const auto& info = nlsem::scenario_info(describe_id);
            std::cout << info.id << ": " << info.summary << "\nprobes: " << info.probes << '\n';
            return 0;
        }
        options.out_dir = out_dir;
        if (*seed_opt) {
            options.seed = seed;
        }
        if (*paths_opt) {
            options.paths = paths;
        }
        if (*steps_opt) {
            options.steps = steps;
        }
        const nlsem::PreparedScenario prepared =
            nlsem::prepare_scenario(nlsem::load_config(config_path), options);
        return print_record(nlsem::run_prepared(prepared, options), options.out_dir);
    } catch (const nlsem::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
