// Command-line front end: run experiments, validate configs, print rules.

#include "sgf/cubature.hpp"
#include "sgf/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out)
{
    sgf::ExperimentConfig config;
    try {
        config = sgf::load_config(path);
    }
    catch (const sgf::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    if (seed) {
        config.seed = *seed;
    }
    const std::string dir = out.empty() ? config.output_dir : out;
    try {
        const sgf::RunResult result = sgf::run_experiment(config);
        sgf::write_results(result, dir);
        for (const auto& row : result.summary()) {
            std::cout << row.filter << ' ' << row.metric << " mean_rmse=" << sgf::format_number(row.mean_rmse)
                      << " var_rmse=" << sgf::format_number(row.var_rmse) << '\n';
        }
        if (const auto failed = result.failures(); failed > 0) {
            std::cerr << failed << " filter trajectories stopped early; see per_step.csv\n";
        }
        std::cout << "wrote " << dir << '\n';
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

int cmd_validate(const std::string& path)
{
    try {
        const auto config = sgf::load_config(path);
        std::cout << "ok: " << config.name << " (" << config.filters.size() << " filters, " << config.replicates
                  << " replicates, " << config.steps << " steps)\n";
        return 0;
    }
    catch (const sgf::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cmd_rules(int dim, int degree)
{
    try {
        const auto mu = sgf::standard_rule(sgf::RuleKind::cubature(degree), dim, nullptr);
        std::cout << "weight";
        for (int i = 1; i <= dim; ++i) {
            std::cout << ",x" << i;
        }
        std::cout << '\n';
        for (sgf::Index j = 0; j < mu.size(); ++j) {
            std::cout << sgf::format_number(mu.weights(j));
            for (sgf::Index i = 0; i < mu.dim(); ++i) {
                std::cout << ',' << sgf::format_number(mu.points(i, j));
            }
            std::cout << '\n';
        }
        return 0;
    }
    catch (const sgf::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sequential Gaussian filters: experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run an experiment config and write CSV results");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--seed", seed, "Override the config's base seed");
    run->add_option("--out", out_dir, "Output directory (default: config output_dir)");

    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

    int dim = 1;
    int degree = 3;
    auto* rules = app.add_subcommand("rules", "Print a standard-normal cubature rule as CSV");
    rules->add_option("--dim", dim, "Dimension k")->required()->check(CLI::PositiveNumber);
    rules->add_option("--degree", degree, "Polynomial degree")->required()->check(CLI::IsMember({3, 5}));

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (*run) {
        return cmd_run(config_path, seed, out_dir);
    }
    if (*validate) {
        return cmd_validate(config_path);
    }
    return cmd_rules(dim, degree);
}
