// Command-line front end: generate fixtures, run experiments, summarize.

#include <dsml/dsml.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitFailures = 2;

unsigned default_jobs() {
    if (const char* env = std::getenv("DSML_JOBS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        std::cerr << "warning: ignoring invalid DSML_JOBS='" << env << "'\n";
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_run(const std::string& config_path, std::optional<unsigned> jobs, std::optional<std::uint64_t> seed) {
    dsml::ExperimentConfig config;
    try {
        config = dsml::parse_config_file(config_path);
        if (seed) config.spec.seed = *seed;
    } catch (const dsml::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    const dsml::ExperimentResult result = dsml::run_experiment(config, jobs.value_or(default_jobs()));

    const std::filesystem::path out(config.output_path);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    std::ofstream csv(out, std::ios::binary);
    if (!csv) {
        std::cerr << "error: cannot write '" << out.string() << "'\n";
        return kExitConfig;
    }
    dsml::write_results_csv(csv, config, result.rows);
    std::ofstream timing(out.string() + ".timing.csv", std::ios::binary);
    dsml::write_timing_csv(timing, result.rows);
    std::ofstream meta(out.string() + ".meta", std::ios::binary);
    dsml::write_run_metadata(meta, config);

    std::cerr << "wrote " << result.rows.size() << " rows to " << out.string() << " (" << result.failures
              << " failed)\n";
    if (result.excessive_failures()) {
        std::cerr << "error: more than 10% of rows failed\n";
        return kExitFailures;
    }
    return kExitOk;
}

int cmd_summarize(const std::string& input, const std::string& output) {
    std::ifstream in(input);
    if (!in) {
        std::cerr << "error: cannot open '" << input << "'\n";
        return kExitConfig;
    }
    std::vector<dsml::SummaryRow> rows;
    try {
        rows = dsml::summarize(in);
    } catch (const dsml::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    std::ofstream out(output, std::ios::binary);
    if (!out) {
        std::cerr << "error: cannot write '" << output << "'\n";
        return kExitConfig;
    }
    dsml::write_summary_csv(out, rows);
    return kExitOk;
}

/// The spec file uses the [data] section of the run config plus n and m.
int cmd_generate(const std::string& spec_path, const std::string& output_dir) {
    dsml::GenSpec spec;
    try {
        std::ifstream in(spec_path);
        if (!in) throw dsml::ConfigError("cannot open spec '" + spec_path + "'");
        boost::property_tree::ptree tree;
        boost::property_tree::read_ini(in, tree);
        spec.p = tree.get<dsml::Index>("data.p", 200);
        spec.n = tree.get<dsml::Index>("data.n", 100);
        spec.m = tree.get<dsml::Index>("data.m", 10);
        spec.s = tree.get<dsml::Index>("data.s", 10);
        spec.sigma = tree.get<double>("data.sigma", 1.0);
        spec.rho = tree.get<double>("data.rho", 0.5);
        spec.coef_low = tree.get<double>("data.coef_low", 0.0);
        spec.coef_high = tree.get<double>("data.coef_high", 1.0);
        spec.family = dsml::family_from_string(tree.get<std::string>("data.family", "linear"));
        spec.seed = tree.get<std::uint64_t>("data.seed", 1);
        spec.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    std::filesystem::create_directories(output_dir);
    const auto path = std::filesystem::path(output_dir) / "dataset.txt";
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        std::cerr << "error: cannot write '" << path.string() << "'\n";
        return kExitConfig;
    }
    dsml::write_dataset(out, dsml::generate(spec));
    std::cerr << "wrote " << path.string() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed multi-task sparse regression experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<unsigned> jobs;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
    run->add_option("--config", config_path, "Experiment config")->required();
    run->add_option("--jobs", jobs, "Worker threads (default: $DSML_JOBS or hardware concurrency)")
        ->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Override the base seed");

    std::string input;
    std::string output;
    auto* summarize = app.add_subcommand("summarize", "Aggregate a results CSV by method and sweep value");
    summarize->add_option("--input", input, "Results CSV")->required();
    summarize->add_option("--output", output, "Summary CSV")->required();

    std::string spec_path;
    std::string output_dir;
    auto* generate = app.add_subcommand("generate", "Write a synthetic dataset fixture");
    generate->add_option("--spec", spec_path, "Data spec ([data] section with n and m)")->required();
    generate->add_option("--output", output_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    if (*run) return cmd_run(config_path, jobs, seed);
    if (*summarize) return cmd_summarize(input, output);
    return cmd_generate(spec_path, output_dir);
}
