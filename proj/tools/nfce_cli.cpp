// Command-line front end: `run` executes a Monte-Carlo sweep from a config
// file, `summarize` aggregates a result CSV.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nfce/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"near-field channel estimation and sensing experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", in_csv, out_csv;
    std::uint64_t seed_override = 0;
    bool have_seed = false;
    int threads = 1;

    auto* run = app.add_subcommand("run", "run a sweep described by a config file");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--out", out_dir, "output directory for results.csv");
    run->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { have_seed = true; });
    run->add_option("--threads", threads, "worker thread count")->check(CLI::PositiveNumber);

    auto* summ = app.add_subcommand("summarize", "aggregate a result CSV by (method, sweep value)");
    summ->add_option("--in", in_csv, "result CSV produced by run")->required();
    summ->add_option("--out", out_csv, "summary CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            nfce::ExperimentConfig cfg = nfce::parse_config_file(config_path);
            if (have_seed) cfg.seed = seed_override;
            const auto rows = nfce::run_experiment(cfg, threads);
            std::filesystem::create_directories(out_dir);
            const auto path = std::filesystem::path(out_dir) / "results.csv";
            std::ofstream out(path, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + path.string());
            nfce::write_csv(rows, out);
            std::cerr << "wrote " << rows.size() << " rows to " << path.string() << "\n";
        } else {
            std::ifstream in(in_csv);
            if (!in) throw std::runtime_error("cannot open " + in_csv);
            const auto rows = nfce::read_csv(in);
            const auto summary = nfce::summarize(rows);
            std::ofstream out(out_csv, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + out_csv);
            nfce::write_summary_csv(summary, out);
            std::cerr << "wrote " << summary.size() << " summary rows to " << out_csv << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
