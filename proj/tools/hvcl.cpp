// Command-line front end: run, eval, selftest.

#include "hvcl/config.hpp"
#include "hvcl/error.hpp"
#include "hvcl/runner.hpp"
#include "hvcl/selftest.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::vector<std::uint64_t>& seeds, const std::string& out, const std::string& data_dir) {
    hvcl::RunConfig config = config_path.empty() ? hvcl::RunConfig{} : hvcl::load_config(config_path);
    for (const auto& o : overrides) {
        hvcl::apply_override(config, o);
    }
    if (!seeds.empty()) {
        config.seeds = seeds;
    }
    if (!out.empty()) {
        config.out_dir = out;
    }
    if (!data_dir.empty()) {
        config.data_dir = data_dir;
    }
    config.validate();
    const auto results = hvcl::run_experiment(config, std::cout);
    double acc = 0.0;
    for (const auto& r : results) {
        acc += r.metrics.acc;
    }
    std::cout << "mean ACC over " << results.size() << " seed(s): " << acc / static_cast<double>(results.size())
              << "\nwrote " << config.out_dir.string() << "\n";
    return hvcl::exit_ok;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir) {
    const auto result = hvcl::evaluate_checkpoint(
        checkpoint, data_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(data_dir));
    std::printf("task   recomputed   saved\n");
    for (std::size_t j = 0; j < result.row.size(); ++j) {
        std::printf("%4zu   %10.6f   %10.6f\n", j, result.row[j],
                    j < result.saved_row.size() ? result.saved_row[j] : -1.0);
    }
    std::printf("final row %s the saved row\n", result.matches ? "matches" : "DIFFERS FROM");
    return result.matches ? hvcl::exit_ok : hvcl::exit_failure;
}

int cmd_selftest(std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    const auto results = hvcl::run_selftest({}, seed);
    int failed = 0;
    for (const auto& r : results) {
        std::printf("[%s] %-22s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        failed += r.passed ? 0 : 1;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%zu checks, %d failed, %.1f s\n", results.size(), failed, secs);
    return failed == 0 ? hvcl::exit_ok : hvcl::exit_failure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture-of-variational-experts continual learning"};
    app.require_subcommand(1);

    std::string config_path, out, data_dir, checkpoint;
    std::vector<std::string> overrides;
    std::vector<std::uint64_t> seeds;
    std::uint64_t selftest_seed = 20240601;

    auto* run = app.add_subcommand("run", "train a task stream and write metrics and a checkpoint");
    run->add_option("--config", config_path, "key=value configuration file");
    run->add_option("--set", overrides, "override a key, e.g. --set train.epochs=5 (repeatable)");
    run->add_option("--seed", seeds, "seed(s); replaces run.seeds")->delimiter(',');
    run->add_option("--out", out, "output directory");
    run->add_option("--data-dir", data_dir, "directory holding the MNIST IDX files");

    auto* eval = app.add_subcommand("eval", "re-evaluate a saved checkpoint");
    eval->add_option("checkpoint,--checkpoint", checkpoint, "model.ckpt written by run")->required();
    eval->add_option("--data-dir", data_dir, "directory holding the MNIST IDX files");

    auto* selftest = app.add_subcommand("selftest", "run the oracle and property checks");
    selftest->add_option("--seed", selftest_seed, "seed for the randomized checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : hvcl::exit_config;
    }

    try {
        if (*run) {
            return cmd_run(config_path, overrides, seeds, out, data_dir);
        }
        if (*eval) {
            return cmd_eval(checkpoint, data_dir);
        }
        return cmd_selftest(selftest_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return hvcl::exit_code_for(e);
    }
}
