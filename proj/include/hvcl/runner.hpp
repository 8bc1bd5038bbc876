#pragma once

#include "hvcl/config.hpp"
#include "hvcl/harness.hpp"

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace hvcl {

/// Process exit codes of the command-line front end.
enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,
    exit_config = 2,
    exit_data = 3,
    exit_numeric = 4,
    exit_checkpoint = 5,
};

/// Maps a library exception to its exit code.
int exit_code_for(const std::exception& e);

struct SeedResult {
    std::uint64_t seed = 0;
    AccuracyMatrix matrix;
    ForgettingMetrics metrics;
    std::filesystem::path directory;
};

/// Trains every configured seed, writing summary.txt, accuracy_matrix.csv,
/// train_log.csv and model.ckpt under out_dir/seed_<seed>/, plus an
/// across-seed summary.txt in out_dir. Progress goes to `progress`.
std::vector<SeedResult> run_experiment(const RunConfig& config, std::ostream& progress);

struct EvalResult {
    std::vector<double> row;       // recomputed final row
    std::vector<double> saved_row; // row stored in the checkpoint
    bool matches = false;          // bit-exact equality
};

/// Rebuilds the task stream described inside the checkpoint and re-evaluates
/// the saved model on it. `data_dir` overrides the stored dataset directory.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                               const std::optional<std::filesystem::path>& data_dir = std::nullopt);

// Output writers, exposed for tests.
void write_accuracy_csv(const AccuracyMatrix& matrix, const std::filesystem::path& path);
void write_train_log_csv(const TrainingLog& log, const std::filesystem::path& path);
std::string format_matrix_table(const AccuracyMatrix& matrix);

} // namespace hvcl
