#include "hvcl/runner.hpp"

#include "hvcl/checkpoint.hpp"
#include "hvcl/error.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace hvcl {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return exit_config;
    if (dynamic_cast<const DataError*>(&e)) return exit_data;
    if (dynamic_cast<const NumericError*>(&e)) return exit_numeric;
    if (dynamic_cast<const CheckpointError*>(&e)) return exit_checkpoint;
    return exit_failure;
}

namespace {

std::string num(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string gnum(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

std::string join_row(const std::vector<double>& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        out += (i ? "," : "") + num(row[i]);
    }
    return out;
}

void write_summary(const RunConfig& config, std::uint64_t seed, const AccuracyMatrix& matrix,
                   const ForgettingMetrics& metrics, const fs::path& path) {
    std::ofstream out = open_out(path);
    for (const auto& [k, v] : config_entries(config)) {
        out << "config." << k << " = " << v << "\n";
    }
    const TrainConfig& t = config.train;
    out << "seed = " << seed << "\n";
    out << "mode = " << to_string(t.mode) << "\n";
    out << "beta1 = " << gnum(t.betas.gating_kl) << "\n";
    out << "beta2 = " << gnum(t.betas.weight_kl) << "\n";
    out << "beta3 = " << gnum(t.betas.entropy) << "\n";
    out << "beta4 = " << gnum(t.betas.diversity) << "\n";
    out << "entropy_sign = " << to_string(t.entropy_sign) << "\n";
    out << "kl_scaling = " << to_string(t.kl_scaling) << "\n";
    out << "tasks = " << matrix.stages() << "\n";
    out << "acc = " << num(metrics.acc) << "\n";
    out << "forgetting = " << num(metrics.forgetting) << "\n";
    out << "final_row = " << join_row(matrix.rows.back()) << "\n";
    for (std::size_t s = 0; s < matrix.stages(); ++s) {
        out << "row." << s << " = " << join_row(matrix.rows[s]) << "\n";
    }
}

} // namespace

void write_accuracy_csv(const AccuracyMatrix& matrix, const fs::path& path) {
    std::ofstream out = open_out(path);
    const std::size_t T = matrix.stages();
    out << "stage";
    for (std::size_t j = 0; j < T; ++j) {
        out << ",task_" << j;
    }
    out << "\n";
    for (std::size_t t = 0; t < T; ++t) {
        out << t;
        for (std::size_t j = 0; j < T; ++j) {
            out << ",";
            if (j < matrix.rows[t].size()) {
                out << num(matrix.rows[t][j]);
            }
        }
        out << "\n";
    }
}

void write_train_log_csv(const TrainingLog& log, const fs::path& path) {
    std::ofstream out = open_out(path);
    out << "task,epoch,loss,nll,gating_kl,weight_kl,entropy_cost,dpp_diversity,conditional_entropy,"
           "marginal_entropy,kernel_determinant,train_accuracy,expert_load\n";
    for (const EpochRecord& r : log.epochs) {
        out << r.task << "," << r.epoch << "," << gnum(r.loss) << "," << gnum(r.nll) << "," << gnum(r.gating_kl) << ","
            << gnum(r.weight_kl) << "," << gnum(r.entropy_cost) << "," << gnum(r.dpp_diversity) << ","
            << gnum(r.conditional_entropy) << "," << gnum(r.marginal_entropy) << "," << gnum(r.kernel_determinant)
            << "," << num(r.train_accuracy) << ",";
        // layers separated by '|', experts by ';'
        for (std::size_t l = 0; l < r.expert_load.size(); ++l) {
            out << (l ? "|" : "");
            for (std::size_t e = 0; e < r.expert_load[l].size(); ++e) {
                out << (e ? ";" : "") << num(r.expert_load[l][e], 4);
            }
        }
        out << "\n";
    }
}

std::string format_matrix_table(const AccuracyMatrix& matrix) {
    std::ostringstream out;
    out << "stage |";
    for (std::size_t j = 0; j < matrix.stages(); ++j) {
        char buf[16];
        std::snprintf(buf, sizeof buf, " task%-3zu", j);
        out << buf;
    }
    out << "\n";
    for (std::size_t t = 0; t < matrix.stages(); ++t) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%5zu |", t);
        out << buf;
        for (double v : matrix.rows[t]) {
            std::snprintf(buf, sizeof buf, " %7.4f", v);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

std::vector<SeedResult> run_experiment(const RunConfig& config, std::ostream& progress) {
    config.validate();
    std::vector<SeedResult> results;
    fs::create_directories(config.out_dir);

    for (std::uint64_t seed : config.seeds) {
        const TaskStream stream = build_stream(config, seed);
        Architecture arch = config.arch;
        arch.input_dim = stream.input_dim;
        arch.output_dim = stream.num_classes;
        TrainConfig train = config.train;
        train.seed = seed;

        progress << "seed " << seed << ": " << to_string(stream.scenario) << " stream, " << stream.size()
                 << " tasks, mode " << to_string(train.mode) << "\n";
        const StreamResult result = run_stream(stream, arch, train, [&](std::size_t t, const std::vector<double>& row) {
            progress << "  after task " << t << ": " << join_row(row) << "\n";
            progress.flush();
        });

        SeedResult sr;
        sr.seed = seed;
        sr.matrix = result.matrix;
        sr.metrics = forgetting_metrics(result.matrix);
        sr.directory = config.out_dir / ("seed_" + std::to_string(seed));
        fs::create_directories(sr.directory);

        RunConfig echo = config;
        echo.seeds = {seed};
        write_summary(echo, seed, sr.matrix, sr.metrics, sr.directory / "summary.txt");
        write_accuracy_csv(sr.matrix, sr.directory / "accuracy_matrix.csv");
        write_train_log_csv(result.log, sr.directory / "train_log.csv");
        save_checkpoint(Checkpoint{result.final_models.back(), config_to_text(echo), seed, stream.size(),
                                   sr.matrix.rows.back()},
                        sr.directory / "model.ckpt");

        progress << format_matrix_table(sr.matrix);
        progress << "  ACC " << num(sr.metrics.acc, 4) << "  forgetting " << num(sr.metrics.forgetting, 4) << "\n";
        results.push_back(std::move(sr));
    }

    std::ofstream out = open_out(config.out_dir / "summary.txt");
    for (const auto& [k, v] : config_entries(config)) {
        out << "config." << k << " = " << v << "\n";
    }
    double acc = 0.0, forgetting = 0.0;
    for (const SeedResult& r : results) {
        out << "seed." << r.seed << ".acc = " << num(r.metrics.acc) << "\n";
        out << "seed." << r.seed << ".forgetting = " << num(r.metrics.forgetting) << "\n";
        acc += r.metrics.acc;
        forgetting += r.metrics.forgetting;
    }
    const double n = static_cast<double>(results.size());
    out << "mean.acc = " << num(acc / n) << "\n";
    out << "mean.forgetting = " << num(forgetting / n) << "\n";
    return results;
}

EvalResult evaluate_checkpoint(const fs::path& checkpoint, const std::optional<fs::path>& data_dir) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    RunConfig config;
    apply_config_text(config, ckpt.config_text, checkpoint.string() + " (embedded config)");
    if (data_dir) {
        config.data_dir = *data_dir;
    }
    const TaskStream stream = build_stream(config, ckpt.seed);
    if (stream.size() < ckpt.tasks_trained || ckpt.tasks_trained == 0) {
        throw CheckpointError(checkpoint.string() + ": stream has " + std::to_string(stream.size()) +
                              " tasks, checkpoint was trained on " + std::to_string(ckpt.tasks_trained));
    }
    if (stream.input_dim != ckpt.model.architecture().input_dim ||
        stream.num_classes != ckpt.model.architecture().output_dim) {
        throw CheckpointError(checkpoint.string() + ": model does not fit the rebuilt task stream");
    }
    EvalResult out;
    for (std::size_t j = 0; j < ckpt.tasks_trained; ++j) {
        out.row.push_back(accuracy(ckpt.model, stream.tasks[j].test, config.train.eval_threads));
    }
    out.saved_row = ckpt.final_row;
    out.matches = out.row == out.saved_row;
    return out;
}

} // namespace hvcl
