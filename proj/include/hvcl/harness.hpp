#pragma once

#include "hvcl/data.hpp"
#include "hvcl/model.hpp"

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace hvcl {

enum class Mode { hvcl, vcl_single_expert, naive_dense, offline_oracle };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view text);

/// How the weight KL enters a mini-batch loss.
enum class KlScaling {
    per_batch,   // full KL added to every batch-mean loss
    per_dataset, // KL divided by the task's training-set size
};

std::string_view to_string(KlScaling scaling);
KlScaling kl_scaling_from_string(std::string_view text);

struct TrainConfig {
    LossWeights betas;
    double kernel_width = 1.0;
    double jitter = 1e-6;
    std::size_t epochs = 20;
    std::size_t batch_size = 256;
    double learning_rate = 6e-4;
    std::uint64_t seed = 1;
    Mode mode = Mode::hvcl;
    EntropySign entropy_sign = EntropySign::conditional_minus_marginal;
    KlScaling kl_scaling = KlScaling::per_dataset;
    std::size_t eval_threads = 1;

    /// Throws ConfigError on negative or non-finite weights and zero batch size.
    void validate() const;
    /// Loss weights actually used: all zero for the deterministic baselines.
    [[nodiscard]] LossWeights effective_weights() const;
};

/// Layer kind implied by a mode, applied on top of the given architecture.
Architecture architecture_for(Architecture arch, Mode mode);

/// Adam with bias correction; state is keyed by parameter position.
class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Applies one update from the accumulated gradients; parameters without a gradient are skipped.
    void step(std::span<Tensor> params);
    /// Clears the moment estimates and the step counter.
    void reset();
    [[nodiscard]] std::size_t steps() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Scalar loss of one batch with its components (unweighted, summed over layers).
struct LossBreakdown {
    Tensor total;
    Tensor logits;
    double nll = 0.0;
    double gating_kl = 0.0;
    double weight_kl = 0.0;
    double entropy_cost = 0.0;
    double dpp_diversity = 0.0;
    std::vector<AuxLossBundle> layers;
};

/// -(1/N_b) sum_i log p(y_i | x_i) + sum over layers of the weighted auxiliary terms.
/// `weight_kl_scale` multiplies the weight-KL weight (1 for per-batch scaling).
LossBreakdown total_loss(const Model& model, const Tensor& x, std::span<const int> labels, const TrainConfig& config,
                         Rng& rng, double weight_kl_scale = 1.0);

struct EpochRecord {
    std::size_t task = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double nll = 0.0;
    double gating_kl = 0.0;
    double weight_kl = 0.0;
    double entropy_cost = 0.0;
    double dpp_diversity = 0.0;
    double conditional_entropy = 0.0;
    double marginal_entropy = 0.0;
    double kernel_determinant = 0.0;
    double train_accuracy = 0.0;                  // sampled forward passes, running over the epoch
    std::vector<std::vector<double>> expert_load; // [layer][expert], top-1 routing fractions over the epoch
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
};

/// Lower-triangular grid: rows[t][j] = accuracy on task j after training task t (j <= t).
struct AccuracyMatrix {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> test_counts;

    [[nodiscard]] std::size_t stages() const { return rows.size(); }
    [[nodiscard]] double at(std::size_t t, std::size_t j) const { return rows.at(t).at(j); }
};

struct ForgettingMetrics {
    double acc = 0.0;
    double forgetting = 0.0;
};

/// ACC = mean of the last row; forgetting = mean over j < T of max_{t >= j} A[t][j] - A[T][j].
/// Throws DimensionError when the matrix is not complete lower-triangular.
ForgettingMetrics forgetting_metrics(const AccuracyMatrix& matrix);

/// Fraction of correctly classified rows at the posterior means. Rows are
/// sharded over `threads` workers when threads > 1.
double accuracy(const Model& model, const LabeledDataset& data, std::size_t threads = 1);

/// One model trained task after task.
class ContinualLearner {
public:
    ContinualLearner(const Architecture& arch, const TrainConfig& config);

    /// Stochastic gradient training on one task's data; priors stay fixed.
    TrainingLog train_task(const LabeledDataset& data);
    /// Priors <- posteriors, optimizer reset, task counter incremented.
    void advance_task();

    /// Accuracy on the held-out split of tasks 0..up_to.
    [[nodiscard]] std::vector<double> evaluate_row(const TaskStream& stream, std::size_t up_to) const;

    [[nodiscard]] const Model& model() const { return model_; }
    [[nodiscard]] Model& model() { return model_; }
    [[nodiscard]] const TrainConfig& config() const { return config_; }
    [[nodiscard]] std::size_t task_index() const { return task_; }

private:
    TrainConfig config_;
    Rng rng_;
    Model model_;
    Adam optimizer_;
    std::size_t task_ = 0;
};

struct StreamResult {
    AccuracyMatrix matrix;
    TrainingLog log;
    std::vector<Model> final_models; // the sequential model (or the last oracle model)
};

/// Called after each stage with (stage, row).
using StageCallback = std::function<void(std::size_t, const std::vector<double>&)>;

/// Retrains from scratch on the union of tasks 0..t at every stage t.
StreamResult offline_oracle_baseline(const TaskStream& stream, const Architecture& arch, const TrainConfig& config,
                                     const StageCallback& on_stage = {});

/// Runs the stream in the configured mode and fills the accuracy matrix.
StreamResult run_stream(const TaskStream& stream, const Architecture& arch, const TrainConfig& config,
                        const StageCallback& on_stage = {});

} // namespace hvcl
