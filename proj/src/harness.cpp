#include "hvcl/harness.hpp"

#include "hvcl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

namespace hvcl {

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::hvcl: return "hvcl";
    case Mode::vcl_single_expert: return "vcl_single_expert";
    case Mode::naive_dense: return "naive_dense";
    case Mode::offline_oracle: return "offline_oracle";
    }
    return "hvcl";
}

Mode mode_from_string(std::string_view text) {
    for (Mode m : {Mode::hvcl, Mode::vcl_single_expert, Mode::naive_dense, Mode::offline_oracle}) {
        if (text == to_string(m)) {
            return m;
        }
    }
    throw ConfigError("unknown mode '" + std::string(text) + "'");
}

std::string_view to_string(KlScaling scaling) {
    return scaling == KlScaling::per_batch ? "per_batch" : "per_dataset";
}

KlScaling kl_scaling_from_string(std::string_view text) {
    if (text == "per_batch") return KlScaling::per_batch;
    if (text == "per_dataset") return KlScaling::per_dataset;
    throw ConfigError("unknown kl scaling '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    const std::pair<const char*, double> reals[] = {
        {"beta1", betas.gating_kl}, {"beta2", betas.weight_kl},     {"beta3", betas.entropy},
        {"beta4", betas.diversity}, {"learning_rate", learning_rate}, {"jitter", jitter},
    };
    for (const auto& [name, v] : reals) {
        if (!std::isfinite(v) || v < 0.0) {
            throw ConfigError(std::string(name) + " must be finite and non-negative");
        }
    }
    if (!(kernel_width > 0.0) || !std::isfinite(kernel_width)) {
        throw ConfigError("kernel width must be positive");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    if (eval_threads == 0) {
        throw ConfigError("eval threads must be positive");
    }
}

LossWeights TrainConfig::effective_weights() const {
    switch (mode) {
    case Mode::hvcl: return betas;
    case Mode::vcl_single_expert: return {0.0, betas.weight_kl, 0.0, 0.0};
    case Mode::naive_dense:
    case Mode::offline_oracle: return {0.0, 0.0, 0.0, 0.0};
    }
    return betas;
}

Architecture architecture_for(Architecture arch, Mode mode) {
    switch (mode) {
    case Mode::hvcl: arch.kind = LayerKind::move; break;
    case Mode::vcl_single_expert: arch.kind = LayerKind::variational; break;
    case Mode::naive_dense:
    case Mode::offline_oracle: arch.kind = LayerKind::dense; break;
    }
    return arch;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(std::span<Tensor> params) {
    if (m_.size() != params.size()) {
        m_.assign(params.size(), {});
        v_.assign(params.size(), {});
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& param = params[p];
        if (!param.has_grad()) {
            continue;
        }
        auto g = param.grad();
        auto w = param.values_mut();
        if (m_[p].size() != w.size()) {
            m_[p].assign(w.size(), 0.0);
            v_[p].assign(w.size(), 0.0);
        }
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
            v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

LossBreakdown total_loss(const Model& model, const Tensor& x, std::span<const int> labels, const TrainConfig& config,
                         Rng& rng, double weight_kl_scale) {
    if (x.rank() != 2 || x.rows() == 0) {
        throw DimensionError("total_loss: empty batch");
    }
    LossWeights weights = config.effective_weights();
    weights.weight_kl *= weight_kl_scale;
    const bool deterministic = model.architecture().kind == LayerKind::dense;

    ForwardOptions options;
    options.sample = !deterministic;
    options.with_aux = !deterministic;
    options.weights = weights;
    options.kernel_width = config.kernel_width;
    options.jitter = config.jitter;
    options.entropy_sign = config.entropy_sign;

    ModelOutput out = model.forward(x, rng, options);
    LossBreakdown result;
    Tensor nll = cross_entropy(out.logits, labels);
    if (!nll.all_finite()) {
        throw NumericError("output head: non-finite log-likelihood");
    }
    result.nll = nll.item();
    Tensor total = nll;
    if (!deterministic) {
        for (std::size_t l = 0; l < out.aux.size(); ++l) {
            const AuxLossBundle& aux = out.aux[l];
            const Tensor weighted = aux.weighted_total();
            if (!weighted.all_finite()) {
                throw NumericError("layer " + std::to_string(l) + ": non-finite auxiliary loss");
            }
            total = ops::add(total, weighted);
            result.gating_kl += aux.gating_kl.item();
            result.weight_kl += aux.weight_kl.item();
            result.entropy_cost += aux.entropy_cost.item();
            result.dpp_diversity += aux.dpp_diversity.item();
        }
    }
    result.total = total;
    result.logits = out.logits;
    result.layers = std::move(out.aux);
    return result;
}

ForgettingMetrics forgetting_metrics(const AccuracyMatrix& matrix) {
    const std::size_t T = matrix.rows.size();
    if (T == 0) {
        throw DimensionError("forgetting_metrics: empty accuracy matrix");
    }
    for (std::size_t t = 0; t < T; ++t) {
        if (matrix.rows[t].size() != t + 1) {
            throw DimensionError("forgetting_metrics: row " + std::to_string(t) + " has " +
                                 std::to_string(matrix.rows[t].size()) + " entries, expected " +
                                 std::to_string(t + 1));
        }
    }
    const auto& last = matrix.rows.back();
    ForgettingMetrics out;
    out.acc = std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(T);
    if (T > 1) {
        double drop = 0.0;
        for (std::size_t j = 0; j + 1 < T; ++j) {
            double best = 0.0;
            for (std::size_t t = j; t < T; ++t) {
                best = std::max(best, matrix.rows[t][j]);
            }
            drop += best - last[j];
        }
        out.forgetting = drop / static_cast<double>(T - 1);
    }
    return out;
}

namespace {

std::size_t count_correct(const Model& model, const LabeledDataset& data, std::size_t begin, std::size_t end) {
    constexpr std::size_t chunk = 1024;
    std::size_t correct = 0;
    std::vector<std::size_t> index;
    for (std::size_t start = begin; start < end; start += chunk) {
        const std::size_t stop = std::min(end, start + chunk);
        index.resize(stop - start);
        std::iota(index.begin(), index.end(), start);
        const auto pred = model.predict(data.batch(index));
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == data.labels[start + i] ? 1 : 0;
        }
    }
    return correct;
}

} // namespace

double accuracy(const Model& model, const LabeledDataset& data, std::size_t threads) {
    if (data.empty()) {
        throw DataError(DataError::Kind::invalid_content, "accuracy: missing held-out split");
    }
    threads = std::max<std::size_t>(1, std::min(threads, data.rows));
    std::size_t correct = 0;
    if (threads == 1) {
        correct = count_correct(model, data, 0, data.rows);
    } else {
        // Each worker evaluates its own clone; counts are summed, so the result
        // does not depend on the shard layout.
        std::vector<std::size_t> counts(threads, 0);
        std::vector<std::thread> workers;
        const std::size_t per = (data.rows + threads - 1) / threads;
        for (std::size_t w = 0; w < threads; ++w) {
            const std::size_t begin = std::min(data.rows, w * per);
            const std::size_t end = std::min(data.rows, begin + per);
            workers.emplace_back([&, w, begin, end, clone = model.clone()] {
                counts[w] = count_correct(clone, data, begin, end);
            });
        }
        for (auto& t : workers) {
            t.join();
        }
        correct = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    }
    return static_cast<double>(correct) / static_cast<double>(data.rows);
}

ContinualLearner::ContinualLearner(const Architecture& arch, const TrainConfig& config)
    : config_(config), rng_(config.seed), model_(architecture_for(arch, config.mode), rng_),
      optimizer_(config.learning_rate) {
    config_.validate();
}

TrainingLog ContinualLearner::train_task(const LabeledDataset& data) {
    data.validate();
    TrainingLog log;
    if (config_.epochs == 0) {
        return log;
    }
    if (data.empty()) {
        throw DataError(DataError::Kind::invalid_content, "train_task: empty training set");
    }
    const double kl_scale =
        config_.kl_scaling == KlScaling::per_dataset ? 1.0 / static_cast<double>(data.rows) : 1.0;
    std::vector<Tensor> params = model_.parameters();
    const std::size_t n_layers = model_.layers().size();
    Tape tape;

    for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
        const std::vector<std::size_t> order = rng_.permutation(data.rows);
        EpochRecord rec;
        rec.task = task_;
        rec.epoch = epoch;
        std::vector<std::vector<double>> routed(n_layers);
        std::size_t batches = 0;
        std::size_t correct = 0;
        double ent_batches = 0.0;

        for (std::size_t start = 0; start < data.rows; start += config_.batch_size) {
            const std::size_t stop = std::min(data.rows, start + config_.batch_size);
            const std::span<const std::size_t> index(order.data() + start, stop - start);
            const Tensor x = data.batch(index);
            std::vector<int> y(index.size());
            for (std::size_t i = 0; i < index.size(); ++i) {
                y[i] = data.labels[index[i]];
            }

            tape.clear();
            LossBreakdown loss;
            {
                Tape::Scope scope(tape);
                try {
                    loss = total_loss(model_, x, y, config_, rng_, kl_scale);
                } catch (const DomainError& e) {
                    // a collapsed posterior scale only arises from a blown-up update
                    throw NumericError("task " + std::to_string(task_) + " epoch " + std::to_string(epoch) +
                                       ": " + e.what());
                }
                if (!loss.total.all_finite()) {
                    throw NumericError("task " + std::to_string(task_) + " epoch " + std::to_string(epoch) +
                                       ": loss diverged");
                }
                tape.backward(loss.total);
            }
            optimizer_.step(params);
            for (Tensor& p : params) {
                p.zero_grad();
            }
            for (const Tensor& p : params) {
                if (!p.all_finite()) {
                    throw NumericError("task " + std::to_string(task_) + " epoch " + std::to_string(epoch) +
                                       ": parameters diverged");
                }
            }

            ++batches;
            rec.loss += loss.total.item();
            rec.nll += loss.nll;
            rec.gating_kl += loss.gating_kl;
            rec.weight_kl += loss.weight_kl;
            rec.entropy_cost += loss.entropy_cost;
            rec.dpp_diversity += loss.dpp_diversity;
            double cond = 0.0, marg = 0.0, det = 0.0;
            std::size_t move_layers = 0;
            for (std::size_t l = 0; l < n_layers; ++l) {
                const AuxLossBundle& aux = loss.layers[l];
                if (routed[l].size() < aux.routed.size()) {
                    routed[l].resize(aux.routed.size(), 0.0);
                }
                for (std::size_t e = 0; e < aux.routed.size(); ++e) {
                    routed[l][e] += static_cast<double>(aux.routed[e]);
                }
                if (std::holds_alternative<MoveLayer>(model_.layers()[l])) {
                    cond += aux.entropy.conditional;
                    marg += aux.entropy.marginal;
                    det += aux.kernel_determinant;
                    ++move_layers;
                }
            }
            if (move_layers > 0) {
                rec.conditional_entropy += cond / static_cast<double>(move_layers);
                rec.marginal_entropy += marg / static_cast<double>(move_layers);
                rec.kernel_determinant += det / static_cast<double>(move_layers);
                ent_batches += 1.0;
            }
            const std::size_t c = loss.logits.cols();
            auto lv = loss.logits.values();
            for (std::size_t i = 0; i < y.size(); ++i) {
                const auto row = lv.subspan(i * c, c);
                const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
                correct += best == y[i] ? 1 : 0;
            }
        }

        const double b = static_cast<double>(batches);
        rec.loss /= b;
        rec.nll /= b;
        rec.gating_kl /= b;
        rec.weight_kl /= b;
        rec.entropy_cost /= b;
        rec.dpp_diversity /= b;
        if (ent_batches > 0.0) {
            rec.conditional_entropy /= ent_batches;
            rec.marginal_entropy /= ent_batches;
            rec.kernel_determinant /= ent_batches;
        }
        for (auto& layer : routed) {
            const double total = std::accumulate(layer.begin(), layer.end(), 0.0);
            for (double& v : layer) {
                v = total > 0.0 ? v / total : 0.0;
            }
        }
        rec.expert_load = std::move(routed);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.rows);
        log.epochs.push_back(std::move(rec));
    }
    return log;
}

void ContinualLearner::advance_task() {
    model_.snapshot_priors();
    optimizer_.reset();
    ++task_;
}

std::vector<double> ContinualLearner::evaluate_row(const TaskStream& stream, std::size_t up_to) const {
    if (up_to >= stream.size()) {
        throw DimensionError("evaluate_row: stage " + std::to_string(up_to) + " beyond the stream");
    }
    std::vector<double> row;
    for (std::size_t j = 0; j <= up_to; ++j) {
        row.push_back(accuracy(model_, stream.tasks[j].test, config_.eval_threads));
    }
    return row;
}

namespace {

AccuracyMatrix empty_matrix(const TaskStream& stream) {
    AccuracyMatrix m;
    for (const Task& t : stream.tasks) {
        m.test_counts.push_back(t.test.rows);
    }
    return m;
}

void append(TrainingLog& into, TrainingLog&& from) {
    for (auto& e : from.epochs) {
        into.epochs.push_back(std::move(e));
    }
}

} // namespace

StreamResult offline_oracle_baseline(const TaskStream& stream, const Architecture& arch, const TrainConfig& config,
                                     const StageCallback& on_stage) {
    StreamResult result;
    result.matrix = empty_matrix(stream);
    TrainConfig oracle = config;
    oracle.mode = Mode::offline_oracle;
    std::vector<const LabeledDataset*> seen;
    for (std::size_t t = 0; t < stream.size(); ++t) {
        seen.push_back(&stream.tasks[t].train);
        ContinualLearner learner(arch, oracle);
        const LabeledDataset joint = t == 0 ? stream.tasks[0].train : concatenate(seen);
        TrainingLog log = learner.train_task(joint);
        for (auto& e : log.epochs) {
            e.task = t;
        }
        append(result.log, std::move(log));
        result.matrix.rows.push_back(learner.evaluate_row(stream, t));
        if (on_stage) {
            on_stage(t, result.matrix.rows.back());
        }
        if (t + 1 == stream.size()) {
            result.final_models.push_back(learner.model().clone());
        }
    }
    return result;
}

StreamResult run_stream(const TaskStream& stream, const Architecture& arch, const TrainConfig& config,
                        const StageCallback& on_stage) {
    if (stream.size() == 0) {
        throw DataError(DataError::Kind::invalid_content, "run_stream: empty task stream");
    }
    if (config.mode == Mode::offline_oracle) {
        return offline_oracle_baseline(stream, arch, config, on_stage);
    }
    StreamResult result;
    result.matrix = empty_matrix(stream);
    ContinualLearner learner(arch, config);
    for (std::size_t t = 0; t < stream.size(); ++t) {
        append(result.log, learner.train_task(stream.tasks[t].train));
        result.matrix.rows.push_back(learner.evaluate_row(stream, t));
        if (on_stage) {
            on_stage(t, result.matrix.rows.back());
        }
        learner.advance_task();
    }
    result.final_models.push_back(learner.model().clone());
    return result;
}

} // namespace hvcl
