#include "hvcl/move_layer.hpp"

#include "hvcl/error.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace hvcl {

Tensor AuxLossBundle::weighted_total() const {
    Tensor total = ops::scale(gating_kl, weights.gating_kl);
    total = ops::add(total, ops::scale(weight_kl, weights.weight_kl));
    total = ops::add(total, ops::scale(entropy_cost, weights.entropy));
    return ops::add(total, ops::scale(dpp_diversity, weights.diversity));
}

Tensor GatingNet::logits(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }

Tensor GatingNet::prior_logits(const Tensor& x) const {
    return ops::add_bias(ops::matmul(x, prior_weight), prior_bias);
}

void GatingNet::snapshot() {
    prior_weight = weight.detach();
    prior_bias = bias.detach();
}

std::vector<std::size_t> top1_route(const Tensor& probs) {
    if (probs.rank() != 2) {
        throw DimensionError("top1_route: expected [n x M] probabilities, got " + probs.shape_string());
    }
    const std::size_t n = probs.rows();
    const std::size_t m = probs.cols();
    auto p = probs.values();
    std::vector<std::size_t> route(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < m; ++k) {
            if (p[i * m + k] > p[i * m + best]) {
                best = k;
            }
        }
        route[i] = best;
    }
    return route;
}

std::vector<std::vector<std::size_t>> topk_route(const Tensor& probs, std::size_t k) {
    if (probs.rank() != 2) {
        throw DimensionError("topk_route: expected [n x M] probabilities, got " + probs.shape_string());
    }
    const std::size_t n = probs.rows();
    const std::size_t m = probs.cols();
    if (k == 0 || k > m) {
        throw DimensionError("topk_route: k must lie in [1, M]");
    }
    auto p = probs.values();
    std::vector<std::vector<std::size_t>> out(n);
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return p[i * m + a] > p[i * m + b]; });
        out[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
}

MoveLayer::MoveLayer(std::size_t in_features, std::size_t out_features, Rng& rng, MoveLayerOptions options)
    : k_(options.k), index_(options.index) {
    if (options.experts == 0) {
        throw DimensionError("MoveLayer: at least one expert is required");
    }
    if (k_ == 0 || k_ > options.experts) {
        throw DimensionError("MoveLayer: k must lie in [1, experts]");
    }
    experts_.reserve(options.experts);
    for (std::size_t m = 0; m < options.experts; ++m) {
        experts_.emplace_back(in_features, out_features, rng, options.init);
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::vector<double> w(in_features * options.experts);
    for (double& v : w) {
        v = rng.uniform(-bound, bound);
    }
    gating_.weight = Tensor::parameter({in_features, options.experts}, std::move(w));
    gating_.bias = Tensor::zeros({options.experts});
    gating_.bias.set_requires_grad(true);
    // Zero prior network: uniform p(m|x) before the first snapshot.
    gating_.prior_weight = Tensor::zeros({in_features, options.experts});
    gating_.prior_bias = Tensor::zeros({options.experts});
}

Tensor MoveLayer::gate(const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != in_features()) {
        throw DimensionError("MoveLayer " + std::to_string(index_) + ": input " + x.shape_string() +
                             " does not match " + std::to_string(in_features()) + " features");
    }
    return ops::softmax(gating_.logits(x));
}

MoveOutput MoveLayer::forward(const Tensor& x, Rng& rng, const ForwardOptions& options) const {
    if (x.rank() != 2 || x.cols() != in_features()) {
        throw DimensionError("MoveLayer " + std::to_string(index_) + ": input " + x.shape_string() +
                             " does not match " + std::to_string(in_features()) + " features");
    }
    const std::size_t n = x.rows();
    const std::size_t m = experts_.size();

    MoveOutput out;
    const Tensor logits = gating_.logits(x);
    out.probs = ops::softmax(logits);
    const auto choice = topk_route(out.probs, k_);

    out.route.resize(n);
    std::vector<std::vector<std::size_t>> rows_of(m);
    for (std::size_t i = 0; i < n; ++i) {
        out.route[i] = choice[i].front();
        for (std::size_t e : choice[i]) {
            rows_of[e].push_back(i);
        }
    }

    std::vector<Tensor> parts;
    std::vector<std::vector<std::size_t>> where;
    out.aux.routed.assign(m, 0);
    for (std::size_t e = 0; e < m; ++e) {
        const auto& rows = rows_of[e];
        out.aux.routed[e] = rows.size();
        if (rows.empty()) {
            continue;
        }
        const Tensor xe = ops::gather_rows(x, rows);
        const Tensor ye = options.sample ? experts_[e].sample_forward(xe, rng) : experts_[e].mean_forward(xe);
        const std::vector<std::size_t> column(rows.size(), e);
        const Tensor gate_prob = ops::pick(ops::gather_rows(out.probs, rows), column);
        parts.push_back(ops::scale_rows(ye, gate_prob));
        where.push_back(rows);
        out.aux.expert_evaluations += rows.size();
    }
    if (parts.empty()) {
        throw DimensionError("MoveLayer " + std::to_string(index_) + ": empty batch");
    }
    out.y = ops::scatter_rows(parts, where, n);
    if (!out.y.all_finite()) {
        throw NumericError("MoveLayer " + std::to_string(index_) + ": non-finite activations");
    }

    if (!options.with_aux) {
        return out;
    }
    AuxLossBundle& aux = out.aux;
    aux.weights = options.weights;

    const Tensor log_p = ops::log_softmax(logits);
    const Tensor log_prior = ops::log_softmax(gating_.prior_logits(x));
    const Tensor row_kl = ops::sum(ops::mul(out.probs, ops::sub(log_p, log_prior)), 1);
    aux.gating_kl = ops::mean(row_kl);

    Tensor weight_kl = Tensor::scalar(0.0);
    for (std::size_t e = 0; e < m; ++e) {
        if (!rows_of[e].empty()) {
            weight_kl = ops::add(weight_kl, experts_[e].kl_to_prior());
        }
    }
    aux.weight_kl = weight_kl;

    EntropyResult entropy = entropy_cost(out.probs, options.entropy_sign);
    aux.entropy_cost = entropy.cost;
    aux.entropy = entropy.report;

    if (m >= 2) {
        const std::vector<GaussianMeanField> posts = expert_posteriors();
        const KernelMatrix kmat = kernel_matrix(posts, options.kernel_width);
        DppLoss dpp = dpp_diversity_loss(kmat, options.jitter);
        aux.dpp_diversity = dpp.value;
        aux.kernel_determinant = dpp.determinant;
    }

    for (const Tensor* term : {&aux.gating_kl, &aux.weight_kl, &aux.entropy_cost, &aux.dpp_diversity}) {
        if (!term->all_finite()) {
            throw NumericError("MoveLayer " + std::to_string(index_) + ": non-finite auxiliary loss");
        }
    }
    return out;
}

void MoveLayer::snapshot_priors() {
    gating_.snapshot();
    for (auto& expert : experts_) {
        expert.snapshot_prior();
    }
}

std::vector<double> MoveLayer::expert_load(const Tensor& inputs) const {
    if (inputs.rank() != 2 || inputs.rows() == 0) {
        throw DimensionError("expert_load: empty dataset");
    }
    const auto route = top1_route(gate(inputs));
    std::vector<double> load(experts_.size(), 0.0);
    for (std::size_t e : route) {
        load[e] += 1.0;
    }
    for (double& v : load) {
        v /= static_cast<double>(route.size());
    }
    return load;
}

std::vector<GaussianMeanField> MoveLayer::expert_posteriors() const {
    std::vector<GaussianMeanField> out;
    out.reserve(experts_.size());
    for (const auto& e : experts_) {
        out.push_back(e.posterior());
    }
    return out;
}

std::vector<Tensor> MoveLayer::parameters() const {
    std::vector<Tensor> params{gating_.weight, gating_.bias};
    for (const auto& e : experts_) {
        for (const Tensor& p : e.parameters()) {
            params.push_back(p);
        }
    }
    return params;
}

MoveLayer MoveLayer::clone() const {
    MoveLayer copy = *this;
    for (auto& e : copy.experts_) {
        e = e.clone();
    }
    copy.gating_.weight = gating_.weight.clone();
    copy.gating_.bias = gating_.bias.clone();
    copy.gating_.prior_weight = gating_.prior_weight.detach();
    copy.gating_.prior_bias = gating_.prior_bias.detach();
    return copy;
}

} // namespace hvcl
