#pragma once

#include "hvcl/diversity.hpp"
#include "hvcl/rng.hpp"
#include "hvcl/tensor.hpp"
#include "hvcl/variational.hpp"

#include <vector>

namespace hvcl {

/// Weights of the auxiliary terms (defaults: the classifier settings used for
/// split MNIST; the entropy and diversity weights share the 0.01 bonus weight).
struct LossWeights {
    double gating_kl = 0.002;
    double weight_kl = 0.75;
    double entropy = 0.01;
    double diversity = 0.01;
};

/// Per-layer auxiliary losses of one forward pass.
struct AuxLossBundle {
    Tensor gating_kl = Tensor::scalar(0.0);     // batch mean of KL(p_t(m|x) || p_prior(m|x))
    Tensor weight_kl = Tensor::scalar(0.0);     // sum over routed experts of KL(posterior || prior)
    Tensor entropy_cost = Tensor::scalar(0.0);  // signed H(M|X) - H(M)
    Tensor dpp_diversity = Tensor::scalar(0.0); // -log det(K + jitter I); 0 with a single expert
    LossWeights weights;

    EntropyReport entropy;
    double kernel_determinant = 1.0;
    std::size_t expert_evaluations = 0;  // sparsity instrumentation: expert row-evaluations performed
    std::vector<std::size_t> routed;     // rows routed to each expert

    /// beta1 gating_kl + beta2 weight_kl + beta3 entropy_cost + beta4 dpp_diversity.
    [[nodiscard]] Tensor weighted_total() const;
};

/// Deterministic single-layer gating network with a frozen prior copy.
struct GatingNet {
    Tensor weight;       // [d_in x M]
    Tensor bias;         // [M]
    Tensor prior_weight; // frozen copies
    Tensor prior_bias;

    [[nodiscard]] Tensor logits(const Tensor& x) const;
    [[nodiscard]] Tensor prior_logits(const Tensor& x) const;
    void snapshot();
};

struct MoveLayerOptions {
    std::size_t experts = 2;
    std::size_t k = 1;
    VariationalInit init;
    std::size_t index = 0; // position in the model, used in diagnostics
};

struct ForwardOptions {
    bool sample = true;   // false: posterior means, no sampling
    bool with_aux = true; // compute the auxiliary losses
    LossWeights weights;
    double kernel_width = 1.0;
    double jitter = 1e-6;
    EntropySign entropy_sign = EntropySign::conditional_minus_marginal;
};

struct MoveOutput {
    Tensor y;
    Tensor probs;
    std::vector<std::size_t> route; // top-1 expert per row
    AuxLossBundle aux;
};

/// Per-row argmax; ties go to the lowest expert index.
std::vector<std::size_t> top1_route(const Tensor& probs);
/// Per-row indices of the k largest probabilities, highest first (ties to lower index).
std::vector<std::vector<std::size_t>> topk_route(const Tensor& probs, std::size_t k);

/// Mixture-of-variational-experts layer: M variational dense experts behind a
/// deterministic softmax gate with sparse top-k routing.
///
/// Row i of the output is sum over its routed experts m of p(m|x_i) * expert_m(x_i);
/// only routed experts are evaluated, so a batch of n rows costs n * k expert
/// evaluations. Gating priors are a frozen copy of the gating network
/// evaluated on the current input (uniform before the first snapshot).
class MoveLayer {
public:
    MoveLayer(std::size_t in_features, std::size_t out_features, Rng& rng, MoveLayerOptions options = {});

    /// softmax(x W_g + b_g), [n x M].
    [[nodiscard]] Tensor gate(const Tensor& x) const;
    [[nodiscard]] MoveOutput forward(const Tensor& x, Rng& rng, const ForwardOptions& options = {}) const;

    /// Gating prior and every expert prior become copies of the current posteriors.
    void snapshot_priors();

    /// Fraction of rows routed (top-1) to each expert. Throws on an empty input.
    [[nodiscard]] std::vector<double> expert_load(const Tensor& inputs) const;

    [[nodiscard]] std::size_t num_experts() const { return experts_.size(); }
    [[nodiscard]] std::size_t k() const { return k_; }
    [[nodiscard]] std::size_t index() const { return index_; }
    [[nodiscard]] std::size_t in_features() const { return experts_.front().in_features(); }
    [[nodiscard]] std::size_t out_features() const { return experts_.front().out_features(); }

    [[nodiscard]] const std::vector<VariationalDense>& experts() const { return experts_; }
    [[nodiscard]] std::vector<VariationalDense>& experts() { return experts_; }
    [[nodiscard]] const GatingNet& gating() const { return gating_; }
    [[nodiscard]] GatingNet& gating() { return gating_; }
    [[nodiscard]] std::vector<GaussianMeanField> expert_posteriors() const;

    [[nodiscard]] std::vector<Tensor> parameters() const;
    [[nodiscard]] MoveLayer clone() const;

private:
    std::vector<VariationalDense> experts_;
    GatingNet gating_;
    std::size_t k_ = 1;
    std::size_t index_ = 0;
};

} // namespace hvcl
