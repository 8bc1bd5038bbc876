#pragma once

#include "hvcl/tensor.hpp"
#include "hvcl/variational.hpp"

#include <span>
#include <string_view>

namespace hvcl {

// ---------------------------------------------------------------------------
// Gating entropy

/// Which way round the batch entropy cost enters the minimized loss.
enum class EntropySign {
    conditional_minus_marginal, // H(M|X) - H(M): confident per-input routing, spread marginal use
    marginal_minus_conditional, // H(M) - H(M|X)
};

std::string_view to_string(EntropySign sign);
EntropySign entropy_sign_from_string(std::string_view text);

/// Batch estimates of the gating entropies, in nats.
struct EntropyReport {
    double conditional = 0.0; // H(M|X), mean per-row entropy
    double marginal = 0.0;    // H(M), entropy of the mean row
    std::size_t batch = 0;
};

struct EntropyResult {
    Tensor cost; // scalar, differentiable w.r.t. the probabilities
    EntropyReport report;
};

/// Entropy cost of a batch of gating distributions probs[n x M] (rows sum to one).
EntropyResult entropy_cost(const Tensor& probs, EntropySign sign = EntropySign::conditional_minus_marginal);

// ---------------------------------------------------------------------------
// Wasserstein-2 kernel and DPP objective

/// Squared 2-Wasserstein distance between diagonal Gaussians:
/// |mu_p - mu_q|^2 + |sigma_p - sigma_q|^2.
double w2_diag_gaussian(const GaussianMeanField& p, const GaussianMeanField& q);
double w2_diag_gaussian(std::span<const double> mean_p, std::span<const double> std_p,
                        std::span<const double> mean_q, std::span<const double> std_q);

/// exp(-W2^2(p, q) / (2 h^2)).
double w2_exp_kernel(const GaussianMeanField& p, const GaussianMeanField& q, double width);
double w2_exp_kernel_from_distance(double w2_squared, double width);

struct KernelMatrix {
    Tensor values; // [M x M], differentiable w.r.t. the expert posteriors
    double width = 1.0;

    [[nodiscard]] std::size_t size() const { return values.rows(); }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return values.at(i, j); }
};

/// Pairwise kernel between expert posteriors; each expert is the flattened
/// (mu, std) of its weight matrix. Needs at least two experts of one shape.
KernelMatrix kernel_matrix(std::span<const GaussianMeanField> experts, double width);

struct DppLoss {
    Tensor value;            // -log det(K + jitter I), scalar
    double jitter = 0.0;     // jitter actually used
    double determinant = 0.0; // det(K + jitter I)
};

/// -log det(K + jitter I) via Cholesky; gradient w.r.t. K is -(K + jitter I)^-1.
///
/// On factorization failure the jitter is raised tenfold, up to `max_jitter`,
/// before a NumericError is thrown.
DppLoss dpp_diversity_loss(const KernelMatrix& kmat, double jitter = 1e-6, double max_jitter = 1e-3);

/// -log det(S + jitter I) with S = (A + A^T) / 2; the core of dpp_diversity_loss.
DppLoss neg_log_det(const Tensor& a, double jitter = 1e-6, double max_jitter = 1e-3);

} // namespace hvcl
