#pragma once

#include "hvcl/rng.hpp"
#include "hvcl/tensor.hpp"

#include <vector>

namespace hvcl {

/// softplus(x) = log(1 + e^x), evaluated without overflow.
double softplus(double x);
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

/// Diagonal Gaussian over a tensor of weights: N(mu, softplus(rho)^2) per entry.
struct GaussianMeanField {
    Tensor mu;
    Tensor rho;

    /// Every entry N(mean, stddev^2); the tensors do not require gradients.
    static GaussianMeanField constant(const Shape& shape, double mean, double stddev);

    [[nodiscard]] const Shape& shape() const { return mu.shape(); }
    [[nodiscard]] std::size_t size() const { return mu.size(); }
    [[nodiscard]] std::vector<double> stddev() const;
    /// Bit-identical deep copy with gradient tracking disabled.
    [[nodiscard]] GaussianMeanField frozen_copy() const;
};

/// KL(p || q) in nats between diagonal Gaussians, as a scalar tensor that is
/// differentiable with respect to whichever of p and q require gradients.
///
/// sum_d log(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2
Tensor kl_diag_gaussian(const GaussianMeanField& p, const GaussianMeanField& q);

struct VariationalInit {
    double init_std = 0.05;  // initial posterior std
    double prior_std = 1.0;  // std of the N(0, prior_std^2) prior used before the first task
};

/// Dense layer with a mean-field Gaussian posterior over its weight matrix, a
/// frozen prior of the same shape and a deterministic bias.
class VariationalDense {
public:
    VariationalDense(std::size_t in_features, std::size_t out_features, Rng& rng, VariationalInit init = {});

    /// x W + b with one weight sample W = mu + softplus(rho) * eps drawn for the whole batch.
    [[nodiscard]] Tensor sample_forward(const Tensor& x, Rng& rng) const;
    /// Same as sample_forward but with caller-supplied noise (length in * out).
    [[nodiscard]] Tensor sample_forward(const Tensor& x, std::span<const double> eps) const;
    /// x mu + b.
    [[nodiscard]] Tensor mean_forward(const Tensor& x) const;

    /// KL(posterior || prior) over the weight matrix.
    [[nodiscard]] Tensor kl_to_prior() const { return kl_diag_gaussian(posterior_, prior_); }

    /// prior <- copy of posterior.
    void snapshot_prior() { prior_ = posterior_.frozen_copy(); }

    [[nodiscard]] std::size_t in_features() const { return posterior_.mu.rows(); }
    [[nodiscard]] std::size_t out_features() const { return posterior_.mu.cols(); }

    [[nodiscard]] const GaussianMeanField& posterior() const { return posterior_; }
    [[nodiscard]] GaussianMeanField& posterior() { return posterior_; }
    [[nodiscard]] const GaussianMeanField& prior() const { return prior_; }
    [[nodiscard]] const Tensor& bias() const { return bias_; }
    [[nodiscard]] Tensor& bias() { return bias_; }

    /// Trainable tensors: mu, rho, bias.
    [[nodiscard]] std::vector<Tensor> parameters() const { return {posterior_.mu, posterior_.rho, bias_}; }

    /// Replaces every tensor; used by checkpoint loading.
    void assign(GaussianMeanField posterior, GaussianMeanField prior, Tensor bias);
    /// Deep copy with independent parameter storage.
    [[nodiscard]] VariationalDense clone() const;

private:
    VariationalDense() = default;

    GaussianMeanField posterior_;
    GaussianMeanField prior_;
    Tensor bias_;
};

} // namespace hvcl
