#include "hvcl/variational.hpp"

#include "hvcl/error.hpp"

#include <cmath>

namespace hvcl {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
    if (!(y > 0.0)) {
        throw DomainError("softplus_inverse: argument must be positive");
    }
    // log(e^y - 1), rearranged for large y.
    return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::vector<double> stds_of(const Tensor& rho) {
    std::vector<double> out(rho.size());
    auto rv = rho.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = softplus(rv[i]);
        if (!(out[i] > 0.0)) {
            throw DomainError("non-positive standard deviation (rho = " + std::to_string(rv[i]) + ")");
        }
    }
    return out;
}

} // namespace

GaussianMeanField GaussianMeanField::constant(const Shape& shape, double mean, double stddev) {
    return {Tensor::filled(shape, mean), Tensor::filled(shape, softplus_inverse(stddev))};
}

std::vector<double> GaussianMeanField::stddev() const { return stds_of(rho); }

GaussianMeanField GaussianMeanField::frozen_copy() const { return {mu.detach(), rho.detach()}; }

Tensor kl_diag_gaussian(const GaussianMeanField& p, const GaussianMeanField& q) {
    if (p.mu.shape() != p.rho.shape() || q.mu.shape() != q.rho.shape() || p.mu.shape() != q.mu.shape()) {
        throw DimensionError("kl_diag_gaussian: shape mismatch " + p.mu.shape_string() + " vs " +
                             q.mu.shape_string());
    }
    const std::vector<double> sp = stds_of(p.rho);
    const std::vector<double> sq = stds_of(q.rho);
    auto mp = p.mu.values();
    auto mq = q.mu.values();
    double total = 0.0;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const double diff = mp[i] - mq[i];
        total += std::log(sq[i] / sp[i]) + (sp[i] * sp[i] + diff * diff) / (2.0 * sq[i] * sq[i]) - 0.5;
    }
    Tensor out = Tensor::scalar(total);
    if (detail::tracking({&p.mu, &p.rho, &q.mu, &q.rho})) {
        detail::record(out, [p, q, out, sp, sq]() mutable {
            const double g = out.grad()[0];
            auto mp = p.mu.values();
            auto mq = q.mu.values();
            const std::size_t n = sp.size();
            if (p.mu.requires_grad()) {
                auto gm = p.mu.grad_mut();
                for (std::size_t i = 0; i < n; ++i) {
                    gm[i] += g * (mp[i] - mq[i]) / (sq[i] * sq[i]);
                }
            }
            if (p.rho.requires_grad()) {
                auto gr = p.rho.grad_mut();
                auto rv = p.rho.values();
                for (std::size_t i = 0; i < n; ++i) {
                    const double d_sigma = -1.0 / sp[i] + sp[i] / (sq[i] * sq[i]);
                    gr[i] += g * d_sigma * sigmoid(rv[i]);
                }
            }
            if (q.mu.requires_grad()) {
                auto gm = q.mu.grad_mut();
                for (std::size_t i = 0; i < n; ++i) {
                    gm[i] -= g * (mp[i] - mq[i]) / (sq[i] * sq[i]);
                }
            }
            if (q.rho.requires_grad()) {
                auto gr = q.rho.grad_mut();
                auto rv = q.rho.values();
                for (std::size_t i = 0; i < n; ++i) {
                    const double diff = mp[i] - mq[i];
                    const double d_sigma =
                        1.0 / sq[i] - (sp[i] * sp[i] + diff * diff) / (sq[i] * sq[i] * sq[i]);
                    gr[i] += g * d_sigma * sigmoid(rv[i]);
                }
            }
        });
    }
    return out;
}

VariationalDense::VariationalDense(std::size_t in_features, std::size_t out_features, Rng& rng,
                                   VariationalInit init) {
    if (in_features == 0 || out_features == 0) {
        throw DimensionError("VariationalDense: extents must be positive");
    }
    const Shape shape{in_features, out_features};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::vector<double> mu(in_features * out_features);
    for (double& v : mu) {
        v = rng.uniform(-bound, bound);
    }
    posterior_.mu = Tensor::parameter(shape, std::move(mu));
    posterior_.rho = Tensor::filled(shape, softplus_inverse(init.init_std));
    posterior_.rho.set_requires_grad(true);
    prior_ = GaussianMeanField::constant(shape, 0.0, init.prior_std);
    bias_ = Tensor::zeros({out_features});
    bias_.set_requires_grad(true);
}

Tensor VariationalDense::sample_forward(const Tensor& x, Rng& rng) const {
    std::vector<double> eps(posterior_.size());
    rng.fill_normal(eps);
    return sample_forward(x, eps);
}

Tensor VariationalDense::sample_forward(const Tensor& x, std::span<const double> eps) const {
    if (x.rank() != 2 || x.cols() != in_features()) {
        throw DimensionError("VariationalDense: input " + x.shape_string() + " does not match " +
                             std::to_string(in_features()) + " input features");
    }
    Tensor weight = ops::reparameterize(posterior_.mu, posterior_.rho, eps);
    return ops::add_bias(ops::matmul(x, weight), bias_);
}

Tensor VariationalDense::mean_forward(const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != in_features()) {
        throw DimensionError("VariationalDense: input " + x.shape_string() + " does not match " +
                             std::to_string(in_features()) + " input features");
    }
    return ops::add_bias(ops::matmul(x, posterior_.mu), bias_);
}

void VariationalDense::assign(GaussianMeanField posterior, GaussianMeanField prior, Tensor bias) {
    if (posterior.mu.shape() != posterior_.mu.shape() || prior.mu.shape() != posterior_.mu.shape() ||
        bias.shape() != bias_.shape()) {
        throw DimensionError("VariationalDense::assign: shape mismatch");
    }
    posterior_ = std::move(posterior);
    posterior_.mu.set_requires_grad(true);
    posterior_.rho.set_requires_grad(true);
    prior_ = prior.frozen_copy();
    bias_ = std::move(bias);
    bias_.set_requires_grad(true);
}

VariationalDense VariationalDense::clone() const {
    VariationalDense copy;
    copy.posterior_ = {posterior_.mu.clone(), posterior_.rho.clone()};
    copy.prior_ = prior_.frozen_copy();
    copy.bias_ = bias_.clone();
    return copy;
}

} // namespace hvcl
