#include "hvcl/diversity.hpp"

#include "hvcl/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace hvcl {

namespace {

// Smallest log used for zero probabilities; keeps 0 * log(0) gradients finite.
constexpr double kLogFloor = -745.0;

double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogFloor; }

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

std::string_view to_string(EntropySign sign) {
    return sign == EntropySign::conditional_minus_marginal ? "conditional_minus_marginal"
                                                           : "marginal_minus_conditional";
}

EntropySign entropy_sign_from_string(std::string_view text) {
    if (text == "conditional_minus_marginal" || text == "+1" || text == "1") {
        return EntropySign::conditional_minus_marginal;
    }
    if (text == "marginal_minus_conditional" || text == "-1") {
        return EntropySign::marginal_minus_conditional;
    }
    throw ConfigError("unknown entropy sign '" + std::string(text) + "'");
}

EntropyResult entropy_cost(const Tensor& probs, EntropySign sign) {
    if (probs.rank() != 2) {
        throw DimensionError("entropy_cost: expected [n x M] probabilities, got " + probs.shape_string());
    }
    const std::size_t n = probs.rows();
    const std::size_t m = probs.cols();
    if (n == 0) {
        throw DimensionError("entropy_cost: empty batch");
    }
    auto p = probs.values();
    std::vector<double> marginal(m, 0.0);
    double conditional = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < m; ++k) {
            conditional -= xlogx(p[i * m + k]);
            marginal[k] += p[i * m + k];
        }
    }
    conditional /= static_cast<double>(n);
    double marginal_entropy = 0.0;
    for (double& v : marginal) {
        v /= static_cast<double>(n);
        marginal_entropy -= xlogx(v);
    }
    const double direction = sign == EntropySign::conditional_minus_marginal ? 1.0 : -1.0;
    Tensor cost = Tensor::scalar(direction * (conditional - marginal_entropy));

    if (detail::tracking({&probs})) {
        detail::record(cost, [probs, cost, marginal, direction, n, m]() mutable {
            // d/dp_ik [H(M|X) - H(M)] = -(log p_ik - log pbar_k) / n
            const double g = cost.grad()[0] * direction / static_cast<double>(n);
            auto p = probs.values();
            auto gp = probs.grad_mut();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < m; ++k) {
                    gp[i * m + k] -= g * (safe_log(p[i * m + k]) - safe_log(marginal[k]));
                }
            }
        });
    }
    return {cost, {conditional, marginal_entropy, n}};
}

double w2_diag_gaussian(std::span<const double> mean_p, std::span<const double> std_p,
                        std::span<const double> mean_q, std::span<const double> std_q) {
    if (mean_p.size() != mean_q.size() || std_p.size() != std_q.size() || mean_p.size() != std_p.size()) {
        throw DimensionError("w2_diag_gaussian: dimension mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < mean_p.size(); ++i) {
        const double dm = mean_p[i] - mean_q[i];
        const double ds = std_p[i] - std_q[i];
        total += dm * dm + ds * ds;
    }
    return total;
}

double w2_diag_gaussian(const GaussianMeanField& p, const GaussianMeanField& q) {
    if (p.shape() != q.shape()) {
        throw DimensionError("w2_diag_gaussian: shape mismatch " + p.mu.shape_string() + " vs " +
                             q.mu.shape_string());
    }
    const std::vector<double> sp = p.stddev();
    const std::vector<double> sq = q.stddev();
    return w2_diag_gaussian(p.mu.values(), sp, q.mu.values(), sq);
}

double w2_exp_kernel_from_distance(double w2_squared, double width) {
    if (!(width > 0.0)) {
        throw DomainError("kernel width must be positive");
    }
    return std::exp(-w2_squared / (2.0 * width * width));
}

double w2_exp_kernel(const GaussianMeanField& p, const GaussianMeanField& q, double width) {
    return w2_exp_kernel_from_distance(w2_diag_gaussian(p, q), width);
}

KernelMatrix kernel_matrix(std::span<const GaussianMeanField> experts, double width) {
    const std::size_t m = experts.size();
    if (m < 2) {
        throw DimensionError("kernel_matrix: at least two experts are required");
    }
    if (!(width > 0.0)) {
        throw DomainError("kernel width must be positive");
    }
    for (const auto& e : experts) {
        if (e.shape() != experts.front().shape()) {
            throw DimensionError("kernel_matrix: experts have heterogeneous shapes");
        }
    }
    std::vector<std::vector<double>> stds;
    stds.reserve(m);
    for (const auto& e : experts) {
        stds.push_back(e.stddev());
    }
    std::vector<double> k(m * m, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double d = w2_diag_gaussian(experts[i].mu.values(), stds[i], experts[j].mu.values(), stds[j]);
            k[i * m + j] = k[j * m + i] = w2_exp_kernel_from_distance(d, width);
        }
    }
    Tensor values(Shape{m, m}, std::move(k));

    bool track = false;
    for (const auto& e : experts) {
        track = track || detail::tracking({&e.mu, &e.rho});
    }
    if (track) {
        std::vector<GaussianMeanField> held(experts.begin(), experts.end());
        detail::record(values, [held = std::move(held), stds = std::move(stds), values, width, m]() mutable {
            auto g = values.grad();
            auto kv = values.values();
            const double inv = 1.0 / (width * width);
            std::vector<std::vector<double>> grad_std(m);
            for (std::size_t i = 0; i < m; ++i) {
                grad_std[i].assign(stds[i].size(), 0.0);
            }
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = i + 1; j < m; ++j) {
                    // K_ij = exp(-D / 2h^2); dK/dD = -K / 2h^2; D gets 2 (a - b) per coordinate.
                    const double coeff = -(g[i * m + j] + g[j * m + i]) * kv[i * m + j] * inv;
                    if (coeff == 0.0) {
                        continue;
                    }
                    auto mi = held[i].mu.values();
                    auto mj = held[j].mu.values();
                    const bool gi = held[i].mu.requires_grad();
                    const bool gj = held[j].mu.requires_grad();
                    std::span<double> gmi = gi ? held[i].mu.grad_mut() : std::span<double>{};
                    std::span<double> gmj = gj ? held[j].mu.grad_mut() : std::span<double>{};
                    for (std::size_t d = 0; d < mi.size(); ++d) {
                        const double delta = coeff * (mi[d] - mj[d]);
                        if (gi) gmi[d] += delta;
                        if (gj) gmj[d] -= delta;
                        const double sdelta = coeff * (stds[i][d] - stds[j][d]);
                        grad_std[i][d] += sdelta;
                        grad_std[j][d] -= sdelta;
                    }
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                if (!held[i].rho.requires_grad()) {
                    continue;
                }
                auto gr = held[i].rho.grad_mut();
                auto rv = held[i].rho.values();
                for (std::size_t d = 0; d < rv.size(); ++d) {
                    gr[d] += grad_std[i][d] * sigmoid(rv[d]);
                }
            }
        });
    }
    return {values, width};
}

DppLoss neg_log_det(const Tensor& a, double jitter, double max_jitter) {
    if (a.rank() != 2 || a.rows() != a.cols()) {
        throw DimensionError("neg_log_det: expected a square matrix, got " + a.shape_string());
    }
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto m = static_cast<Eigen::Index>(a.rows());
    const Eigen::Map<const Matrix> raw(a.values().data(), m, m);
    // Work on the symmetric part so every entry, not just the lower triangle, enters the value.
    const Matrix base = 0.5 * (raw + raw.transpose());
    if (!base.allFinite()) {
        throw NumericError("neg_log_det: non-finite matrix");
    }
    double used = jitter;
    Eigen::LLT<Matrix> llt;
    for (;;) {
        Matrix shifted = base;
        shifted.diagonal().array() += used;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
            break;
        }
        if (used >= max_jitter) {
            throw NumericError("neg_log_det: Cholesky factorization failed with jitter " + std::to_string(used));
        }
        used = std::min(used * 10.0, max_jitter);
    }
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    Tensor out = Tensor::scalar(-log_det);
    if (detail::tracking({&a})) {
        Matrix inverse = llt.solve(Matrix::Identity(m, m));
        detail::record(out, [a, out, inverse = std::move(inverse), m]() mutable {
            const double g = out.grad()[0];
            auto ga = a.grad_mut();
            for (Eigen::Index i = 0; i < m; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    ga[static_cast<std::size_t>(i * m + j)] -= g * inverse(j, i);
                }
            }
        });
    }
    return {out, used, std::exp(log_det)};
}

DppLoss dpp_diversity_loss(const KernelMatrix& kmat, double jitter, double max_jitter) {
    return neg_log_det(kmat.values, jitter, max_jitter);
}

} // namespace hvcl
