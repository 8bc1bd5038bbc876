#include "hvcl/oracles.hpp"

#include "hvcl/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace hvcl::oracle {

double normal_quantile(double u) {
    if (!(u > 0.0 && u < 1.0)) {
        throw DomainError("normal_quantile: argument outside (0, 1)");
    }
    // Acklam's rational approximation followed by one Halley step.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double low = 0.02425;
    double x;
    if (u < low) {
        const double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - low) {
        const double q = u - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - u;
    const double g = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - g / (1.0 + 0.5 * x * g);
}

double kl_monte_carlo(std::span<const double> mean_p, std::span<const double> std_p, std::span<const double> mean_q,
                      std::span<const double> std_q, std::size_t samples, Rng& rng) {
    const std::size_t dim = mean_p.size();
    double total = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        double log_ratio = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double x = mean_p[i] + std_p[i] * rng.normal();
            const double zp = (x - mean_p[i]) / std_p[i];
            const double zq = (x - mean_q[i]) / std_q[i];
            log_ratio += -std::log(std_p[i]) - 0.5 * zp * zp + std::log(std_q[i]) + 0.5 * zq * zq;
        }
        total += log_ratio;
    }
    return total / static_cast<double>(samples);
}

double w2_quantile_quadrature(double mean_p, double std_p, double mean_q, double std_q, std::size_t points) {
    double total = 0.0;
    const double h = 1.0 / static_cast<double>(points);
    for (std::size_t i = 0; i < points; ++i) {
        const double u = (static_cast<double>(i) + 0.5) * h;
        const double z = normal_quantile(u);
        const double gap = (mean_p + std_p * z) - (mean_q + std_q * z);
        total += gap * gap;
    }
    return total * h;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    if (t.rank() != 2 || t.rows() != t.cols()) {
        throw DimensionError("oracle: expected a square matrix, got " + t.shape_string());
    }
    const auto n = static_cast<Eigen::Index>(t.rows());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            m(i, j) = t.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        }
    }
    return m;
}

} // namespace

double min_eigenvalue(const Tensor& symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(symmetric), Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

double log_det_lu(const Tensor& square) {
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(to_eigen(square));
    const Eigen::MatrixXd& packed = lu.matrixLU();
    double total = 0.0;
    for (Eigen::Index i = 0; i < packed.rows(); ++i) {
        total += std::log(std::abs(packed(i, i)));
    }
    return total;
}

EntropyPair batch_entropies(const std::vector<std::vector<double>>& rows) {
    EntropyPair out;
    if (rows.empty()) {
        return out;
    }
    const std::size_t m = rows.front().size();
    std::vector<double> mean(m, 0.0);
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < m; ++k) {
            if (row[k] > 0.0) {
                out.conditional -= row[k] * std::log(row[k]);
            }
            mean[k] += row[k];
        }
    }
    out.conditional /= static_cast<double>(rows.size());
    for (double v : mean) {
        v /= static_cast<double>(rows.size());
        if (v > 0.0) {
            out.marginal -= v * std::log(v);
        }
    }
    return out;
}

} // namespace hvcl::oracle
