#pragma once

// Reference computations used to check the library. They are written
// independently of the production code paths and favour directness over speed.

#include "hvcl/rng.hpp"
#include "hvcl/tensor.hpp"

#include <span>
#include <vector>

namespace hvcl::oracle {

/// Inverse standard-normal CDF, accurate to a few ulps on (0, 1).
double normal_quantile(double u);

/// Monte Carlo estimate of KL(p || q) = E_p[log p(x) - log q(x)] for diagonal Gaussians.
double kl_monte_carlo(std::span<const double> mean_p, std::span<const double> std_p, std::span<const double> mean_q,
                      std::span<const double> std_q, std::size_t samples, Rng& rng);

/// W2^2 between 1-D Gaussians by midpoint quadrature of the quantile coupling,
/// integral over u in (0, 1) of (F_p^-1(u) - F_q^-1(u))^2.
double w2_quantile_quadrature(double mean_p, double std_p, double mean_q, double std_q, std::size_t points);

/// Smallest eigenvalue of a symmetric matrix (self-adjoint eigensolver).
double min_eigenvalue(const Tensor& symmetric);

/// log det of a symmetric positive-definite matrix via an LU factorization.
double log_det_lu(const Tensor& square);

/// H(M|X) and H(M) by direct summation.
struct EntropyPair {
    double conditional = 0.0;
    double marginal = 0.0;
};
EntropyPair batch_entropies(const std::vector<std::vector<double>>& rows);

} // namespace hvcl::oracle
