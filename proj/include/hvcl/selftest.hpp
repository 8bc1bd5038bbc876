#pragma once

#include "hvcl/diversity.hpp"
#include "hvcl/variational.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hvcl {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Implementations under test. Tests swap these out to confirm that a broken
/// implementation is reported under the right check name.
struct SelftestHooks {
    std::function<Tensor(const GaussianMeanField&, const GaussianMeanField&)> kl = kl_diag_gaussian;
    std::function<double(std::span<const double>, std::span<const double>, std::span<const double>,
                         std::span<const double>)>
        w2 = [](auto mp, auto sp, auto mq, auto sq) { return w2_diag_gaussian(mp, sp, mq, sq); };
    std::function<EntropyResult(const Tensor&)> entropy = [](const Tensor& p) { return entropy_cost(p); };
};

CheckResult check_kl_monte_carlo(const SelftestHooks& hooks, std::uint64_t seed);
CheckResult check_w2_quadrature(const SelftestHooks& hooks, std::uint64_t seed);
CheckResult check_kernel_psd(std::uint64_t seed);
CheckResult check_logdet_gradient(std::uint64_t seed);
CheckResult check_end_to_end_gradient(std::uint64_t seed);
CheckResult check_sparsity(std::uint64_t seed);
CheckResult check_snapshot_recursion(std::uint64_t seed);
CheckResult check_entropy_bounds(const SelftestHooks& hooks, std::uint64_t seed);

/// Runs every check above in order.
std::vector<CheckResult> run_selftest(const SelftestHooks& hooks = {}, std::uint64_t seed = 20240601);

} // namespace hvcl
