#include "hvcl/selftest.hpp"

#include "hvcl/error.hpp"
#include "hvcl/harness.hpp"
#include "hvcl/oracles.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace hvcl {

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

GaussianMeanField random_field(std::size_t dim, Rng& rng, double mean_scale, double std_lo, double std_hi) {
    std::vector<double> mu(dim), rho(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        mu[i] = mean_scale * rng.normal();
        rho[i] = softplus_inverse(rng.uniform(std_lo, std_hi));
    }
    return {Tensor({dim}, std::move(mu)), Tensor({dim}, std::move(rho))};
}

template <typename Fn>
CheckResult guarded(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return {name, false, std::string("exception: ") + e.what()};
    }
}

} // namespace

CheckResult check_kl_monte_carlo(const SelftestHooks& hooks, std::uint64_t seed) {
    const std::string name = "kl_vs_monte_carlo";
    return guarded(name, [&] {
        Rng rng(seed);
        constexpr std::size_t dim = 50;
        constexpr std::size_t samples = 100000;
        double worst = 0.0;
        for (int pair = 0; pair < 3; ++pair) {
            const GaussianMeanField p = random_field(dim, rng, 1.0, 0.5, 2.0);
            const GaussianMeanField q = random_field(dim, rng, 1.0, 0.5, 2.0);
            const double closed = hooks.kl(p, q).item();
            const double mc = oracle::kl_monte_carlo(p.mu.values(), p.stddev(), q.mu.values(), q.stddev(), samples, rng);
            worst = std::max(worst, std::abs(closed - mc) / std::abs(mc));
        }
        return CheckResult{name, worst <= 0.02, "max relative error " + fmt(worst) + " (limit 0.02)"};
    });
}

CheckResult check_w2_quadrature(const SelftestHooks& hooks, std::uint64_t seed) {
    const std::string name = "w2_vs_quadrature";
    return guarded(name, [&] {
        Rng rng(seed);
        double worst = 0.0;
        // Hand cases first, then random 1-D pairs.
        std::vector<std::array<double, 4>> cases{{0, 1, 3, 1}, {0, 1, 0, 2}, {0, 1, 0, 1}};
        for (int i = 0; i < 20; ++i) {
            cases.push_back({rng.normal(), rng.uniform(0.3, 1.5), rng.normal(), rng.uniform(0.3, 1.5)});
        }
        for (const auto& [mp, sp, mq, sq] : cases) {
            const double closed = hooks.w2(std::span(&mp, 1), std::span(&sp, 1), std::span(&mq, 1), std::span(&sq, 1));
            const double quad = oracle::w2_quantile_quadrature(mp, sp, mq, sq, 100000);
            worst = std::max(worst, std::abs(closed - quad));
        }
        return CheckResult{name, worst <= 1e-4, "max absolute error " + fmt(worst) + " (limit 1e-4)"};
    });
}

CheckResult check_kernel_psd(std::uint64_t seed) {
    const std::string name = "kernel_matrix_psd";
    return guarded(name, [&] {
        Rng rng(seed);
        double min_eig = std::numeric_limits<double>::infinity();
        double asym = 0.0;
        double diag = 0.0;
        for (int set = 0; set < 100; ++set) {
            const std::size_t m = 2 + rng.below(7);
            const std::size_t dim = 1 + rng.below(6);
            const double width = rng.uniform(0.5, 3.0);
            std::vector<GaussianMeanField> experts;
            for (std::size_t e = 0; e < m; ++e) {
                experts.push_back(random_field(dim, rng, 1.0, 0.1, 2.0));
            }
            if (set % 10 == 0) {
                experts[1] = experts[0].frozen_copy(); // duplicates make K singular
            }
            const KernelMatrix k = kernel_matrix(experts, width);
            for (std::size_t i = 0; i < m; ++i) {
                diag = std::max(diag, std::abs(k(i, i) - 1.0));
                for (std::size_t j = 0; j < m; ++j) {
                    asym = std::max(asym, std::abs(k(i, j) - k(j, i)));
                }
            }
            min_eig = std::min(min_eig, oracle::min_eigenvalue(k.values));
        }
        const bool ok = asym == 0.0 && diag == 0.0 && min_eig >= -1e-8;
        return CheckResult{name, ok,
                           "min eigenvalue " + fmt(min_eig) + ", asymmetry " + fmt(asym) + ", diagonal error " +
                               fmt(diag)};
    });
}

CheckResult check_logdet_gradient(std::uint64_t seed) {
    const std::string name = "logdet_gradient";
    return guarded(name, [&] {
        Rng rng(seed);
        double worst = 0.0;
        double value_error = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> b(16);
            rng.fill_normal(b);
            std::vector<double> a(16, 0.0);
            for (std::size_t i = 0; i < 4; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    for (std::size_t k = 0; k < 4; ++k) {
                        a[i * 4 + j] += b[i * 4 + k] * b[j * 4 + k];
                    }
                }
                a[i * 4 + i] += 0.5;
            }
            Tensor mat = Tensor::parameter({4, 4}, a);
            value_error = std::max(value_error,
                                   std::abs(neg_log_det(mat, 0.0).value.item() + oracle::log_det_lu(mat)));
            std::vector<Tensor> params{mat};
            const auto report = finite_diff_check([&] { return neg_log_det(mat, 0.0).value; }, params);
            worst = std::max(worst, report.max_relative_error);
        }
        const bool ok = worst <= 1e-5 && value_error <= 1e-10;
        return CheckResult{name, ok, "max relative gradient error " + fmt(worst) + " (limit 1e-5), value error " +
                                         fmt(value_error)};
    });
}

CheckResult check_end_to_end_gradient(std::uint64_t seed) {
    const std::string name = "end_to_end_gradient";
    return guarded(name, [&] {
        Rng rng(seed);
        Architecture arch;
        arch.input_dim = 4;
        arch.hidden = {3};
        arch.output_dim = 3;
        arch.kind = LayerKind::move;
        arch.experts = 2;
        Model model(arch, rng);
        // Move the posteriors off their priors so every KL term has a gradient.
        model.snapshot_priors();
        for (Tensor& p : model.parameters()) {
            for (double& v : p.values_mut()) {
                v += 0.1 * rng.normal();
            }
        }
        std::vector<double> xs(8 * 4);
        rng.fill_normal(xs);
        const Tensor x({8, 4}, xs);
        const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1};
        TrainConfig config;
        config.betas = {0.5, 0.75, 0.3, 0.2};
        const std::uint64_t noise_seed = rng.next();

        std::vector<Tensor> params = model.parameters();
        const auto report = finite_diff_check(
            [&] {
                Rng noise(noise_seed); // frozen sampling noise
                return total_loss(model, x, y, config, noise).total;
            },
            params);
        return CheckResult{name, report.max_relative_error <= 1e-3,
                           "max relative error " + fmt(report.max_relative_error) + " over " +
                               std::to_string(report.checked) + " entries (limit 1e-3)"};
    });
}

CheckResult check_sparsity(std::uint64_t seed) {
    const std::string name = "sparse_routing_count";
    return guarded(name, [&] {
        Rng rng(seed);
        Architecture arch;
        arch.input_dim = 16;
        arch.hidden = {8};
        arch.output_dim = 2;
        arch.kind = LayerKind::move;
        arch.experts = 4;
        arch.k = 1;
        const Model model(arch, rng);
        std::vector<double> xs(256 * 16);
        rng.fill_normal(xs);
        const ModelOutput out = model.forward(Tensor({256, 16}, xs), rng, ForwardOptions{});
        bool ok = true;
        std::string detail;
        for (std::size_t l = 0; l < out.aux.size(); ++l) {
            std::size_t routed = 0;
            for (std::size_t r : out.aux[l].routed) {
                routed += r;
            }
            ok = ok && out.aux[l].expert_evaluations == 256 && routed == 256;
            detail += "layer " + std::to_string(l) + ": " + std::to_string(out.aux[l].expert_evaluations) +
                      " expert rows; ";
        }
        return CheckResult{name, ok, detail + "expected 256 per layer"};
    });
}

CheckResult check_snapshot_recursion(std::uint64_t seed) {
    const std::string name = "snapshot_recursion";
    return guarded(name, [&] {
        const TaskStream stream = make_synthetic_stream(2, 256, 6.0, seed);
        Architecture arch;
        arch.input_dim = 2;
        arch.hidden = {8};
        arch.output_dim = 2;
        TrainConfig config;
        config.epochs = 2;
        config.batch_size = 64;
        config.seed = seed;
        ContinualLearner learner(arch, config);
        learner.train_task(stream.tasks[0].train);
        learner.advance_task();

        Rng rng(seed + 1);
        bool zero_after = true;
        for (const Task& task : stream.tasks) {
            const Tensor x = task.train.all_inputs();
            const LossBreakdown loss = total_loss(learner.model(), x, task.train.labels, config, rng);
            for (const auto& aux : loss.layers) {
                zero_after = zero_after && aux.gating_kl.item() == 0.0 && aux.weight_kl.item() == 0.0;
            }
        }

        // one gradient step on task 2
        const LabeledDataset& next = stream.tasks[1].train;
        std::vector<Tensor> params = learner.model().parameters();
        Adam adam(config.learning_rate);
        Tape tape;
        {
            Tape::Scope scope(tape);
            const LossBreakdown loss = total_loss(learner.model(), next.all_inputs(), next.labels, config, rng);
            tape.backward(loss.total);
        }
        adam.step(params);
        const LossBreakdown after = total_loss(learner.model(), next.all_inputs(), next.labels, config, rng);
        bool positive_after = true;
        for (const auto& aux : after.layers) {
            positive_after = positive_after && aux.gating_kl.item() > 0.0 && aux.weight_kl.item() > 0.0;
        }
        return CheckResult{name, zero_after && positive_after,
                           std::string("KL exactly zero after snapshot: ") + (zero_after ? "yes" : "no") +
                               "; positive after one step: " + (positive_after ? "yes" : "no")};
    });
}

CheckResult check_entropy_bounds(const SelftestHooks& hooks, std::uint64_t seed) {
    const std::string name = "entropy_bounds";
    return guarded(name, [&] {
        Rng rng(seed);
        constexpr double slack = 1e-12;
        std::size_t violations = 0;
        double oracle_gap = 0.0;
        for (int batch = 0; batch < 1000; ++batch) {
            const std::size_t n = 1 + rng.below(64);
            const std::size_t m = 2 + rng.below(7);
            const double temperature = rng.uniform(0.05, 5.0);
            std::vector<double> logits(n * m);
            for (double& v : logits) {
                v = rng.normal() / temperature;
            }
            const Tensor probs = ops::softmax(Tensor({n, m}, logits));
            const EntropyResult r = hooks.entropy(probs);
            const double h_c = r.report.conditional;
            const double h_m = r.report.marginal;
            if (h_c < -slack || h_c > h_m + slack || h_m > std::log(static_cast<double>(m)) + slack) {
                ++violations;
            }
            std::vector<std::vector<double>> rows(n, std::vector<double>(m));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < m; ++k) {
                    rows[i][k] = probs.at(i, k);
                }
            }
            const auto ref = oracle::batch_entropies(rows);
            oracle_gap = std::max({oracle_gap, std::abs(ref.conditional - h_c), std::abs(ref.marginal - h_m),
                                   std::abs(r.cost.item() - (h_c - h_m))});
        }

        // Hand-enumerated cases with M = 4.
        const double ln4 = std::log(4.0);
        const Tensor uniform = Tensor::filled({4, 4}, 0.25);
        const Tensor distinct({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
        const Tensor same({4, 4}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
        const EntropyResult u = hooks.entropy(uniform);
        const EntropyResult d = hooks.entropy(distinct);
        const EntropyResult s = hooks.entropy(same);
        const bool hand = std::abs(u.report.conditional - ln4) <= slack && std::abs(u.report.marginal - ln4) <= slack &&
                          std::abs(u.cost.item()) <= slack && std::abs(d.report.conditional) <= slack &&
                          std::abs(d.report.marginal - ln4) <= slack && std::abs(d.cost.item() + ln4) <= slack &&
                          std::abs(s.report.conditional) <= slack && std::abs(s.report.marginal) <= slack &&
                          std::abs(s.cost.item()) <= slack;
        const bool ok = violations == 0 && oracle_gap <= 1e-12 && hand;
        return CheckResult{name, ok,
                           std::to_string(violations) + " bound violations in 1000 batches, oracle gap " +
                               fmt(oracle_gap) + ", hand cases " + (hand ? "exact" : "wrong")};
    });
}

std::vector<CheckResult> run_selftest(const SelftestHooks& hooks, std::uint64_t seed) {
    return {
        check_kl_monte_carlo(hooks, seed),
        check_w2_quadrature(hooks, seed + 1),
        check_kernel_psd(seed + 2),
        check_logdet_gradient(seed + 3),
        check_end_to_end_gradient(seed + 4),
        check_sparsity(seed + 5),
        check_snapshot_recursion(seed + 6),
        check_entropy_bounds(hooks, seed + 7),
    };
}

} // namespace hvcl
