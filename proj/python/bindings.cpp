#include "hvcl/config.hpp"
#include "hvcl/diversity.hpp"
#include "hvcl/error.hpp"
#include "hvcl/runner.hpp"
#include "hvcl/selftest.hpp"
#include "hvcl/variational.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <sstream>

namespace py = pybind11;
using namespace hvcl;

namespace {

GaussianMeanField field(const std::vector<double>& mean, const std::vector<double>& stddev) {
    if (mean.size() != stddev.size()) {
        throw DimensionError("mean and stddev lengths differ");
    }
    std::vector<double> rho(stddev.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (!(stddev[i] > 0.0)) {
            throw DomainError("stddev entries must be positive");
        }
        rho[i] = softplus_inverse(stddev[i]);
    }
    const Shape shape{mean.size()};
    return {Tensor(shape, mean), Tensor(shape, std::move(rho))};
}

Tensor matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) {
        throw DimensionError("empty matrix");
    }
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) {
            throw DimensionError("ragged matrix");
        }
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), rows.front().size()}, std::move(flat));
}

RunConfig make_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
    RunConfig config = path ? load_config(*path) : RunConfig{};
    for (const auto& o : overrides) {
        apply_override(config, o);
    }
    config.validate();
    return config;
}

py::dict config_dict(const RunConfig& config) {
    py::dict out;
    for (const auto& [k, v] : config_entries(config)) {
        out[py::str(k)] = v;
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mixture-of-variational-experts continual learning";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());

    m.def("softplus", &softplus);
    m.def("softplus_inverse", &softplus_inverse);

    m.def(
        "kl_diag_gaussian",
        [](const std::vector<double>& mean_p, const std::vector<double>& std_p, const std::vector<double>& mean_q,
           const std::vector<double>& std_q) {
            return kl_diag_gaussian(field(mean_p, std_p), field(mean_q, std_q)).item();
        },
        py::arg("mean_p"), py::arg("std_p"), py::arg("mean_q"), py::arg("std_q"),
        "KL(p || q) in nats between diagonal Gaussians.");

    m.def(
        "w2_diag_gaussian",
        [](const std::vector<double>& mean_p, const std::vector<double>& std_p, const std::vector<double>& mean_q,
           const std::vector<double>& std_q) {
            if (mean_p.size() != std_p.size() || mean_q.size() != std_q.size() || mean_p.size() != mean_q.size()) {
                throw DimensionError("w2_diag_gaussian: length mismatch");
            }
            return w2_diag_gaussian(mean_p, std_p, mean_q, std_q);
        },
        py::arg("mean_p"), py::arg("std_p"), py::arg("mean_q"), py::arg("std_q"),
        "Squared 2-Wasserstein distance between diagonal Gaussians.");

    m.def("w2_exp_kernel", &w2_exp_kernel_from_distance, py::arg("w2_squared"), py::arg("width"));

    m.def(
        "entropy_cost",
        [](const std::vector<std::vector<double>>& probs, const std::string& sign) {
            const EntropyResult r = entropy_cost(matrix(probs), entropy_sign_from_string(sign));
            py::dict out;
            out["cost"] = r.cost.item();
            out["conditional"] = r.report.conditional;
            out["marginal"] = r.report.marginal;
            out["batch"] = r.report.batch;
            return out;
        },
        py::arg("probs"), py::arg("sign") = "conditional_minus_marginal");

    m.def(
        "neg_log_det",
        [](const std::vector<std::vector<double>>& a, double jitter) {
            const DppLoss r = neg_log_det(matrix(a), jitter);
            return py::make_tuple(r.value.item(), r.jitter, r.determinant);
        },
        py::arg("matrix"), py::arg("jitter") = 1e-6, "(-log det, jitter used, determinant)");

    m.def(
        "forgetting_metrics",
        [](const std::vector<std::vector<double>>& rows) {
            AccuracyMatrix a;
            a.rows = rows;
            const ForgettingMetrics f = forgetting_metrics(a);
            return py::make_tuple(f.acc, f.forgetting);
        },
        py::arg("rows"), "(ACC, forgetting) of a lower-triangular accuracy matrix.");

    m.def(
        "selftest",
        [](std::uint64_t seed) {
            py::list out;
            for (const CheckResult& c : run_selftest({}, seed)) {
                out.append(py::make_tuple(c.name, c.passed, c.detail));
            }
            return out;
        },
        py::arg("seed") = 20240601, "List of (name, passed, detail).");

    m.def(
        "load_config",
        [](const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
            return config_dict(make_config(path, overrides));
        },
        py::arg("path") = py::none(), py::arg("overrides") = std::vector<std::string>{});

    m.def(
        "run",
        [](const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides,
           bool verbose) {
            const RunConfig config = make_config(path, overrides);
            std::ostringstream sink;
            std::vector<SeedResult> results;
            {
                py::gil_scoped_release release;
                results = run_experiment(config, verbose ? std::cerr : sink);
            }
            py::list out;
            for (const SeedResult& r : results) {
                py::dict d;
                d["seed"] = r.seed;
                d["matrix"] = r.matrix.rows;
                d["acc"] = r.metrics.acc;
                d["forgetting"] = r.metrics.forgetting;
                d["directory"] = r.directory;
                out.append(d);
            }
            return out;
        },
        py::arg("config") = py::none(), py::arg("overrides") = std::vector<std::string>{},
        py::arg("verbose") = false, "Trains every configured seed and writes the run artifacts.");

    m.def(
        "evaluate",
        [](const std::filesystem::path& checkpoint, const std::optional<std::filesystem::path>& data_dir) {
            EvalResult r;
            {
                py::gil_scoped_release release;
                r = evaluate_checkpoint(checkpoint, data_dir);
            }
            py::dict d;
            d["row"] = r.row;
            d["saved_row"] = r.saved_row;
            d["matches"] = r.matches;
            return d;
        },
        py::arg("checkpoint"), py::arg("data_dir") = py::none());
}
