#include "hvcl/tensor.hpp"

#include "hvcl/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace hvcl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

thread_local Tape* current_tape = nullptr;

std::size_t product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
    return {data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
    return {data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + t.shape_string());
    }
}

double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

enum class Broadcast { equal, scalar_left, scalar_right };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) {
        return Broadcast::equal;
    }
    if (a.rank() == 0) {
        return Broadcast::scalar_left;
    }
    if (b.rank() == 0) {
        return Broadcast::scalar_right;
    }
    throw DimensionError(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() +
                         " are neither equal nor scalar-with-tensor");
}

// Shared driver for add/sub/mul. `fwd(x, y)` is the value; `dx`, `dy` are the
// partial derivatives at (x, y).
template <typename Fwd, typename Dx, typename Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dx dx, Dy dy) {
    const Broadcast kind = broadcast_kind(a, b, name);
    const Tensor& shaped = kind == Broadcast::scalar_left ? b : a;
    const std::size_t n = shaped.size();
    auto av = a.values();
    auto bv = b.values();
    auto ai = [&](std::size_t i) { return kind == Broadcast::scalar_left ? av[0] : av[i]; };
    auto bi = [&](std::size_t i) { return kind == Broadcast::scalar_right ? bv[0] : bv[i]; };

    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = fwd(ai(i), bi(i));
    }
    Tensor out(shaped.shape(), std::move(data));
    if (detail::tracking({&a, &b})) {
        detail::record(out, [a, b, out, kind, dx, dy]() mutable {
            auto g = out.grad();
            auto av = a.values();
            auto bv = b.values();
            const std::size_t n = g.size();
            auto ai = [&](std::size_t i) { return kind == Broadcast::scalar_left ? av[0] : av[i]; };
            auto bi = [&](std::size_t i) { return kind == Broadcast::scalar_right ? bv[0] : bv[i]; };
            if (a.requires_grad()) {
                auto ga = a.grad_mut();
                for (std::size_t i = 0; i < n; ++i) {
                    ga[kind == Broadcast::scalar_left ? 0 : i] += g[i] * dx(ai(i), bi(i));
                }
            }
            if (b.requires_grad()) {
                auto gb = b.grad_mut();
                for (std::size_t i = 0; i < n; ++i) {
                    gb[kind == Broadcast::scalar_right ? 0 : i] += g[i] * dy(ai(i), bi(i));
                }
            }
        });
    }
    return out;
}

// Shared driver for unary elementwise maps; `deriv(x, y)` receives input and output.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    auto av = a.values();
    std::vector<double> data(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        data[i] = fwd(av[i]);
    }
    Tensor out(a.shape(), std::move(data));
    if (detail::tracking({&a})) {
        detail::record(out, [a, out, deriv]() mutable {
            auto g = out.grad();
            auto x = a.values();
            auto y = out.values();
            auto ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * deriv(x[i], y[i]);
            }
        });
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<TensorNode>()) {
    if (shape.size() > 2) {
        throw DimensionError("tensors are limited to rank 2");
    }
    if (product(shape) != data.size()) {
        std::ostringstream msg;
        msg << "data length " << data.size() << " does not match shape product " << product(shape);
        throw DimensionError(msg.str());
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::filled(Shape shape, double value) {
    const std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    Tensor t(std::move(shape), std::move(data));
    t.set_requires_grad(true);
    return t;
}

std::size_t Tensor::rows() const { return rank() == 2 ? node_->shape[0] : 1; }

std::size_t Tensor::cols() const { return rank() == 0 ? 1 : node_->shape.back(); }

double Tensor::item() const {
    if (size() != 1) {
        throw DimensionError("item() on a tensor of shape " + shape_string());
    }
    return node_->data[0];
}

std::span<double> Tensor::grad_mut() const {
    if (node_->grad.empty()) {
        node_->grad.assign(node_->data.size(), 0.0);
    }
    return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

Tensor Tensor::clone() const {
    Tensor t(node_->shape, node_->data);
    t.set_requires_grad(node_->requires_grad);
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(node_->data.begin(), node_->data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < node_->shape.size(); ++i) {
        out << (i ? "x" : "") << node_->shape[i];
    }
    out << ']';
    return out.str();
}

// ---------------------------------------------------------------------------
// Tape

Tape::Scope::Scope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }

Tape::Scope::~Scope() { current_tape = previous_; }

Tape* Tape::current() { return current_tape; }

void Tape::record(const Tensor& out, Rule rule) {
    out.node()->tape = this;
    out.node()->node_id = entries_.size();
    entries_.push_back({out.node(), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1 || loss.rank() != 0) {
        throw DimensionError("backward requires a scalar loss, got " + loss.shape_string());
    }
    Tensor seed = loss;
    seed.grad_mut()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!it->out->grad.empty()) {
            it->rule();
        }
    }
}

void Tape::clear() {
    for (auto& entry : entries_) {
        entry.out->tape = nullptr;
    }
    entries_.clear();
}

void backward(const Tensor& loss) {
    Tape* tape = loss.node()->tape;
    if (tape == nullptr) {
        if (loss.requires_grad()) {
            // A parameter used directly as the loss.
            Tensor seed = loss;
            if (loss.size() != 1 || loss.rank() != 0) {
                throw DimensionError("backward requires a scalar loss, got " + loss.shape_string());
            }
            seed.grad_mut()[0] += 1.0;
            return;
        }
        throw Error("backward: loss was not produced on a computation record");
    }
    tape->backward(loss);
}

namespace detail {

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (current_tape == nullptr) {
        return false;
    }
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void record(Tensor& out, Tape::Rule rule) {
    out.set_requires_grad(true);
    current_tape->record(out, std::move(rule));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner extents differ, " + a.shape_string() + " x " + b.shape_string());
    }
    const std::size_t n = a.rows();
    const std::size_t k = a.cols();
    const std::size_t m = b.cols();
    Tensor out = Tensor::zeros({n, m});
    as_matrix(out.values_mut(), n, m).noalias() = as_matrix(a.values(), n, k) * as_matrix(b.values(), k, m);
    if (detail::tracking({&a, &b})) {
        detail::record(out, [a, b, out, n, k, m]() mutable {
            auto g = as_matrix(out.grad(), n, m);
            if (a.requires_grad()) {
                as_matrix(a.grad_mut(), n, k).noalias() += g * as_matrix(b.values(), k, m).transpose();
            }
            if (b.requires_grad()) {
                as_matrix(b.grad_mut(), k, m).noalias() += as_matrix(a.values(), n, k).transpose() * g;
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
    Tensor out = unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    if (!out.all_finite()) {
        throw NumericError("exp: overflow");
    }
    return out;
}

Tensor log(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) {
            throw DomainError("log: non-positive argument " + std::to_string(v));
        }
    }
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
    return unary(a, softplus_value, [](double x, double) { return sigmoid(x); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank2(x, "add_bias");
    if (bias.rank() != 1 || bias.size() != x.cols()) {
        throw DimensionError("add_bias: bias " + bias.shape_string() + " does not match " + x.shape_string());
    }
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    std::vector<double> data(x.values().begin(), x.values().end());
    auto bv = bias.values();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            data[r * m + c] += bv[c];
        }
    }
    Tensor out(x.shape(), std::move(data));
    if (detail::tracking({&x, &bias})) {
        detail::record(out, [x, bias, out, n, m]() mutable {
            auto g = out.grad();
            if (x.requires_grad()) {
                auto gx = x.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += g[i];
                }
            }
            if (bias.requires_grad()) {
                auto gb = bias.grad_mut();
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < m; ++c) {
                        gb[c] += g[r * m + c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    require_rank2(x, "scale_rows");
    if (s.size() != x.rows()) {
        throw DimensionError("scale_rows: " + s.shape_string() + " does not match rows of " + x.shape_string());
    }
    const std::size_t n = x.rows();
    const std::size_t m = x.cols();
    std::vector<double> data(n * m);
    auto xv = x.values();
    auto sv = s.values();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m; ++c) {
            data[r * m + c] = xv[r * m + c] * sv[r];
        }
    }
    Tensor out(x.shape(), std::move(data));
    if (detail::tracking({&x, &s})) {
        detail::record(out, [x, s, out, n, m]() mutable {
            auto g = out.grad();
            if (x.requires_grad()) {
                auto gx = x.grad_mut();
                auto sv = s.values();
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < m; ++c) {
                        gx[r * m + c] += g[r * m + c] * sv[r];
                    }
                }
            }
            if (s.requires_grad()) {
                auto gs = s.grad_mut();
                auto xv = x.values();
                for (std::size_t r = 0; r < n; ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < m; ++c) {
                        acc += g[r * m + c] * xv[r * m + c];
                    }
                    gs[r] += acc;
                }
            }
        });
    }
    return out;
}

Tensor reparameterize(const Tensor& mu, const Tensor& rho, std::span<const double> eps) {
    if (mu.shape() != rho.shape() || eps.size() != mu.size()) {
        throw DimensionError("reparameterize: mu " + mu.shape_string() + ", rho " + rho.shape_string() +
                             " and noise of length " + std::to_string(eps.size()) + " disagree");
    }
    const std::size_t n = mu.size();
    auto mv = mu.values();
    auto rv = rho.values();
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        data[i] = mv[i] + softplus_value(rv[i]) * eps[i];
    }
    Tensor out(mu.shape(), std::move(data));
    if (detail::tracking({&mu, &rho})) {
        std::vector<double> noise(eps.begin(), eps.end());
        detail::record(out, [mu, rho, out, noise = std::move(noise)]() mutable {
            auto g = out.grad();
            if (mu.requires_grad()) {
                auto gm = mu.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gm[i] += g[i];
                }
            }
            if (rho.requires_grad()) {
                auto gr = rho.grad_mut();
                auto rv = rho.values();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gr[i] += g[i] * noise[i] * sigmoid(rv[i]);
                }
            }
        });
    }
    return out;
}

namespace {

// Visits the lanes of a rank-2 tensor along `axis`: lane j has `len` entries at
// offset(j) + k * stride.
struct Lanes {
    std::size_t count;
    std::size_t len;
    std::size_t stride;
    std::size_t outer_step;
    std::size_t offset(std::size_t j) const { return j * outer_step; }
};

Lanes lanes_of(const Tensor& a, std::size_t axis, const char* op) {
    if (a.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected rank 2, got " + a.shape_string());
    }
    if (axis == 1) {
        return {a.rows(), a.cols(), 1, a.cols()};
    }
    if (axis == 0) {
        return {a.cols(), a.rows(), a.cols(), 1};
    }
    throw DimensionError(std::string(op) + ": invalid axis " + std::to_string(axis));
}

} // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
    const Lanes lanes = lanes_of(a, axis, "softmax");
    if (!a.all_finite()) {
        throw NumericError("softmax: non-finite input");
    }
    auto av = a.values();
    std::vector<double> data(a.size());
    for (std::size_t j = 0; j < lanes.count; ++j) {
        const std::size_t base = lanes.offset(j);
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lanes.len; ++k) {
            peak = std::max(peak, av[base + k * lanes.stride]);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < lanes.len; ++k) {
            const std::size_t i = base + k * lanes.stride;
            data[i] = std::exp(av[i] - peak);
            total += data[i];
        }
        for (std::size_t k = 0; k < lanes.len; ++k) {
            data[base + k * lanes.stride] /= total;
        }
    }
    Tensor out(a.shape(), std::move(data));
    if (detail::tracking({&a})) {
        detail::record(out, [a, out, lanes]() mutable {
            auto g = out.grad();
            auto y = out.values();
            auto ga = a.grad_mut();
            for (std::size_t j = 0; j < lanes.count; ++j) {
                const std::size_t base = lanes.offset(j);
                double dot = 0.0;
                for (std::size_t k = 0; k < lanes.len; ++k) {
                    const std::size_t i = base + k * lanes.stride;
                    dot += g[i] * y[i];
                }
                for (std::size_t k = 0; k < lanes.len; ++k) {
                    const std::size_t i = base + k * lanes.stride;
                    ga[i] += y[i] * (g[i] - dot);
                }
            }
        });
    }
    return out;
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
    const Lanes lanes = lanes_of(a, axis, "log_softmax");
    if (!a.all_finite()) {
        throw NumericError("log_softmax: non-finite input");
    }
    auto av = a.values();
    std::vector<double> data(a.size());
    for (std::size_t j = 0; j < lanes.count; ++j) {
        const std::size_t base = lanes.offset(j);
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lanes.len; ++k) {
            peak = std::max(peak, av[base + k * lanes.stride]);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < lanes.len; ++k) {
            total += std::exp(av[base + k * lanes.stride] - peak);
        }
        const double log_norm = peak + std::log(total);
        for (std::size_t k = 0; k < lanes.len; ++k) {
            const std::size_t i = base + k * lanes.stride;
            data[i] = av[i] - log_norm;
        }
    }
    Tensor out(a.shape(), std::move(data));
    if (detail::tracking({&a})) {
        detail::record(out, [a, out, lanes]() mutable {
            auto g = out.grad();
            auto y = out.values();
            auto ga = a.grad_mut();
            for (std::size_t j = 0; j < lanes.count; ++j) {
                const std::size_t base = lanes.offset(j);
                double total = 0.0;
                for (std::size_t k = 0; k < lanes.len; ++k) {
                    total += g[base + k * lanes.stride];
                }
                for (std::size_t k = 0; k < lanes.len; ++k) {
                    const std::size_t i = base + k * lanes.stride;
                    ga[i] += g[i] - std::exp(y[i]) * total;
                }
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& a) {
    auto av = a.values();
    Tensor out = Tensor::scalar(std::accumulate(av.begin(), av.end(), 0.0));
    if (detail::tracking({&a})) {
        detail::record(out, [a, out]() mutable {
            const double g = out.grad()[0];
            for (double& v : a.grad_mut()) {
                v += g;
            }
        });
    }
    return out;
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) {
        throw DimensionError("mean of an empty tensor");
    }
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
    const Lanes lanes = lanes_of(a, axis, "sum");
    auto av = a.values();
    std::vector<double> data(lanes.count, 0.0);
    for (std::size_t j = 0; j < lanes.count; ++j) {
        for (std::size_t k = 0; k < lanes.len; ++k) {
            data[j] += av[lanes.offset(j) + k * lanes.stride];
        }
    }
    Shape shape = axis == 1 ? Shape{a.rows(), 1} : Shape{1, a.cols()};
    Tensor out(std::move(shape), std::move(data));
    if (detail::tracking({&a})) {
        detail::record(out, [a, out, lanes]() mutable {
            auto g = out.grad();
            auto ga = a.grad_mut();
            for (std::size_t j = 0; j < lanes.count; ++j) {
                for (std::size_t k = 0; k < lanes.len; ++k) {
                    ga[lanes.offset(j) + k * lanes.stride] += g[j];
                }
            }
        });
    }
    return out;
}

Tensor mean(const Tensor& a, std::size_t axis) {
    const Lanes lanes = lanes_of(a, axis, "mean");
    if (lanes.len == 0) {
        throw DimensionError("mean along an empty axis");
    }
    return scale(sum(a, axis), 1.0 / static_cast<double>(lanes.len));
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
    require_rank2(x, "gather_rows");
    const std::size_t m = x.cols();
    auto xv = x.values();
    std::vector<double> data(index.size() * m);
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= x.rows()) {
            throw DimensionError("gather_rows: row index out of range");
        }
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(index[r] * m), m,
                    data.begin() + static_cast<std::ptrdiff_t>(r * m));
    }
    Tensor out(Shape{index.size(), m}, std::move(data));
    if (detail::tracking({&x})) {
        std::vector<std::size_t> rows(index.begin(), index.end());
        detail::record(out, [x, out, m, rows = std::move(rows)]() mutable {
            auto g = out.grad();
            auto gx = x.grad_mut();
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t c = 0; c < m; ++c) {
                    gx[rows[r] * m + c] += g[r * m + c];
                }
            }
        });
    }
    return out;
}

Tensor scatter_rows(std::span<const Tensor> parts, std::span<const std::vector<std::size_t>> index,
                    std::size_t rows) {
    if (parts.size() != index.size() || parts.empty()) {
        throw DimensionError("scatter_rows: parts and index lists differ in length");
    }
    const std::size_t m = parts.front().cols();
    std::vector<double> data(rows * m, 0.0);
    bool track = false;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& part = parts[p];
        if (part.rank() != 2 || part.cols() != m || part.rows() != index[p].size()) {
            throw DimensionError("scatter_rows: part " + std::to_string(p) + " has shape " + part.shape_string());
        }
        auto pv = part.values();
        for (std::size_t r = 0; r < index[p].size(); ++r) {
            const std::size_t dst = index[p][r];
            if (dst >= rows) {
                throw DimensionError("scatter_rows: row index out of range");
            }
            for (std::size_t c = 0; c < m; ++c) {
                data[dst * m + c] += pv[r * m + c];
            }
        }
        track = track || detail::tracking({&part});
    }
    Tensor out(Shape{rows, m}, std::move(data));
    if (track) {
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        std::vector<std::vector<std::size_t>> where(index.begin(), index.end());
        detail::record(out, [inputs = std::move(inputs), where = std::move(where), out, m]() mutable {
            auto g = out.grad();
            for (std::size_t p = 0; p < inputs.size(); ++p) {
                if (!inputs[p].requires_grad()) {
                    continue;
                }
                auto gp = inputs[p].grad_mut();
                for (std::size_t r = 0; r < where[p].size(); ++r) {
                    for (std::size_t c = 0; c < m; ++c) {
                        gp[r * m + c] += g[where[p][r] * m + c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor pick(const Tensor& x, std::span<const std::size_t> column) {
    require_rank2(x, "pick");
    if (column.size() != x.rows()) {
        throw DimensionError("pick: need one column index per row");
    }
    const std::size_t m = x.cols();
    std::vector<double> data(column.size());
    for (std::size_t r = 0; r < column.size(); ++r) {
        if (column[r] >= m) {
            throw DimensionError("pick: column index out of range");
        }
        data[r] = x.values()[r * m + column[r]];
    }
    Tensor out(Shape{column.size(), 1}, std::move(data));
    if (detail::tracking({&x})) {
        std::vector<std::size_t> cols(column.begin(), column.end());
        detail::record(out, [x, out, m, cols = std::move(cols)]() mutable {
            auto g = out.grad();
            auto gx = x.grad_mut();
            for (std::size_t r = 0; r < cols.size(); ++r) {
                gx[r * m + cols[r]] += g[r];
            }
        });
    }
    return out;
}

} // namespace ops

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double eps) {
    GradCheckReport report;
    for (Tensor& p : params) {
        p.zero_grad();
    }
    {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
    }

    for (Tensor& p : params) {
        const std::size_t n = p.size();
        std::vector<double> analytic(n, 0.0);
        if (p.has_grad()) {
            std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
        }
        std::vector<double> numeric(n);
        auto values = p.values_mut();
        for (std::size_t i = 0; i < n; ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = loss_fn().item();
            values[i] = saved - eps;
            const double down = loss_fn().item();
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * eps);
        }
        double scale = 0.0;
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
            worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
        }
        report.max_abs_error = std::max(report.max_abs_error, worst);
        if (scale > 0.0) {
            report.max_relative_error = std::max(report.max_relative_error, worst / scale);
        }
        report.checked += n;
        report.analytic.insert(report.analytic.end(), analytic.begin(), analytic.end());
        report.numeric.insert(report.numeric.end(), numeric.begin(), numeric.end());
        p.zero_grad();
    }
    return report;
}

} // namespace hvcl
