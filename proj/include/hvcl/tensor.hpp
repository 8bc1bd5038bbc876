#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hvcl {

using Shape = std::vector<std::size_t>;

class Tape;

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until a gradient is accumulated
    bool requires_grad = false;
    Tape* tape = nullptr;     // record this node was produced on, if any
    std::size_t node_id = 0;  // position in that record
};

/// Dense row-major tensor of 64-bit reals (rank 0, 1 or 2) with reverse-mode
/// gradient support.
///
/// Copies are shallow: two Tensor values may refer to the same node. Use clone()
/// for a deep copy.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor scalar(double value);
    /// Leaf that receives gradients.
    static Tensor parameter(Shape shape, std::vector<double> data);

    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
    [[nodiscard]] std::size_t size() const { return node_->data.size(); }
    /// Leading extent of a rank-2 tensor; 1 for lower ranks.
    [[nodiscard]] std::size_t rows() const;
    /// Trailing extent; 1 for scalars.
    [[nodiscard]] std::size_t cols() const;

    [[nodiscard]] std::span<const double> values() const { return node_->data; }
    [[nodiscard]] std::span<double> values_mut() { return node_->data; }
    [[nodiscard]] double item() const;
    [[nodiscard]] double at(std::size_t i) const { return node_->data[i]; }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
    /// Accumulated gradient; empty span when none has been accumulated.
    [[nodiscard]] std::span<const double> grad() const { return node_->grad; }
    /// Gradient buffer, allocated as zeros on first access.
    std::span<double> grad_mut() const;
    void zero_grad();

    /// Deep copy of the values that is cut off from any gradient tracking.
    [[nodiscard]] Tensor detach() const;
    /// Deep copy of the values that keeps the requires_grad flag (not the gradient).
    [[nodiscard]] Tensor clone() const;

    [[nodiscard]] bool same_node(const Tensor& other) const { return node_ == other.node_; }
    [[nodiscard]] std::size_t node_id() const { return node_->node_id; }
    [[nodiscard]] const std::shared_ptr<TensorNode>& node() const { return node_; }

    [[nodiscard]] bool all_finite() const;
    [[nodiscard]] std::string shape_string() const;

private:
    std::shared_ptr<TensorNode> node_;
};

/// Ordered record of primitive operations for one backward pass.
///
/// Each model instance owns one record and clears it every optimization step.
/// Operations record themselves on the record made current by a Scope on the
/// calling thread; with no current record nothing is recorded.
class Tape {
public:
    using Rule = std::function<void()>;

    /// Makes a record current on this thread for the lifetime of the scope.
    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] static Tape* current();

    void record(const Tensor& out, Rule rule);
    /// Seeds d(loss)/d(loss) = 1 and runs every backward rule once in reverse order.
    void backward(const Tensor& loss);
    void clear();
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

private:
    struct Entry {
        std::shared_ptr<TensorNode> out;
        Rule rule;
    };
    std::vector<Entry> entries_;
};

/// Convenience: runs backward on the record that produced `loss`.
void backward(const Tensor& loss);

namespace detail {

/// True when a record is current and any input takes part in differentiation.
bool tracking(std::initializer_list<const Tensor*> inputs);
/// Registers `out` on the current record with the given backward rule.
void record(Tensor& out, Tape::Rule rule);

} // namespace detail

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise. Binary forms take equal shapes or a rank-0 scalar on either side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);

/// x[n x m] + b[m] added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Row i of x[n x m] multiplied by s[i] (s has n entries).
Tensor scale_rows(const Tensor& x, const Tensor& s);
/// mu + softplus(rho) * eps with eps held constant.
Tensor reparameterize(const Tensor& mu, const Tensor& rho, std::span<const double> eps);

Tensor softmax(const Tensor& a, std::size_t axis = 1);
Tensor log_softmax(const Tensor& a, std::size_t axis = 1);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reduction of a rank-2 tensor along `axis`; the result keeps rank 2 with extent 1 on that axis.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

/// Rows `index` of x, in the given order.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
/// Adjoint of gather_rows: row r of part p is added into row index[p][r] of a
/// zero-initialized result with `rows` rows. With a partition this is a plain scatter.
Tensor scatter_rows(std::span<const Tensor> parts,
                    std::span<const std::vector<std::size_t>> index,
                    std::size_t rows);
/// Column vector [n x 1] holding x[i, column[i]].
Tensor pick(const Tensor& x, std::span<const std::size_t> column);

} // namespace ops

/// Outcome of comparing reverse-mode gradients against central differences.
struct GradCheckReport {
    /// max |analytic - numeric| / max(max|analytic|, max|numeric|), taken per parameter
    /// tensor and maximized over tensors; 0 when both gradients vanish.
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t checked = 0;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

/// Central-difference check of d(loss)/d(params).
///
/// `loss_fn` must be deterministic (re-seed any sampling inside it). It is
/// evaluated once under a fresh record for the analytic gradient and twice per
/// parameter entry without a record. Parameter values are restored on return.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss_fn,
                                  std::span<Tensor> params,
                                  double eps = 1e-5);

} // namespace hvcl
