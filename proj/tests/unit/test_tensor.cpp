#include "support.hpp"

#include "hvcl/error.hpp"
#include "hvcl/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hvcl;

namespace {

// Sum of out * w for a fixed random w, so every output entry gets a distinct gradient.
Tensor weighted_sum(const Tensor& out, std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = test::random_tensor(out.shape(), rng, 1.0, false);
    return ops::sum(ops::mul(out, w));
}

double check(const std::function<Tensor()>& f, std::vector<Tensor> params) {
    return finite_diff_check(f, params).max_relative_error;
}

} // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul hand values") {
    Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
    Tensor sq = ops::matmul(eye, eye);
    CHECK(std::vector<double>(sq.values().begin(), sq.values().end()) == std::vector<double>{1, 0, 0, 1});

    Tensor a(Shape{2, 2}, {1, 2, 3, 4});
    Tensor b(Shape{2, 1}, {1, 1});
    Tensor c = ops::matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 1});
    CHECK(c.at(0) == 3.0);
    CHECK(c.at(1) == 7.0);
}

TEST_CASE("matmul rejects mismatched extents") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(ops::matmul(a, b), DimensionError);
}

TEST_CASE("matmul gradient of sum(a b)") {
    Rng rng(3);
    Tensor a = test::random_tensor({4, 5}, rng);
    Tensor b = test::random_tensor({5, 3}, rng, 1.0, false);
    CHECK(check([&] { return ops::sum(ops::matmul(a, b)); }, {a}) <= 1e-6);
}

TEST_CASE("elementwise identities") {
    Rng rng(5);
    Tensor x = test::random_tensor({3, 4}, rng, 1.0, false);
    Tensor y = ops::add(x, Tensor::scalar(0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(y.at(i) == x.at(i));
    }

    CHECK(ops::leaky_relu(Tensor::scalar(-1.0), 0.01).item() == doctest::Approx(-0.01).epsilon(1e-15));
    CHECK(ops::leaky_relu(Tensor::scalar(2.5)).item() == 2.5);

    Tensor pos(Shape{4}, {1e-3, 0.5, 1.0, 42.0});
    Tensor back = ops::exp(ops::log(pos));
    for (std::size_t i = 0; i < pos.size(); ++i) {
        CHECK(std::abs(back.at(i) - pos.at(i)) <= 1e-12 * std::max(1.0, pos.at(i)));
    }
}

TEST_CASE("log of a non-positive value is a domain error") {
    CHECK_THROWS_AS(ops::log(Tensor(Shape{2}, {1.0, 0.0})), DomainError);
    CHECK_THROWS_AS(ops::log(Tensor::scalar(-1.0)), DomainError);
}

TEST_CASE("binary ops broadcast only scalars") {
    Tensor a = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(ops::add(a, Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(ops::mul(a, Tensor::zeros({3})), DimensionError);
    CHECK_NOTHROW(ops::mul(a, Tensor::scalar(2.0)));
    CHECK_NOTHROW(ops::sub(Tensor::scalar(2.0), a));
}

TEST_CASE("softmax values") {
    Tensor u = ops::softmax(Tensor(Shape{1, 3}, {0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(u.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    Tensor p = ops::softmax(Tensor(Shape{1, 2}, {std::numbers::ln2, 0.0}));
    CHECK(std::abs(p.at(0) - 2.0 / 3.0) <= 1e-15);
    CHECK(std::abs(p.at(1) - 1.0 / 3.0) <= 1e-15);
}

TEST_CASE("softmax rows sum to one and ignore a constant shift") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = test::random_tensor({6, 5}, rng, 20.0, false);
        const double c = rng.uniform(-300.0, 300.0);
        Tensor s = ops::softmax(a);
        Tensor shifted = ops::softmax(ops::add(a, Tensor::scalar(c)));
        for (std::size_t r = 0; r < 6; ++r) {
            double total = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                CHECK(s.at(r, k) >= 0.0);
                CHECK(std::abs(s.at(r, k) - shifted.at(r, k)) <= 1e-12);
                total += s.at(r, k);
            }
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax along axis 0") {
    Tensor s = ops::softmax(Tensor(Shape{2, 2}, {std::numbers::ln2, 0.0, 0.0, 0.0}), 0);
    CHECK(std::abs(s.at(0, 0) - 2.0 / 3.0) <= 1e-15);
    CHECK(std::abs(s.at(1, 0) - 1.0 / 3.0) <= 1e-15);
    CHECK(s.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("softmax rejects non-finite input") {
    CHECK_THROWS_AS(ops::softmax(Tensor(Shape{1, 2}, {NAN, 0.0})), NumericError);
}

TEST_CASE("reductions") {
    CHECK(ops::sum(Tensor(Shape{3}, {1, 2, 3})).item() == 6.0);
    CHECK(ops::mean(Tensor::filled({4, 3}, 2.5)).item() == doctest::Approx(2.5).epsilon(1e-15));

    Tensor x = Tensor::parameter({2, 5}, std::vector<double>(10, 1.0));
    {
        Tape tape;
        Tape::Scope scope(tape);
        tape.backward(ops::mean(x));
    }
    for (double g : x.grad()) {
        CHECK(g == doctest::Approx(0.1).epsilon(1e-15));
    }

    Tensor m(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor cols = ops::sum(m, 0);
    CHECK(cols.shape() == Shape{1, 3});
    CHECK(cols.at(2) == 9.0);
    Tensor rows = ops::mean(m, 1);
    CHECK(rows.shape() == Shape{2, 1});
    CHECK(rows.at(1) == doctest::Approx(5.0));
    CHECK_THROWS_AS(ops::sum(m, 2), DimensionError);
    CHECK_THROWS_AS(ops::softmax(m, 3), DimensionError);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::parameter({}, {3.0});
    backward(x);
    REQUIRE(x.has_grad());
    CHECK(x.grad()[0] == 1.0);

    Tensor y = Tensor::parameter({}, {3.0});
    Tensor unused = Tensor::parameter({}, {1.0});
    {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = ops::mul(y, y);
        tape.backward(loss);
    }
    CHECK(y.grad()[0] == 6.0);
    CHECK_FALSE(unused.has_grad());
}

TEST_CASE("backward requires a scalar loss") {
    Tensor x = Tensor::parameter({2}, {1.0, 2.0});
    Tape tape;
    Tape::Scope scope(tape);
    Tensor y = ops::scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), DimensionError);
}

TEST_CASE("no record means no tracking") {
    Tensor x = Tensor::parameter({}, {2.0});
    Tensor y = ops::mul(x, x);
    CHECK_THROWS_AS(backward(y), Error);
}

TEST_CASE("finite_diff_check on known functions") {
    Rng rng(17);
    Tensor x = test::random_tensor({3, 3}, rng);
    const auto quad = finite_diff_check([&] { return ops::sum(ops::mul(x, x)); }, std::span(&x, 1), 1e-5);
    CHECK(quad.max_relative_error <= 1e-8);
    CHECK(quad.checked == 9);

    const auto flat = finite_diff_check([&] { return Tensor::scalar(4.0); }, std::span(&x, 1));
    CHECK(flat.max_abs_error == 0.0);
    for (double g : flat.analytic) {
        CHECK(g == 0.0);
    }
    for (double g : flat.numeric) {
        CHECK(g == 0.0);
    }

    // Frozen noise: the same draws on every evaluation.
    Tensor mu = test::random_tensor({2, 3}, rng);
    Tensor rho = test::random_tensor({2, 3}, rng);
    auto noisy = [&] {
        Rng local(99);
        std::vector<double> eps(6);
        local.fill_normal(eps);
        return ops::sum(ops::mul(ops::reparameterize(mu, rho, eps), ops::reparameterize(mu, rho, eps)));
    };
    std::vector<Tensor> ps{mu, rho};
    const auto first = finite_diff_check(noisy, ps);
    const auto second = finite_diff_check(noisy, ps);
    CHECK(first.max_relative_error <= 1e-6);
    CHECK(first.analytic == second.analytic);
    CHECK(first.numeric == second.numeric);
}

TEST_CASE("primitive gradients match central differences") {
    Rng rng(23);
    Tensor a = test::random_tensor({3, 4}, rng);
    Tensor b = test::random_tensor({3, 4}, rng);
    Tensor pos = Tensor::parameter({3, 4}, [&] {
        std::vector<double> v(12);
        for (auto& x : v) x = rng.uniform(0.5, 2.0);
        return v;
    }());
    Tensor bias = test::random_tensor({4}, rng);
    Tensor s = test::random_tensor({3}, rng);
    Tensor sc = Tensor::parameter({}, {0.7});
    // Keep leaky_relu inputs away from the kink.
    Tensor kinked = Tensor::parameter({3, 4}, [&] {
        std::vector<double> v(12);
        for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 2.0);
        return v;
    }());
    std::vector<double> eps(12);
    rng.fill_normal(eps);
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    const std::vector<std::size_t> cols{3, 0, 2};

    const double tol = 1e-6;
    CHECK(check([&] { return weighted_sum(ops::add(a, b), 1); }, {a, b}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::sub(a, b), 2); }, {a, b}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::mul(a, b), 3); }, {a, b}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::mul(a, sc), 4); }, {a, sc}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::scale(a, -1.7), 5); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::exp(a), 6); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::log(pos), 7); }, {pos}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::softplus(a), 8); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::leaky_relu(kinked), 9); }, {kinked}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::add_bias(a, bias), 10); }, {a, bias}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::scale_rows(a, s), 11); }, {a, s}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::reparameterize(a, b, eps), 12); }, {a, b}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::softmax(a), 13); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::softmax(a, 0), 14); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::log_softmax(a), 15); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::sum(a, 0), 16); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::mean(a, 1), 17); }, {a}) <= tol);
    CHECK(check([&] { return ops::mean(ops::mul(a, b)); }, {a, b}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::gather_rows(a, idx), 18); }, {a}) <= tol);
    CHECK(check([&] { return weighted_sum(ops::pick(a, cols), 19); }, {a}) <= tol);
    CHECK(check(
              [&] {
                  std::vector<Tensor> parts{ops::gather_rows(a, std::vector<std::size_t>{0, 2}),
                                            ops::gather_rows(b, std::vector<std::size_t>{1})};
                  std::vector<std::vector<std::size_t>> where{{2, 0}, {1}};
                  return weighted_sum(ops::scatter_rows(parts, where, 3), 20);
              },
              {a, b}) <= tol);
}

TEST_CASE("gather and scatter are adjoint on a partition") {
    Tensor x(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
    std::vector<std::size_t> first{2, 0};
    std::vector<std::size_t> second{1};
    std::vector<Tensor> parts{ops::gather_rows(x, first), ops::gather_rows(x, second)};
    std::vector<std::vector<std::size_t>> where{first, second};
    Tensor back = ops::scatter_rows(parts, where, 3);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(back.at(i) == x.at(i));
    }
}

TEST_CASE("backward is bit-reproducible") {
    auto run = [] {
        Rng rng(31);
        Tensor w = test::random_tensor({5, 4}, rng);
        Tensor x = test::random_tensor({8, 5}, rng, 1.0, false);
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = ops::mean(ops::log_softmax(ops::leaky_relu(ops::matmul(x, w))));
        tape.backward(loss);
        return std::vector<double>(w.grad().begin(), w.grad().end());
    };
    CHECK(run() == run());
}

TEST_CASE("clone and detach copy storage") {
    Tensor p = Tensor::parameter({2}, {1.0, 2.0});
    Tensor c = p.clone();
    Tensor d = p.detach();
    p.values_mut()[0] = 9.0;
    CHECK(c.at(0) == 1.0);
    CHECK(d.at(0) == 1.0);
    CHECK(c.requires_grad());
    CHECK_FALSE(d.requires_grad());
    CHECK_FALSE(c.same_node(p));
}

}
