#include "hvcl/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using hvcl::Rng;

TEST_SUITE("rng") {

TEST_CASE("same seed, same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.normal() == b.normal());
    }
    CHECK(Rng(42).next() != Rng(43).next());
}

TEST_CASE("normal draws have unit moments and a normal CDF") {
    Rng rng(7);
    const std::size_t n = 400000;
    std::vector<double> v(n);
    rng.fill_normal(v);
    double mean = 0.0, m2 = 0.0, m4 = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    for (double x : v) {
        m2 += (x - mean) * (x - mean);
        m4 += std::pow(x - mean, 4);
    }
    m2 /= n;
    m4 /= n;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(double(n)));
    CHECK(std::abs(m2 - 1.0) < 0.01);
    CHECK(std::abs(m4 / (m2 * m2) - 3.0) < 0.05);

    // Kolmogorov-Smirnov distance to the standard normal CDF.
    std::sort(v.begin(), v.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
        ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
    }
    CHECK(ks < 1.63 / std::sqrt(double(n))); // 1% critical value

    // The tail beyond the base layer is reached and matches its mass.
    const auto tail = std::count_if(v.begin(), v.end(), [](double x) { return std::abs(x) > 3.442619855899; });
    const double expected = n * std::erfc(3.442619855899 / std::sqrt(2.0));
    CHECK(std::abs(double(tail) - expected) < 5.0 * std::sqrt(expected));
}

TEST_CASE("uniform and below stay in range") {
    Rng rng(9);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const double u = rng.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        ++counts[rng.below(7)];
    }
    for (int c : counts) {
        CHECK(std::abs(c - 10000) < 500);
    }
}

TEST_CASE("permutation is a bijection") {
    Rng rng(3);
    auto p = rng.permutation(1000);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        CHECK(sorted[i] == i);
    }
    CHECK(p != sorted);
    CHECK(Rng(3).permutation(1000) == p);
}

TEST_CASE("split gives a distinct child stream") {
    Rng parent(5);
    Rng child = parent.split();
    CHECK(child.next() != parent.next());
}

}
