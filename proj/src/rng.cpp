#include "hvcl/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace hvcl {

namespace {

// Ziggurat tables (Marsaglia and Tsang; 128 layers, Doornik's ZIGNOR layout).
struct Ziggurat {
    static constexpr int layers = 128;
    static constexpr double r = 3.442619855899;
    static constexpr double v = 9.91256303526217e-3;
    double x[layers + 1];
    double ratio[layers];

    Ziggurat() {
        double f = std::exp(-0.5 * r * r);
        x[0] = v / f;
        x[1] = r;
        x[layers] = 0.0;
        for (int i = 2; i < layers; ++i) {
            x[i] = std::sqrt(-2.0 * std::log(v / x[i - 1] + f));
            f = std::exp(-0.5 * x[i] * x[i]);
        }
        for (int i = 0; i < layers; ++i) {
            ratio[i] = x[i + 1] / x[i];
        }
    }
};

const Ziggurat& ziggurat() {
    static const Ziggurat table;
    return table;
}

} // namespace

double Rng::normal() {
    const Ziggurat& z = ziggurat();
    for (;;) {
        const std::uint64_t bits = engine_();
        // top 53 bits give u in [-1, 1); the low 7 bits pick the layer
        const double u = 2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0;
        const auto i = static_cast<int>(bits & 0x7F);
        if (std::abs(u) < z.ratio[i]) {
            return u * z.x[i];
        }
        if (i == 0) {
            // tail beyond r
            double tx, ty;
            do {
                tx = std::log(1.0 - uniform()) / Ziggurat::r;
                ty = std::log(1.0 - uniform());
            } while (-2.0 * ty < tx * tx);
            return u > 0.0 ? Ziggurat::r - tx : tx - Ziggurat::r;
        }
        const double xs = u * z.x[i];
        const double f0 = std::exp(-0.5 * (z.x[i] * z.x[i] - xs * xs));
        const double f1 = std::exp(-0.5 * (z.x[i + 1] * z.x[i + 1] - xs * xs));
        if (f1 + uniform() * (f0 - f1) < 1.0) {
            return xs;
        }
    }
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection sampling on the largest multiple of n that fits in 64 bits.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t draw = engine_();
    while (draw >= limit) {
        draw = engine_();
    }
    return draw % n;
}

void Rng::fill_normal(std::span<double> out) {
    for (double& v : out) {
        v = normal();
    }
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

} // namespace hvcl
