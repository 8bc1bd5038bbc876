#pragma once

#include "hvcl/rng.hpp"
#include "hvcl/tensor.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace test {

inline hvcl::Tensor random_tensor(hvcl::Shape shape, hvcl::Rng& rng, double scale = 1.0, bool param = true) {
    std::size_t n = 1;
    for (auto s : shape) {
        n *= s;
    }
    std::vector<double> v(n);
    for (auto& x : v) {
        x = scale * rng.normal();
    }
    return param ? hvcl::Tensor::parameter(std::move(shape), std::move(v)) : hvcl::Tensor(std::move(shape), std::move(v));
}

// Directory with the MNIST IDX files; HVCL_MNIST_DIR overrides the configured default.
inline std::filesystem::path mnist_dir() {
    if (const char* env = std::getenv("HVCL_MNIST_DIR")) {
        return env;
    }
    return HVCL_TEST_MNIST_DIR;
}

inline bool have_mnist() { return std::filesystem::exists(mnist_dir() / "train-images-idx3-ubyte"); }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hvcl_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace test
