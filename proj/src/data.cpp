#include "hvcl/data.hpp"

#include "hvcl/error.hpp"
#include "hvcl/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <numbers>
#include <set>

namespace hvcl {

namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError(DataError::Kind::missing_file, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> bytes{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                    static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes.data(), 4);
}

void require_size(const std::vector<unsigned char>& bytes, std::size_t expected, const fs::path& path) {
    if (bytes.size() < expected) {
        throw DataError(DataError::Kind::truncated, path.string() + " is truncated: expected " +
                                                        std::to_string(expected) + " bytes, found " +
                                                        std::to_string(bytes.size()));
    }
}

} // namespace

Tensor LabeledDataset::batch(std::span<const std::size_t> index) const {
    std::vector<double> data(index.size() * dim);
    for (std::size_t r = 0; r < index.size(); ++r) {
        auto src = row(index[r]);
        std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    return Tensor(Shape{index.size(), dim}, std::move(data));
}

Tensor LabeledDataset::all_inputs() const { return Tensor(Shape{rows, dim}, inputs); }

void LabeledDataset::validate() const {
    if (inputs.size() != rows * dim || labels.size() != rows) {
        throw DataError(DataError::Kind::count_mismatch, "dataset arrays disagree with its row count");
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw DataError(DataError::Kind::invalid_content, "label " + std::to_string(label) +
                                                                  " outside the class universe");
        }
    }
}

std::string_view to_string(Scenario scenario) {
    switch (scenario) {
    case Scenario::split: return "split";
    case Scenario::permuted: return "permuted";
    case Scenario::synthetic: return "synthetic";
    }
    return "split";
}

Scenario scenario_from_string(std::string_view text) {
    if (text == "split") return Scenario::split;
    if (text == "permuted") return Scenario::permuted;
    if (text == "synthetic") return Scenario::synthetic;
    throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

LabeledDataset parse_idx(const fs::path& image_file, const fs::path& label_file) {
    const auto images = read_file(image_file);
    const auto labels = read_file(label_file);

    require_size(images, 16, image_file);
    if (read_be32(images, 0) != kIdxImageMagic) {
        throw DataError(DataError::Kind::bad_magic, image_file.string() + ": bad magic number " +
                                                        std::to_string(read_be32(images, 0)));
    }
    require_size(labels, 8, label_file);
    if (read_be32(labels, 0) != kIdxLabelMagic) {
        throw DataError(DataError::Kind::bad_magic, label_file.string() + ": bad magic number " +
                                                        std::to_string(read_be32(labels, 0)));
    }
    const std::size_t count = read_be32(images, 4);
    const std::size_t height = read_be32(images, 8);
    const std::size_t width = read_be32(images, 12);
    const std::size_t label_count = read_be32(labels, 4);
    if (count != label_count) {
        throw DataError(DataError::Kind::count_mismatch, "image count " + std::to_string(count) +
                                                             " differs from label count " +
                                                             std::to_string(label_count));
    }
    const std::size_t dim = height * width;
    require_size(images, 16 + count * dim, image_file);
    require_size(labels, 8 + count, label_file);

    LabeledDataset out;
    out.rows = count;
    out.dim = dim;
    out.classes = 10;
    out.inputs.resize(count * dim);
    for (std::size_t i = 0; i < count * dim; ++i) {
        out.inputs[i] = static_cast<double>(images[16 + i]) / 255.0;
    }
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.labels[i] = labels[8 + i];
        if (out.labels[i] > 9) {
            throw DataError(DataError::Kind::invalid_content,
                            label_file.string() + ": label " + std::to_string(out.labels[i]) + " outside 0-9");
        }
    }
    return out;
}

void write_idx(const LabeledDataset& data, const fs::path& image_file, const fs::path& label_file) {
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(data.dim))));
    if (side * side != data.dim) {
        throw DataError(DataError::Kind::invalid_content, "write_idx: images must be square");
    }
    std::ofstream img(image_file, std::ios::binary);
    std::ofstream lab(label_file, std::ios::binary);
    if (!img || !lab) {
        throw DataError(DataError::Kind::missing_file, "cannot write IDX files");
    }
    write_be32(img, kIdxImageMagic);
    write_be32(img, static_cast<std::uint32_t>(data.rows));
    write_be32(img, static_cast<std::uint32_t>(side));
    write_be32(img, static_cast<std::uint32_t>(side));
    for (double v : data.inputs) {
        const long byte = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        img.put(static_cast<char>(static_cast<unsigned char>(byte)));
    }
    write_be32(lab, kIdxLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(data.rows));
    for (int label : data.labels) {
        lab.put(static_cast<char>(static_cast<unsigned char>(label)));
    }
}

DatasetSplits load_mnist(const fs::path& directory) {
    return {parse_idx(directory / "train-images-idx3-ubyte", directory / "train-labels-idx1-ubyte"),
            parse_idx(directory / "t10k-images-idx3-ubyte", directory / "t10k-labels-idx1-ubyte")};
}

std::vector<ClassPair> default_split_pairs() { return {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}}; }

namespace {

LabeledDataset select_pair(const LabeledDataset& data, const ClassPair& pair) {
    LabeledDataset out;
    out.dim = data.dim;
    out.classes = 2;
    for (std::size_t i = 0; i < data.rows; ++i) {
        const int label = data.labels[i];
        if (label != pair.first && label != pair.second) {
            continue;
        }
        auto src = data.row(i);
        out.inputs.insert(out.inputs.end(), src.begin(), src.end());
        out.labels.push_back(label == pair.first ? 0 : 1);
        ++out.rows;
    }
    return out;
}

} // namespace

TaskStream make_split_tasks(const DatasetSplits& data, const std::vector<ClassPair>& pairs) {
    std::set<int> seen;
    for (const auto& [a, b] : pairs) {
        if (a == b || !seen.insert(a).second || !seen.insert(b).second) {
            throw ConfigError("split pairs must be disjoint");
        }
    }
    TaskStream stream;
    stream.scenario = Scenario::split;
    stream.input_dim = data.train.dim;
    stream.num_classes = 2;
    for (const auto& pair : pairs) {
        Task task{select_pair(data.train, pair), select_pair(data.test, pair),
                  std::to_string(pair.first) + "-vs-" + std::to_string(pair.second)};
        for (const LabeledDataset* part : {&task.train, &task.test}) {
            const auto second = std::count(part->labels.begin(), part->labels.end(), 1);
            if (second == 0 || static_cast<std::size_t>(second) == part->rows) {
                throw DataError(DataError::Kind::invalid_content,
                                "class pair " + task.descriptor + " is missing a class in one of the splits");
            }
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

std::vector<std::vector<std::size_t>> make_permutations(std::size_t dim, std::size_t n_tasks, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> perms;
    perms.reserve(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
        if (t == 0) {
            std::vector<std::size_t> identity(dim);
            std::iota(identity.begin(), identity.end(), std::size_t{0});
            perms.push_back(std::move(identity));
        } else {
            perms.push_back(rng.permutation(dim));
        }
    }
    return perms;
}

LabeledDataset permute_pixels(const LabeledDataset& data, std::span<const std::size_t> perm) {
    if (perm.size() != data.dim) {
        throw DimensionError("permute_pixels: permutation length differs from input dimension");
    }
    LabeledDataset out = data;
    for (std::size_t i = 0; i < data.rows; ++i) {
        auto src = data.row(i);
        for (std::size_t j = 0; j < data.dim; ++j) {
            out.inputs[i * data.dim + j] = src[perm[j]];
        }
    }
    return out;
}

TaskStream make_permuted_tasks(const DatasetSplits& data, std::size_t n_tasks, std::uint64_t seed) {
    if (n_tasks == 0) {
        throw ConfigError("permuted stream needs at least one task");
    }
    TaskStream stream;
    stream.scenario = Scenario::permuted;
    stream.input_dim = data.train.dim;
    stream.num_classes = data.train.classes;
    const auto perms = make_permutations(data.train.dim, n_tasks, seed);
    for (std::size_t t = 0; t < n_tasks; ++t) {
        stream.tasks.push_back({permute_pixels(data.train, perms[t]), permute_pixels(data.test, perms[t]),
                                "permutation-" + std::to_string(t)});
    }
    return stream;
}

TaskStream make_synthetic_stream(std::size_t n_tasks, std::size_t n_per_task, double separation, std::uint64_t seed) {
    if (!(separation > 0.0)) {
        throw ConfigError("synthetic separation must be positive");
    }
    if (n_tasks == 0 || n_per_task < 2) {
        throw ConfigError("synthetic stream needs at least one task and two rows per task");
    }
    Rng rng(seed);
    TaskStream stream;
    stream.scenario = Scenario::synthetic;
    stream.input_dim = 2;
    stream.num_classes = 2;
    const double radius = 2.0 * separation;

    auto sample = [&](double cx, double cy, double tx, double ty) {
        LabeledDataset d;
        d.dim = 2;
        d.classes = 2;
        d.rows = n_per_task;
        for (std::size_t i = 0; i < n_per_task; ++i) {
            const int label = i % 2 == 0 ? 0 : 1;
            const double side = label == 0 ? -0.5 : 0.5;
            d.inputs.push_back(cx + side * separation * tx + rng.normal());
            d.inputs.push_back(cy + side * separation * ty + rng.normal());
            d.labels.push_back(label);
        }
        return d;
    };

    for (std::size_t t = 0; t < n_tasks; ++t) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(n_tasks);
        const double cx = radius * std::cos(angle);
        const double cy = radius * std::sin(angle);
        const double tx = -std::sin(angle);
        const double ty = std::cos(angle);
        LabeledDataset train = sample(cx, cy, tx, ty);
        LabeledDataset test = sample(cx, cy, tx, ty);
        stream.tasks.push_back({std::move(train), std::move(test), "blobs-" + std::to_string(t)});
    }
    return stream;
}

LabeledDataset take_rows(const LabeledDataset& data, std::size_t limit) {
    if (limit == 0 || limit >= data.rows) {
        return data;
    }
    LabeledDataset out;
    out.dim = data.dim;
    out.classes = data.classes;
    out.rows = limit;
    out.inputs.assign(data.inputs.begin(), data.inputs.begin() + static_cast<std::ptrdiff_t>(limit * data.dim));
    out.labels.assign(data.labels.begin(), data.labels.begin() + static_cast<std::ptrdiff_t>(limit));
    return out;
}

LabeledDataset concatenate(const std::vector<const LabeledDataset*>& parts) {
    LabeledDataset out;
    if (parts.empty()) {
        return out;
    }
    out.dim = parts.front()->dim;
    out.classes = parts.front()->classes;
    for (const LabeledDataset* p : parts) {
        if (p->dim != out.dim || p->classes != out.classes) {
            throw DimensionError("concatenate: datasets disagree in dimension or class count");
        }
        out.inputs.insert(out.inputs.end(), p->inputs.begin(), p->inputs.end());
        out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
        out.rows += p->rows;
    }
    return out;
}

} // namespace hvcl
