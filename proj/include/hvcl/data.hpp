#pragma once

#include "hvcl/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hvcl {

/// n x d inputs (row-major, pixels in [0, 1]) with integer labels in [0, classes).
struct LabeledDataset {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::size_t classes = 0;
    std::vector<double> inputs;
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const { return rows; }
    [[nodiscard]] bool empty() const { return rows == 0; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const {
        return std::span<const double>(inputs).subspan(i * dim, dim);
    }
    /// Rows `index` as an [|index| x d] tensor.
    [[nodiscard]] Tensor batch(std::span<const std::size_t> index) const;
    [[nodiscard]] Tensor all_inputs() const;
    /// Throws DataError when sizes or labels are inconsistent.
    void validate() const;
};

/// Standard train/test partition of a dataset.
struct DatasetSplits {
    LabeledDataset train;
    LabeledDataset test;
};

enum class Scenario { split, permuted, synthetic };

std::string_view to_string(Scenario scenario);
Scenario scenario_from_string(std::string_view text);

/// One task of a continual stream. The descriptor is for logs only and never
/// reaches the model.
struct Task {
    LabeledDataset train;
    LabeledDataset test;
    std::string descriptor;
};

struct TaskStream {
    Scenario scenario = Scenario::split;
    std::vector<Task> tasks;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0; // width of the shared output head

    [[nodiscard]] std::size_t size() const { return tasks.size(); }
};

// ---------------------------------------------------------------------------
// IDX files (big-endian magic 0x00000803 images / 0x00000801 labels)

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an image/label file pair; pixels are scaled by 1/255.
LabeledDataset parse_idx(const std::filesystem::path& image_file, const std::filesystem::path& label_file);

/// Writes the dataset back as IDX (pixels rounded to the nearest k/255); square images only.
void write_idx(const LabeledDataset& data, const std::filesystem::path& image_file,
               const std::filesystem::path& label_file);

/// Loads train-*/t10k-* IDX files from a directory (plain names, as distributed after gunzip).
DatasetSplits load_mnist(const std::filesystem::path& directory);

// ---------------------------------------------------------------------------
// Task streams

using ClassPair = std::pair<int, int>;

std::vector<ClassPair> default_split_pairs();

/// One binary task per class pair; labels remapped to {0 (first), 1 (second)}.
TaskStream make_split_tasks(const DatasetSplits& data, const std::vector<ClassPair>& pairs = default_split_pairs());

/// Pixel permutation applied by a permuted task; task 0 is the identity.
std::vector<std::vector<std::size_t>> make_permutations(std::size_t dim, std::size_t n_tasks, std::uint64_t seed);

/// Applies out[j] = in[perm[j]] to every row.
LabeledDataset permute_pixels(const LabeledDataset& data, std::span<const std::size_t> perm);

/// n_tasks tasks over all classes; task t applies its own fixed pixel permutation
/// to both splits (task 0 uses the identity).
TaskStream make_permuted_tasks(const DatasetSplits& data, std::size_t n_tasks, std::uint64_t seed);

/// Binary 2-D Gaussian-blob tasks. Task t sits at angle 2 pi t / n_tasks on a
/// circle of radius 2 * separation; its two unit-variance blobs are
/// `separation` apart along the tangent. Train and test hold n_per_task rows
/// each with exactly balanced labels.
TaskStream make_synthetic_stream(std::size_t n_tasks, std::size_t n_per_task, double separation, std::uint64_t seed);

/// First `limit` rows (limit 0 keeps everything).
LabeledDataset take_rows(const LabeledDataset& data, std::size_t limit);

/// Row-wise concatenation; dims and class counts must agree.
LabeledDataset concatenate(const std::vector<const LabeledDataset*>& parts);

} // namespace hvcl
