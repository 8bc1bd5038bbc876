#pragma once

#include "hvcl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hvcl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A trained model together with what is needed to re-evaluate it.
struct Checkpoint {
    Model model;
    std::string config_text;         // canonical config of the run
    std::uint64_t seed = 0;
    std::size_t tasks_trained = 0;
    std::vector<double> final_row;   // accuracy row recorded at save time
};

/// Binary layout: "HVCLCKPT", u32 version, then length-prefixed fields, the
/// architecture, each layer's tensors in model order, and the final row.
/// Values are stored as little-endian IEEE-754 doubles.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CheckpointError when the file is missing, truncated or of another version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace hvcl
