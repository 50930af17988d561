#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hdi/model/model.hpp"

namespace hdi::model {

inline constexpr char kCheckpointMagic[8] = {'H', 'D', 'I', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian):
///   magic[8] | u32 version | u64 length + config text |
///   u64 count + parameters | u64 count + buffers |
///   u64 count + (name, first moment, second moment) | u64 step
/// where every tensor entry is u32 name length, name, u32 rank, u64 dims,
/// then float32 values.
void save_checkpoint(const std::filesystem::path& path, const Model& model);

/// Restores parameters, buffers, optimizer moments and the step counter.
/// Throws VersionError when the format version or the architecture differs
/// from `model`, IoError/ParseError on unreadable files.
void load_checkpoint(const std::filesystem::path& path, Model& model);

/// Config text stored in a checkpoint.
std::string read_checkpoint_config(const std::filesystem::path& path);

}  // namespace hdi::model
