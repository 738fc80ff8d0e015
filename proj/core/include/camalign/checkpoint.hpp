#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "camalign/model.hpp"

namespace camalign {

/// Binary layout, all integers little-endian:
///   "CAMCKPT\0" | u32 version | u32 n | config JSON (n bytes, includes stage)
///   | u32 tensor count | per tensor: u32 name length, name bytes,
///     u32 element count, float32 values | u32 CRC-32 of every preceding byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& state);
/// Throws IntegrityError on truncation, bad magic/version or CRC mismatch.
ModelState deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace camalign
