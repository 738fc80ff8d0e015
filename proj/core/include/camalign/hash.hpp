#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace camalign {

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// 16 hex digits of FNV-1a over the compact dump of `j` (object keys sorted).
std::string config_hash(const nlohmann::json& j);

}  // namespace camalign
