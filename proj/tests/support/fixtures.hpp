#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "camalign/image.hpp"
#include "camalign/model.hpp"
#include "camalign/rng.hpp"

namespace fixtures {

/// 8x8 input, conv1 (2 ch, pooled) -> last_conv (4 ch, 4x4). 106 parameters at M = 2.
inline camalign::ModelConfig micro_pooled(int objectives = 2) {
  camalign::ModelConfig c;
  c.height = 8;
  c.width = 8;
  c.blocks = {{2, 1, true}, {4, 1, false}};
  c.objectives = objectives;
  return c;
}

/// 16x16 input, unpooled conv1, strided and pooled conv2, last_conv at 4x4. 295 parameters at M = 1.
inline camalign::ModelConfig micro_strided(int objectives = 1) {
  camalign::ModelConfig c;
  c.height = 16;
  c.width = 16;
  c.blocks = {{3, 1, false}, {4, 2, true}, {4, 1, false}};
  c.objectives = objectives;
  return c;
}

inline camalign::Image random_image(int h, int w, std::uint64_t seed) {
  camalign::Rng rng(seed);
  camalign::Image img(h, w);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("camalign_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
