#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "camalign/image.hpp"
#include "camalign/model.hpp"

namespace camalign {

enum class CamMethod { GradCam, HiResCam, ScoreCam };

inline constexpr CamMethod kAllCamMethods[] = {CamMethod::GradCam, CamMethod::HiResCam, CamMethod::ScoreCam};

/// "gradcam", "hirescam", "scorecam".
std::string_view to_string(CamMethod method);
CamMethod cam_method_from_string(std::string_view name);

/// Map at feature-layer resolution before ReLU/upsampling/normalization.
struct LayerMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

/// Nonnegative relevance at input resolution; max-normalized to 1 unless all zero.
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  CamMethod method = CamMethod::GradCam;
  std::string sample_id;
  std::size_t objective = 0;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool all_zero() const;
};

/// alpha_k = mean_{u,v} G[k,u,v]; m = sum_k alpha_k A_k.
LayerMap grad_cam_raw(const ActivationRecord& record);
/// m = sum_k G_k * A_k (elementwise).
LayerMap hires_cam_raw(const ActivationRecord& record);

/// Bilinear resize where source cell (u, v) sits at the center of its
/// receptive patch: src = (dst + 0.5) * in/out - 0.5, clamped to the grid.
std::vector<double> upsample_bilinear(const std::vector<double>& src, int in_h, int in_w, int out_h, int out_w);

/// ReLU, upsample to (height, width), divide by max when max > 0.
SaliencyMap finalize_map(const LayerMap& raw, int height, int width);

SaliencyMap grad_cam(const ModelState& state, const Image& image, std::size_t objective,
                     std::string_view layer = kLastConv);
SaliencyMap hires_cam(const ModelState& state, const Image& image, std::size_t objective,
                      std::string_view layer = kLastConv);

/// Intermediate quantities of Score-CAM, exposed for inspection and tests.
struct ScoreCamDetail {
  std::vector<bool> retained;   // false for constant channels
  std::vector<double> scores;   // logit(masked) - logit(zero image); 0 when skipped
  std::vector<double> weights;  // softmax over retained channels; 0 when skipped
  LayerMap raw;
};

ScoreCamDetail score_cam_detail(const ModelState& state, const Image& image, std::size_t objective,
                                std::string_view layer = kLastConv);
SaliencyMap score_cam(const ModelState& state, const Image& image, std::size_t objective,
                      std::string_view layer = kLastConv);

SaliencyMap compute_saliency(CamMethod method, const ModelState& state, const Image& image,
                             std::size_t objective, std::string_view layer = kLastConv);

/// Writes <dir>/<id>.<method>.f32 (little-endian float32, row-major) and a
/// JSON sidecar <dir>/<id>.<method>.json {id, method, objective, H, W}.
void dump_map(const SaliencyMap& map, const std::filesystem::path& dir);
SaliencyMap read_map_dump(const std::filesystem::path& sidecar);

}  // namespace camalign
