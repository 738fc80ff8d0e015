#include "camalign/saliency.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "camalign/errors.hpp"

namespace camalign {

std::string_view to_string(CamMethod method) {
  switch (method) {
    case CamMethod::GradCam:
      return "gradcam";
    case CamMethod::HiResCam:
      return "hirescam";
    case CamMethod::ScoreCam:
      return "scorecam";
  }
  return "gradcam";
}

CamMethod cam_method_from_string(std::string_view name) {
  if (name == "gradcam") return CamMethod::GradCam;
  if (name == "hirescam") return CamMethod::HiResCam;
  if (name == "scorecam") return CamMethod::ScoreCam;
  throw std::invalid_argument("unknown saliency method '" + std::string(name) + "'");
}

bool SaliencyMap::all_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

LayerMap grad_cam_raw(const ActivationRecord& record) {
  const auto& s = record.shape;
  LayerMap m{s.height, s.width, std::vector<double>(static_cast<std::size_t>(s.plane()), 0.0)};
  const auto plane = static_cast<std::size_t>(s.plane());
  for (int k = 0; k < s.channels; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * plane;
    double alpha = 0.0;
    for (std::size_t p = 0; p < plane; ++p) alpha += record.gradients[base + p];
    alpha /= static_cast<double>(plane);
    for (std::size_t p = 0; p < plane; ++p) m.values[p] += alpha * record.activations[base + p];
  }
  return m;
}

LayerMap hires_cam_raw(const ActivationRecord& record) {
  const auto& s = record.shape;
  LayerMap m{s.height, s.width, std::vector<double>(static_cast<std::size_t>(s.plane()), 0.0)};
  const auto plane = static_cast<std::size_t>(s.plane());
  for (int k = 0; k < s.channels; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * plane;
    for (std::size_t p = 0; p < plane; ++p) m.values[p] += record.gradients[base + p] * record.activations[base + p];
  }
  return m;
}

std::vector<double> upsample_bilinear(const std::vector<double>& src, int in_h, int in_w, int out_h, int out_w) {
  if (src.size() != static_cast<std::size_t>(in_h) * in_w) throw ShapeError("upsample: source size mismatch");
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      const double top = src[static_cast<std::size_t>(y0) * in_w + x0] * (1.0 - wx) + src[static_cast<std::size_t>(y0) * in_w + x1] * wx;
      const double bottom = src[static_cast<std::size_t>(y1) * in_w + x0] * (1.0 - wx) + src[static_cast<std::size_t>(y1) * in_w + x1] * wx;
      out[static_cast<std::size_t>(y) * out_w + x] = top * (1.0 - wy) + bottom * wy;
    }
  }
  return out;
}

SaliencyMap finalize_map(const LayerMap& raw, int height, int width) {
  std::vector<double> relu(raw.values.size());
  std::transform(raw.values.begin(), raw.values.end(), relu.begin(), [](double v) { return std::max(v, 0.0); });
  SaliencyMap map;
  map.height = height;
  map.width = width;
  map.values = upsample_bilinear(relu, raw.height, raw.width, height, width);
  const double peak = *std::max_element(map.values.begin(), map.values.end());
  if (peak > 0.0) {
    for (auto& v : map.values) v /= peak;
  }
  return map;
}

namespace {

SaliencyMap gradient_cam(CamMethod method, const ModelState& state, const Image& image, std::size_t objective,
                         std::string_view layer) {
  const auto fr = forward_with_record(state, image, layer, objective);
  const auto raw = method == CamMethod::GradCam ? grad_cam_raw(fr.record) : hires_cam_raw(fr.record);
  auto map = finalize_map(raw, image.height, image.width);
  map.method = method;
  map.objective = objective;
  return map;
}

}  // namespace

SaliencyMap grad_cam(const ModelState& state, const Image& image, std::size_t objective, std::string_view layer) {
  return gradient_cam(CamMethod::GradCam, state, image, objective, layer);
}

SaliencyMap hires_cam(const ModelState& state, const Image& image, std::size_t objective, std::string_view layer) {
  return gradient_cam(CamMethod::HiResCam, state, image, objective, layer);
}

ScoreCamDetail score_cam_detail(const ModelState& state, const Image& image, std::size_t objective,
                                std::string_view layer) {
  const auto fr = forward_with_record(state, image, layer, objective);
  const auto& shape = fr.record.shape;
  const auto plane = static_cast<std::size_t>(shape.plane());

  const Image zero(image.height, image.width, 0.0F);
  const double baseline = forward_logits(state, zero)[objective];

  ScoreCamDetail d;
  d.retained.assign(static_cast<std::size_t>(shape.channels), false);
  d.scores.assign(static_cast<std::size_t>(shape.channels), 0.0);
  d.weights.assign(static_cast<std::size_t>(shape.channels), 0.0);
  for (int k = 0; k < shape.channels; ++k) {
    const auto first = fr.record.activations.begin() + static_cast<std::ptrdiff_t>(k * plane);
    const std::vector<double> channel(first, first + static_cast<std::ptrdiff_t>(plane));
    const auto mask = upsample_bilinear(channel, shape.height, shape.width, image.height, image.width);
    const auto [lo, hi] = std::minmax_element(mask.begin(), mask.end());
    if (!(*hi > *lo)) continue;
    Image masked(image.height, image.width);
    for (std::size_t p = 0; p < mask.size(); ++p) {
      masked.pixels[p] = static_cast<float>(image.pixels[p] * ((mask[p] - *lo) / (*hi - *lo)));
    }
    d.retained[static_cast<std::size_t>(k)] = true;
    d.scores[static_cast<std::size_t>(k)] = forward_logits(state, masked)[objective] - baseline;
  }

  double top = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < shape.channels; ++k) {
    if (d.retained[static_cast<std::size_t>(k)]) top = std::max(top, d.scores[static_cast<std::size_t>(k)]);
  }
  double denom = 0.0;
  for (int k = 0; k < shape.channels; ++k) {
    if (!d.retained[static_cast<std::size_t>(k)]) continue;
    d.weights[static_cast<std::size_t>(k)] = std::exp(d.scores[static_cast<std::size_t>(k)] - top);
    denom += d.weights[static_cast<std::size_t>(k)];
  }
  d.raw = LayerMap{shape.height, shape.width, std::vector<double>(plane, 0.0)};
  for (int k = 0; k < shape.channels; ++k) {
    auto& w = d.weights[static_cast<std::size_t>(k)];
    if (w == 0.0) continue;
    w /= denom;
    for (std::size_t p = 0; p < plane; ++p) d.raw.values[p] += w * fr.record.activations[static_cast<std::size_t>(k) * plane + p];
  }
  return d;
}

SaliencyMap score_cam(const ModelState& state, const Image& image, std::size_t objective, std::string_view layer) {
  const auto d = score_cam_detail(state, image, objective, layer);
  auto map = finalize_map(d.raw, image.height, image.width);
  map.method = CamMethod::ScoreCam;
  map.objective = objective;
  return map;
}

SaliencyMap compute_saliency(CamMethod method, const ModelState& state, const Image& image, std::size_t objective,
                             std::string_view layer) {
  switch (method) {
    case CamMethod::GradCam:
      return grad_cam(state, image, objective, layer);
    case CamMethod::HiResCam:
      return hires_cam(state, image, objective, layer);
    case CamMethod::ScoreCam:
      return score_cam(state, image, objective, layer);
  }
  return grad_cam(state, image, objective, layer);
}

void dump_map(const SaliencyMap& map, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = map.sample_id + "." + std::string(to_string(map.method));
  std::ofstream bin(dir / (stem + ".f32"), std::ios::binary);
  for (double v : map.values) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                           static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
    bin.write(bytes, 4);
  }
  if (!bin) throw std::runtime_error("cannot write saliency map to '" + dir.string() + "'");
  nlohmann::json side{{"id", map.sample_id},
                      {"method", std::string(to_string(map.method))},
                      {"objective", map.objective},
                      {"H", map.height},
                      {"W", map.width}};
  std::ofstream(dir / (stem + ".json")) << side.dump(1) << "\n";
}

SaliencyMap read_map_dump(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw std::runtime_error("cannot open '" + sidecar.string() + "'");
  const auto j = nlohmann::json::parse(in);
  SaliencyMap map;
  map.sample_id = j.at("id").get<std::string>();
  map.method = cam_method_from_string(j.at("method").get<std::string>());
  map.objective = j.at("objective").get<std::size_t>();
  map.height = j.at("H").get<int>();
  map.width = j.at("W").get<int>();
  auto bin_path = sidecar;
  bin_path.replace_extension(".f32");
  std::ifstream bin(bin_path, std::ios::binary);
  map.values.resize(static_cast<std::size_t>(map.height) * map.width);
  for (auto& v : map.values) {
    unsigned char b[4];
    if (!bin.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("saliency dump truncated: " + bin_path.string());
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    v = std::bit_cast<float>(bits);
  }
  return map;
}

}  // namespace camalign
