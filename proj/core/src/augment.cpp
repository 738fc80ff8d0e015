#include <algorithm>
#include <cmath>

#include "camalign/datagen.hpp"

namespace camalign {

BoundingBox flip_box(const BoundingBox& box, int width) { return {width - box.x - box.w, box.y, box.w, box.h}; }

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) out.at(y, image.width - 1 - x) = image.at(y, x);
  }
  return out;
}

Sample flip_horizontal(const Sample& sample) {
  Sample out = sample;
  out.image = flip_horizontal(sample.image);
  for (auto& b : out.boxes) b = flip_box(b, sample.image.width);
  return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur with clamped borders.
void smooth(std::vector<double>& field, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(field.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * field[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      field[y * w + x] = acc;
    }
  }
}

float sample_bilinear(const Image& img, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  const double top = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
  const double bottom = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bottom * fy);
}

}  // namespace

Image elastic_deform(const Image& image, const ElasticParams& params, Rng& rng) {
  const int h = image.height;
  const int w = image.width;
  std::vector<double> dx(image.size());
  std::vector<double> dy(image.size());
  for (auto& v : dx) v = rng.uniform(-params.alpha, params.alpha);
  for (auto& v : dy) v = rng.uniform(-params.alpha, params.alpha);
  smooth(dx, h, w, params.sigma);
  smooth(dy, h, w, params.sigma);

  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out.pixels[i] = std::clamp(sample_bilinear(image, y + dy[i], x + dx[i]), 0.0F, 1.0F);
    }
  }
  return out;
}

Sample augment(const Sample& sample, AugmentStage stage, Rng& rng, const AugmentConfig& config) {
  switch (stage) {
    case AugmentStage::Proxy:
      if (rng.bernoulli(config.flip_probability)) return flip_horizontal(sample);
      return sample;
    case AugmentStage::Target:
      if (rng.bernoulli(config.elastic_probability)) {
        Sample out = sample;
        out.image = elastic_deform(sample.image, config.elastic, rng);
        return out;
      }
      return sample;
  }
  return sample;
}

}  // namespace camalign
