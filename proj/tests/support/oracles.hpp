#pragma once
// Straight-line reference implementations used as test oracles. They share no
// code with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "camalign/dataset.hpp"
#include "camalign/image.hpp"
#include "camalign/model.hpp"

namespace oracle {

struct Weights {
  double plus;
  double minus;
};

inline Weights moon(std::size_t s_plus, std::size_t s_minus) {
  Weights w{};
  w.plus = s_minus > s_plus ? 1.0 : static_cast<double>(s_minus) / static_cast<double>(s_plus);
  w.minus = s_plus > s_minus ? 1.0 : static_cast<double>(s_plus) / static_cast<double>(s_minus);
  return w;
}

inline double bce_term(double f, int t, Weights w) {
  f = std::min(std::max(f, 1e-7), 1.0 - 1e-7);
  if (t == 1) return -w.plus * std::log(f);
  return -w.minus * std::log(1.0 - f);
}

inline double weighted_bce(const std::vector<double>& f, const std::vector<int>& t, const std::vector<Weights>& w) {
  double j = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) j += bce_term(f[i], t[i], w[i]);
  return j;
}

/// Textbook binary cross-entropy, no weights.
inline double plain_bce(const std::vector<double>& f, const std::vector<int>& t) {
  double j = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double p = std::min(std::max(f[i], 1e-7), 1.0 - 1e-7);
    j -= t[i] * std::log(p) + (1 - t[i]) * std::log(1.0 - p);
  }
  return j;
}

/// Fraction of map mass on pixels covered by at least one box.
inline double proportional_energy(const std::vector<double>& map, int height, int width,
                                  const std::vector<camalign::BoundingBox>& boxes) {
  double inside = 0.0;
  double total = 0.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = map[static_cast<std::size_t>(y) * width + x];
      total += v;
      bool covered = false;
      for (const auto& b : boxes) covered = covered || (x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h);
      if (covered) inside += v;
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

/// Pairwise Mann-Whitney statistic with integer counting.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long twice_wins = 0;
  long long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) twice_wins += 2;
      else if (scores[i] == scores[j]) twice_wins += 1;
    }
  }
  return static_cast<double>(twice_wins) / static_cast<double>(2 * pairs);
}

/// Feature maps as [channel][y][x].
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
  double& at(int k, int y, int x) { return v[(static_cast<std::size_t>(k) * h + y) * w + x]; }
  double at(int k, int y, int x) const { return v[(static_cast<std::size_t>(k) * h + y) * w + x]; }
};

struct Perturbation {
  std::size_t block;
  std::size_t index;  // into the post-ReLU activation of that block
  double delta;
};

struct NaiveResult {
  std::vector<double> logits;
  std::vector<Tensor> activations;  // post-ReLU, pre-pool, per block
};

/// Direct loops over the documented architecture, in double precision.
inline NaiveResult naive_forward(const camalign::ModelState& s, const camalign::Image& image,
                                 std::optional<Perturbation> perturb = std::nullopt) {
  const auto& cfg = s.config;
  Tensor x(1, image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int xx = 0; xx < image.width; ++xx) x.at(0, y, xx) = image.at(y, xx);
  NaiveResult r;
  const auto names = cfg.layer_names();
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& spec = cfg.blocks[b];
    const auto& wt = s.param(names[b] + ".weight").values;
    const auto& bs = s.param(names[b] + ".bias").values;
    const int oh = (x.h - 1) / spec.stride + 1;
    const int ow = (x.w - 1) / spec.stride + 1;
    Tensor a(spec.out_channels, oh, ow);
    for (int o = 0; o < spec.out_channels; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double acc = bs[o];
          for (int i = 0; i < x.c; ++i) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int iy = y * spec.stride + ky - 1;
                const int ix = xx * spec.stride + kx - 1;
                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                acc += static_cast<double>(wt[((static_cast<std::size_t>(o) * x.c + i) * 3 + ky) * 3 + kx]) *
                       x.at(i, iy, ix);
              }
            }
          }
          a.at(o, y, xx) = std::max(acc, 0.0);
        }
      }
    }
    if (perturb && perturb->block == b) a.v[perturb->index] += perturb->delta;
    r.activations.push_back(a);
    if (spec.pool) {
      Tensor p(a.c, a.h / 2, a.w / 2);
      for (int k = 0; k < a.c; ++k)
        for (int y = 0; y < p.h; ++y)
          for (int xx = 0; xx < p.w; ++xx)
            p.at(k, y, xx) = std::max({a.at(k, 2 * y, 2 * xx), a.at(k, 2 * y, 2 * xx + 1), a.at(k, 2 * y + 1, 2 * xx),
                                       a.at(k, 2 * y + 1, 2 * xx + 1)});
      x = p;
    } else {
      x = a;
    }
  }
  const auto& hw = s.param("head.weight").values;
  const auto& hb = s.param("head.bias").values;
  for (int m = 0; m < cfg.objectives; ++m) {
    double z = hb[m];
    for (int k = 0; k < x.c; ++k) {
      double mean = 0.0;
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) mean += x.at(k, y, xx);
      z += static_cast<double>(hw[static_cast<std::size_t>(m) * x.c + k]) * mean / (x.h * x.w);
    }
    r.logits.push_back(z);
  }
  return r;
}

/// Bilinear resize with half-pixel centers, clamped at the borders.
inline std::vector<double> upsample(const std::vector<double>& src, int ih, int iw, int oh, int ow) {
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    double sy = (y + 0.5) * ih / oh - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(ih - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, ih - 1);
    const double fy = sy - y0;
    for (int x = 0; x < ow; ++x) {
      double sx = (x + 0.5) * iw / ow - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(iw - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, iw - 1);
      const double fx = sx - x0;
      const double top = src[y0 * iw + x0] * (1 - fx) + src[y0 * iw + x1] * fx;
      const double bot = src[y1 * iw + x0] * (1 - fx) + src[y1 * iw + x1] * fx;
      out[static_cast<std::size_t>(y) * ow + x] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

inline std::vector<double> relu_upsample_normalize(std::vector<double> m, int ih, int iw, int oh, int ow) {
  for (auto& v : m) v = std::max(v, 0.0);
  auto up = upsample(m, ih, iw, oh, ow);
  const double mx = *std::max_element(up.begin(), up.end());
  if (mx > 0.0)
    for (auto& v : up) v /= mx;
  return up;
}

struct ScoreCam {
  std::vector<double> scores;
  std::vector<double> weights;
  std::vector<double> map;  // input resolution, normalized
};

/// Score-CAM written out step by step on top of naive_forward.
inline ScoreCam score_cam(const camalign::ModelState& s, const camalign::Image& image, std::size_t objective,
                          std::size_t block) {
  const auto base = naive_forward(s, image);
  const Tensor& a = base.activations[block];
  const double zero_logit = naive_forward(s, camalign::Image(image.height, image.width, 0.0F)).logits[objective];
  ScoreCam out;
  std::vector<int> kept;
  for (int k = 0; k < a.c; ++k) {
    std::vector<double> ch(a.v.begin() + static_cast<std::ptrdiff_t>(k) * a.h * a.w,
                           a.v.begin() + static_cast<std::ptrdiff_t>(k + 1) * a.h * a.w);
    auto up = upsample(ch, a.h, a.w, image.height, image.width);
    const double lo = *std::min_element(up.begin(), up.end());
    const double hi = *std::max_element(up.begin(), up.end());
    if (hi - lo <= 0.0) {
      out.scores.push_back(0.0);
      continue;
    }
    camalign::Image masked = image;
    for (std::size_t i = 0; i < up.size(); ++i)
      masked.pixels[i] = static_cast<float>(image.pixels[i] * ((up[i] - lo) / (hi - lo)));
    out.scores.push_back(naive_forward(s, masked).logits[objective] - zero_logit);
    kept.push_back(k);
  }
  out.weights.assign(a.c, 0.0);
  if (!kept.empty()) {
    double mx = out.scores[kept[0]];
    for (int k : kept) mx = std::max(mx, out.scores[k]);
    double z = 0.0;
    for (int k : kept) z += std::exp(out.scores[k] - mx);
    for (int k : kept) out.weights[k] = std::exp(out.scores[k] - mx) / z;
  }
  std::vector<double> m(static_cast<std::size_t>(a.h) * a.w, 0.0);
  for (int k = 0; k < a.c; ++k)
    for (int y = 0; y < a.h; ++y)
      for (int x = 0; x < a.w; ++x) m[static_cast<std::size_t>(y) * a.w + x] += out.weights[k] * a.at(k, y, x);
  out.map = relu_upsample_normalize(m, a.h, a.w, image.height, image.width);
  return out;
}

/// Adam as usually written out, on doubles.
struct AdamReference {
  double lr = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long t = 0;
  void step(std::vector<double>& p, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace oracle
