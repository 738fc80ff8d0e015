#include "camalign/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "camalign/errors.hpp"
#include "camalign/hash.hpp"

using nlohmann::json;

namespace camalign {

namespace {

constexpr std::uint64_t kLabelStream = 0x6c6162656c;  // "label"
constexpr std::uint64_t kSampleStream = 0x73616d706c;  // "sampl"

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(what + " must lie in [0, 1]");
}

}  // namespace

void SynthConfig::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synth: image must be at least 8x8");
  if (n_train < 0 || n_validation < 0 || n_test < 0 || total() < 1) {
    throw ConfigError("synth: split sizes must be nonnegative with at least one sample");
  }
  if (objectives.empty()) throw ConfigError("synth: at least one objective is required");
  check_probability(shortcut_strength, "synth: shortcut_strength");
  check_probability(distractor_rate, "synth: distractor_rate");
  if (shortcut_size < 1 || shortcut_size + 2 > std::min(height, width) / 2) {
    throw ConfigError("synth: shortcut_size must be >= 1 and fit in an image corner");
  }
  if (noise_std < 0.0 || style.noise_std < 0.0 || style.blur_sigma < 0.0 || style.contrast <= 0.0) {
    throw ConfigError("synth: noise and blur must be nonnegative, contrast positive");
  }
  for (const auto& o : objectives) {
    check_probability(o.positive_rate, "synth: positive_rate of '" + o.name + "'");
    const auto& l = o.lesion;
    if (l.sigma_min <= 0.0 || l.sigma_max < l.sigma_min || l.count_min < 1 || l.count_max < l.count_min ||
        l.elongation_max < 1.0 || l.amplitude_max < l.amplitude_min) {
      throw ConfigError("synth: lesion ranges of '" + o.name + "' are inconsistent");
    }
    // Lesion extent must fit inside a lung field, which spans about a third
    // of the width and two thirds of the height.
    const double diameter = 2.0 * kLesionExtent * l.sigma_max + 2.0;
    if (diameter > 0.36 * width || diameter > 0.6 * height) {
      throw ConfigError("synth: lesions of '" + o.name + "' (sigma up to " + std::to_string(l.sigma_max) +
                        ") are larger than the image allows");
    }
  }
}

SynthConfig SynthConfig::target_default() {
  SynthConfig c;
  c.name = "target";
  c.n_train = 1400;
  c.n_validation = 350;
  c.n_test = 475;
  c.objectives = {{"active", 630.0 / 4430.0, LesionSpec{2.0, 3.0, 0.5, 0.7, 1, 2, 1.5}}};
  c.shortcut_strength = 0.9;
  c.seed = 11;
  return c;
}

SynthConfig SynthConfig::external_default() {
  SynthConfig c = target_default();
  c.name = "external";
  c.n_train = 0;
  c.n_validation = 0;
  c.n_test = 300;
  c.objectives[0].positive_rate = 0.5;
  c.shortcut_strength = 0.0;
  c.style = SynthStyle{0.85, 0.03, 0.02, 0.0};
  c.seed = 13;
  return c;
}

SynthConfig SynthConfig::proxy_default() {
  SynthConfig c;
  c.name = "proxy";
  c.n_train = 4000;
  c.n_validation = 500;
  c.n_test = 500;
  c.objectives = {
      {"nodule", 0.06, LesionSpec{1.2, 2.0, 0.5, 0.8, 1, 2, 1.2}},
      {"mass", 0.04, LesionSpec{3.0, 4.0, 0.4, 0.6, 1, 1, 1.3}},
      {"infiltration", 0.08, LesionSpec{2.0, 3.0, 0.3, 0.5, 1, 2, 2.5}},
      {"consolidation", 0.05, LesionSpec{1.5, 2.5, 0.4, 0.6, 2, 4, 1.5}},
      {"opacity", 0.07, LesionSpec{2.0, 3.0, 0.2, 0.36, 1, 2, 1.3}},
      {"cavity", 0.03, LesionSpec{1.5, 2.5, 0.6, 0.9, 1, 1, 1.0}},
      {"fibrosis", 0.04, LesionSpec{1.0, 1.6, 0.4, 0.7, 2, 4, 3.0}},
      {"effusion", 0.05, LesionSpec{2.5, 3.5, 0.3, 0.5, 1, 1, 2.0}},
  };
  c.shortcut_strength = 0.0;
  c.seed = 7;
  return c;
}

void to_json(json& j, const SynthConfig& c) {
  json objectives = json::array();
  for (const auto& o : c.objectives) {
    const auto& l = o.lesion;
    objectives.push_back({{"name", o.name},
                          {"positive_rate", o.positive_rate},
                          {"lesion",
                           {{"sigma", {l.sigma_min, l.sigma_max}},
                            {"amplitude", {l.amplitude_min, l.amplitude_max}},
                            {"count", {l.count_min, l.count_max}},
                            {"elongation_max", l.elongation_max}}}});
  }
  j = json{{"name", c.name},
           {"image_size", {c.height, c.width}},
           {"n_train", c.n_train},
           {"n_validation", c.n_validation},
           {"n_test", c.n_test},
           {"objectives", objectives},
           {"shortcut_strength", c.shortcut_strength},
           {"shortcut_size", c.shortcut_size},
           {"shortcut_intensity", c.shortcut_intensity},
           {"distractor_rate", c.distractor_rate},
           {"noise_std", c.noise_std},
           {"style",
            {{"contrast", c.style.contrast},
             {"brightness", c.style.brightness},
             {"noise_std", c.style.noise_std},
             {"blur_sigma", c.style.blur_sigma}}},
           {"seed", c.seed}};
}

// Missing keys keep the values already in `c`.
void from_json(const json& j, SynthConfig& c) {
  c.name = j.value("name", c.name);
  if (j.contains("image_size")) {
    const auto s = j.at("image_size").get<std::vector<int>>();
    if (s.size() != 2) throw ConfigError("synth: image_size must be [H, W]");
    c.height = s[0];
    c.width = s[1];
  }
  c.n_train = j.value("n_train", c.n_train);
  c.n_validation = j.value("n_validation", c.n_validation);
  c.n_test = j.value("n_test", c.n_test);
  if (j.contains("objectives")) {
    std::vector<SynthObjective> objectives;
    for (const auto& o : j.at("objectives")) {
      SynthObjective so;
      so.name = o.value("name", std::string("objective") + std::to_string(objectives.size()));
      so.positive_rate = o.value("positive_rate", so.positive_rate);
      if (o.contains("lesion")) {
        const auto& l = o.at("lesion");
        auto& ls = so.lesion;
        if (l.contains("sigma")) std::tie(ls.sigma_min, ls.sigma_max) = l.at("sigma").get<std::pair<double, double>>();
        if (l.contains("amplitude")) {
          std::tie(ls.amplitude_min, ls.amplitude_max) = l.at("amplitude").get<std::pair<double, double>>();
        }
        if (l.contains("count")) std::tie(ls.count_min, ls.count_max) = l.at("count").get<std::pair<int, int>>();
        ls.elongation_max = l.value("elongation_max", ls.elongation_max);
      }
      objectives.push_back(std::move(so));
    }
    c.objectives = std::move(objectives);
  }
  c.shortcut_strength = j.value("shortcut_strength", c.shortcut_strength);
  c.shortcut_size = j.value("shortcut_size", c.shortcut_size);
  c.shortcut_intensity = j.value("shortcut_intensity", c.shortcut_intensity);
  c.distractor_rate = j.value("distractor_rate", c.distractor_rate);
  c.noise_std = j.value("noise_std", c.noise_std);
  if (j.contains("style")) {
    const auto& s = j.at("style");
    c.style.contrast = s.value("contrast", c.style.contrast);
    c.style.brightness = s.value("brightness", c.style.brightness);
    c.style.noise_std = s.value("noise_std", c.style.noise_std);
    c.style.blur_sigma = s.value("blur_sigma", c.style.blur_sigma);
  }
  c.seed = j.value("seed", c.seed);
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry;

  double norm(double x, double y) const {
    const double u = (x - cx) / rx;
    const double v = (y - cy) / ry;
    return std::sqrt(u * u + v * v);
  }
};

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

void blur(std::vector<double>& field, int h, int w, double sigma) {
  if (sigma <= 0.0) return;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
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

struct Lesion {
  double cx, cy, sa, sb, angle, amplitude;
  BoundingBox box;
};

Lesion place_lesion(const LesionSpec& spec, const Ellipse (&lungs)[2], int h, int w, Rng& rng) {
  Lesion l{};
  l.sa = rng.uniform(spec.sigma_min, spec.sigma_max);
  l.sb = l.sa / rng.uniform(1.0, spec.elongation_max);
  l.angle = rng.uniform(0.0, std::numbers::pi);
  l.amplitude = rng.uniform(spec.amplitude_min, spec.amplitude_max);
  const double radius = kLesionExtent * l.sa;
  const Ellipse& lung = lungs[rng.uniform_int(0, 1)];
  // Rejection-sample a center inside the inner part of the lung such that
  // the blob extent stays inside the image.
  l.cx = lung.cx;
  l.cy = lung.cy;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double x = rng.uniform(lung.cx - lung.rx, lung.cx + lung.rx);
    const double y = rng.uniform(lung.cy - lung.ry, lung.cy + lung.ry);
    if (lung.norm(x, y) > 0.8) continue;
    if (x - radius < 0.5 || x + radius > w - 1.5 || y - radius < 0.5 || y + radius > h - 1.5) continue;
    l.cx = x;
    l.cy = y;
    break;
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(l.cx - radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(l.cy - radius)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(l.cx + radius)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(l.cy + radius)));
  l.box = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  return l;
}

void draw_square(std::vector<double>& px, int w, int x0, int y0, int size, double value) {
  for (int y = y0; y < y0 + size; ++y) {
    for (int x = x0; x < x0 + size; ++x) px[static_cast<std::size_t>(y) * w + x] = value;
  }
}

constexpr int kMarkerMargin = 2;

Sample render_sample(const SynthConfig& c, std::size_t index, const std::vector<int>& labels, Split split) {
  const int h = c.height;
  const int w = c.width;
  Rng rng(derive_seed(c.seed, {kSampleStream, index}));

  const double jx = w / 64.0;
  const double jy = h / 64.0;
  const Ellipse lungs[2] = {
      {w * 0.30 + rng.uniform(-2, 2) * jx, h * 0.50 + rng.uniform(-2, 2) * jy, w * rng.uniform(0.16, 0.19),
       h * rng.uniform(0.31, 0.36)},
      {w * 0.70 + rng.uniform(-2, 2) * jx, h * 0.50 + rng.uniform(-2, 2) * jy, w * rng.uniform(0.16, 0.19),
       h * rng.uniform(0.31, 0.36)},
  };
  const double lung_level = rng.uniform(0.38, 0.46);
  const double body_level = rng.uniform(0.14, 0.2);

  std::vector<double> texture(static_cast<std::size_t>(h) * w);
  for (auto& v : texture) v = rng.normal();
  blur(texture, h, w, 1.5);

  std::vector<double> px(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Body silhouette: a wide ellipse around both lungs.
      const double bx = (x - w * 0.5) / (w * 0.46);
      const double by = (y - h * 0.52) / (h * 0.55);
      const double body = 1.0 - smoothstep(0.9, 1.0, std::sqrt(bx * bx + by * by));
      double lung = 0.0;
      for (const auto& e : lungs) lung = std::max(lung, 1.0 - smoothstep(0.85, 1.0, e.norm(x, y)));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      px[i] = 0.04 + body * body_level + lung * (lung_level - body_level * 0.5) + 0.12 * lung * texture[i];
    }
  }

  Sample s;
  s.id = c.name + "_" + [&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu", index);
    return std::string(buf);
  }();
  s.labels = labels;
  s.split = split;

  for (std::size_t o = 0; o < c.objectives.size(); ++o) {
    if (labels[o] != 1) continue;
    const auto& spec = c.objectives[o].lesion;
    const int count = rng.uniform_int(spec.count_min, spec.count_max);
    for (int n = 0; n < count; ++n) {
      const Lesion l = place_lesion(spec, lungs, h, w, rng);
      const double ca = std::cos(l.angle);
      const double sa = std::sin(l.angle);
      const auto& b = l.box;
      for (int y = b.y; y < b.y + b.h; ++y) {
        for (int x = b.x; x < b.x + b.w; ++x) {
          const double u = ((x - l.cx) * ca + (y - l.cy) * sa) / l.sa;
          const double v = (-(x - l.cx) * sa + (y - l.cy) * ca) / l.sb;
          const double r2 = u * u + v * v;
          if (r2 > kLesionExtent * kLesionExtent) continue;
          px[static_cast<std::size_t>(y) * w + x] += l.amplitude * std::exp(-0.5 * r2);
        }
      }
      if (o == kActiveObjective) s.boxes.push_back(l.box);
    }
  }

  for (auto& v : px) v += c.noise_std * rng.normal();

  if (c.distractor_rate > 0.0 && rng.bernoulli(c.distractor_rate)) {
    // Label-independent marker in one of the three other corners.
    const int corner = rng.uniform_int(1, 3);
    const int x0 = (corner == 1 || corner == 3) ? w - kMarkerMargin - c.shortcut_size : kMarkerMargin;
    const int y0 = corner >= 2 ? h - kMarkerMargin - c.shortcut_size : kMarkerMargin;
    draw_square(px, w, x0, y0, c.shortcut_size, c.shortcut_intensity);
  }
  if (labels[kActiveObjective] == 1 && c.shortcut_strength > 0.0 && rng.bernoulli(c.shortcut_strength)) {
    draw_square(px, w, kMarkerMargin, kMarkerMargin, c.shortcut_size, c.shortcut_intensity);
  }

  const auto& st = c.style;
  if (st.blur_sigma > 0.0) blur(px, h, w, st.blur_sigma);
  if (st.contrast != 1.0 || st.brightness != 0.0 || st.noise_std > 0.0) {
    for (auto& v : px) {
      v = st.contrast * (v - 0.5) + 0.5 + st.brightness;
      if (st.noise_std > 0.0) v += st.noise_std * rng.normal();
    }
  }

  s.image = Image(h, w);
  for (std::size_t i = 0; i < px.size(); ++i) s.image.pixels[i] = static_cast<float>(std::clamp(px[i], 0.0, 1.0));
  quantize_u8(s.image);
  s.path = "images/" + s.id + ".png";
  return s;
}

}  // namespace

bool has_corner_marker(const Image& image, const SynthConfig& config) {
  for (int y = kMarkerMargin; y < kMarkerMargin + config.shortcut_size; ++y) {
    for (int x = kMarkerMargin; x < kMarkerMargin + config.shortcut_size; ++x) {
      if (image.at(y, x) < config.shortcut_intensity - 0.02) return false;
    }
  }
  return true;
}

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const int sizes[3] = {config.n_train, config.n_validation, config.n_test};
  const std::size_t m = config.objectives.size();

  std::vector<std::vector<int>> labels(static_cast<std::size_t>(config.total()), std::vector<int>(m, 0));
  std::vector<Split> splits(labels.size());
  std::size_t start = 0;
  for (int s = 0; s < 3; ++s) {
    const auto n = static_cast<std::size_t>(sizes[s]);
    for (std::size_t i = 0; i < n; ++i) splits[start + i] = static_cast<Split>(s);
    for (std::size_t o = 0; o < m; ++o) {
      // Exact quota of positives per split, placed by a seeded permutation.
      const auto quota = static_cast<std::size_t>(std::llround(config.objectives[o].positive_rate * n));
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = start + i;
      Rng rng(derive_seed(config.seed, {kLabelStream, o, static_cast<std::uint64_t>(s)}));
      rng.shuffle(order);
      for (std::size_t i = 0; i < quota; ++i) labels[order[i]][o] = 1;
    }
    start += n;
  }

  Dataset ds;
  ds.height = config.height;
  ds.width = config.width;
  for (const auto& o : config.objectives) ds.objective_names.push_back(o.name);
  json cj;
  to_json(cj, config);
  ds.provenance = "synthetic:" + config_hash(cj);
  ds.samples.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ds.samples.push_back(render_sample(config, i, labels[i], splits[i]));
  return ds;
}

}  // namespace camalign
