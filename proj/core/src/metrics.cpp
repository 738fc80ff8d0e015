#include "camalign/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "camalign/errors.hpp"

using nlohmann::json;

namespace camalign {

EnergyScore proportional_energy(const SaliencyMap& map, std::span<const BoundingBox> boxes) {
  if (boxes.empty()) throw std::invalid_argument("proportional energy is undefined without boxes");
  if (map.values.size() != static_cast<std::size_t>(map.height) * map.width) throw ShapeError("saliency map size mismatch");
  std::vector<char> inside(map.values.size(), 0);
  for (const auto& b : boxes) {
    if (!b.fits(map.height, map.width)) throw ShapeError("bounding box does not fit the saliency map");
    for (int y = b.y; y < b.y + b.h; ++y) {
      std::fill_n(inside.begin() + static_cast<std::ptrdiff_t>(y) * map.width + b.x, b.w, 1);
    }
  }
  double total = 0.0;
  double in_box = 0.0;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    total += map.values[i];
    if (inside[i]) in_box += map.values[i];
  }
  EnergyScore s;
  s.sample_id = map.sample_id;
  s.method = map.method;
  if (!(total > 0.0)) {
    s.zero_map = true;
    s.value = 0.0;
  } else {
    s.value = std::clamp(in_box / total, 0.0, 1.0);
  }
  return s;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of tie-averaged ranks of the positives, kept doubled to stay integral.
  long long rank_sum_x2 = 0;
  long long n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const long long avg_x2 = static_cast<long long>(i + 1 + j);  // 2 * mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_x2 += avg_x2;
        ++n_pos;
      } else if (labels[order[k]] != 0) {
        throw std::invalid_argument("auroc: labels must be 0 or 1");
      }
    }
    i = j;
  }
  const long long n_neg = static_cast<long long>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auroc: both classes must be present");
  const long long u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const MethodEnergy& MetricsReport::energy(CamMethod method) const {
  switch (method) {
    case CamMethod::GradCam:
      return gradcam;
    case CamMethod::HiResCam:
      return hirescam;
    case CamMethod::ScoreCam:
      return scorecam;
  }
  return gradcam;
}

MethodEnergy& MetricsReport::energy(CamMethod method) {
  return const_cast<MethodEnergy&>(static_cast<const MetricsReport&>(*this).energy(method));
}

json MetricsReport::to_json() const {
  json pe = json::object();
  for (auto method : kAllCamMethods) {
    const auto& e = energy(method);
    json per = json::array();
    for (const auto& s : e.per_sample) per.push_back({{"id", s.sample_id}, {"value", s.value}, {"zero_map", s.zero_map}});
    pe[std::string(to_string(method))] = {{"median", e.median}, {"per_sample", per}};
  }
  json j{{"model", model},
         {"auroc_target", auroc_target},
         {"auroc_external", auroc_external},
         {"prop_energy", pe},
         {"provenance", provenance}};
  if (!error.empty()) j["error"] = error;
  return j;
}

MetricsReport MetricsReport::from_json(const json& j) {
  validate_report_json(j);
  MetricsReport r;
  r.model = j.at("model").get<std::string>();
  r.auroc_target = j.at("auroc_target").get<double>();
  r.auroc_external = j.at("auroc_external").get<double>();
  for (auto method : kAllCamMethods) {
    const auto& m = j.at("prop_energy").at(std::string(to_string(method)));
    auto& e = r.energy(method);
    e.median = m.at("median").get<double>();
    for (const auto& s : m.at("per_sample")) {
      e.per_sample.push_back({s.at("id").get<std::string>(), method, s.at("value").get<double>(),
                              s.value("zero_map", false)});
    }
  }
  r.provenance = j.at("provenance");
  r.error = j.value("error", std::string());
  return r;
}

void validate_report_json(const json& j) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("report schema: " + what);
  };
  require(j.is_object(), "top level must be an object");
  require(j.contains("model") && j["model"].is_string(), "'model' must be a string");
  require(j.contains("auroc_target") && j["auroc_target"].is_number(), "'auroc_target' must be a number");
  require(j.contains("auroc_external") && j["auroc_external"].is_number(), "'auroc_external' must be a number");
  require(j.contains("provenance") && j["provenance"].is_object(), "'provenance' must be an object");
  require(j.contains("prop_energy") && j["prop_energy"].is_object(), "'prop_energy' must be an object");
  for (auto method : kAllCamMethods) {
    const std::string name(to_string(method));
    require(j["prop_energy"].contains(name), "prop_energy." + name + " missing");
    const auto& m = j["prop_energy"][name];
    require(m.contains("median") && m["median"].is_number(), "prop_energy." + name + ".median must be a number");
    require(m.contains("per_sample") && m["per_sample"].is_array(), "prop_energy." + name + ".per_sample must be an array");
    for (const auto& s : m["per_sample"]) {
      require(s.contains("id") && s["id"].is_string(), "per_sample entries need a string id");
      require(s.contains("value") && s["value"].is_number(), "per_sample entries need a numeric value");
      const double v = s["value"].get<double>();
      require(v >= 0.0 && v <= 1.0, "per_sample values must lie in [0, 1]");
    }
  }
}

}  // namespace camalign
