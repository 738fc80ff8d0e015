#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "camalign/dataset.hpp"
#include "camalign/errors.hpp"
#include "camalign/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace camalign {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Validation:
      return "validation";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::string_view to_string(IssueKind kind) {
  switch (kind) {
    case IssueKind::Parse:
      return "parse";
    case IssueKind::MissingImage:
      return "missing-image";
    case IssueKind::ImageSize:
      return "image-size";
    case IssueKind::LabelLength:
      return "label-length";
    case IssueKind::BadLabel:
      return "bad-label";
    case IssueKind::BoxOutOfBounds:
      return "box-out-of-bounds";
    case IssueKind::BoxWithoutPositive:
      return "box-without-positive";
    case IssueKind::DuplicateId:
      return "duplicate-id";
    case IssueKind::BadSplit:
      return "bad-split";
  }
  return "parse";
}

std::vector<const Sample*> Dataset::in_split(Split split) const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

bool Dataset::has_split(Split split) const {
  for (const auto& s : samples) {
    if (s.split == split) return true;
  }
  return false;
}

LabelCounts count_labels(const std::vector<const Sample*>& samples, std::size_t objectives) {
  LabelCounts c{std::vector<std::size_t>(objectives, 0), std::vector<std::size_t>(objectives, 0)};
  for (const auto* s : samples) {
    for (std::size_t i = 0; i < objectives; ++i) {
      if (s->labels.at(i) == 1) {
        ++c.positive[i];
      } else {
        ++c.negative[i];
      }
    }
  }
  return c;
}

namespace {

std::string box_text(const BoundingBox& b) {
  std::ostringstream os;
  os << "[" << b.x << "," << b.y << "," << b.w << "," << b.h << "]";
  return os.str();
}

// Label, box and size invariants shared by on-disk and in-memory validation.
void check_sample(const Sample& s, std::size_t objectives, int height, int width, std::vector<ManifestIssue>& issues) {
  auto add = [&](IssueKind kind, std::string msg) { issues.push_back({s.id, kind, std::move(msg)}); };
  bool labels_ok = true;
  if (s.labels.size() != objectives) {
    add(IssueKind::LabelLength, "label vector has length " + std::to_string(s.labels.size()) + ", expected " +
                                    std::to_string(objectives));
    labels_ok = false;
  }
  for (int v : s.labels) {
    if (v != 0 && v != 1) {
      add(IssueKind::BadLabel, "label value " + std::to_string(v) + " is not 0 or 1");
      labels_ok = false;
      break;
    }
  }
  for (const auto& b : s.boxes) {
    if (!b.fits(height, width)) {
      add(IssueKind::BoxOutOfBounds, "box " + box_text(b) + " does not fit a " + std::to_string(height) + "x" +
                                         std::to_string(width) + " image");
    }
  }
  if (labels_ok && !s.boxes.empty() && !s.labels.empty() && s.labels[kActiveObjective] != 1) {
    add(IssueKind::BoxWithoutPositive, "boxes present but the active objective label is 0");
  }
}

struct ParsedManifest {
  Dataset dataset;
  std::vector<ManifestIssue> issues;
};

ParsedManifest parse_manifest(const fs::path& manifest_path, bool load_images) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("", "cannot open manifest '" + manifest_path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError("", "manifest '" + manifest_path.string() + "' is not valid JSON: " + e.what());
  }

  ParsedManifest out;
  Dataset& ds = out.dataset;
  try {
    ds.objective_names = j.at("objective_names").get<std::vector<std::string>>();
    const auto size = j.at("image_size").get<std::vector<int>>();
    if (size.size() != 2 || size[0] < 1 || size[1] < 1) throw LoadError("", "image_size must be [H, W] with H, W >= 1");
    ds.height = size[0];
    ds.width = size[1];
  } catch (const json::exception& e) {
    throw LoadError("", std::string("manifest header: ") + e.what());
  }
  if (ds.objective_names.empty()) throw LoadError("", "manifest declares no objectives");

  const fs::path base = manifest_path.parent_path();
  std::set<std::string> seen;
  const auto& entries = j.at("samples");
  if (!entries.is_array()) throw LoadError("", "'samples' must be an array");
  for (std::size_t n = 0; n < entries.size(); ++n) {
    const auto& e = entries[n];
    Sample s;
    try {
      s.id = e.at("id").get<std::string>();
      s.path = e.at("path").get<std::string>();
      s.labels = e.at("labels").get<std::vector<int>>();
      for (const auto& b : e.value("boxes", json::array())) {
        const auto v = b.get<std::vector<int>>();
        if (v.size() != 4) throw LoadError(s.id, "box must have 4 integers [x, y, w, h]");
        s.boxes.push_back({v[0], v[1], v[2], v[3]});
      }
    } catch (const json::exception& ex) {
      out.issues.push_back({s.id.empty() ? "#" + std::to_string(n) : s.id, IssueKind::Parse, ex.what()});
      continue;
    }
    try {
      s.split = split_from_string(e.value("split", std::string("train")));
    } catch (const std::invalid_argument& ex) {
      out.issues.push_back({s.id, IssueKind::BadSplit, ex.what()});
    }
    if (!seen.insert(s.id).second) out.issues.push_back({s.id, IssueKind::DuplicateId, "duplicate sample id"});

    check_sample(s, ds.objectives(), ds.height, ds.width, out.issues);

    const fs::path image_path = base / s.path;
    if (!fs::exists(image_path)) {
      out.issues.push_back({s.id, IssueKind::MissingImage, "image file not found: " + image_path.string()});
    } else {
      try {
        Image img = read_gray_png(image_path);
        if (img.height != ds.height || img.width != ds.width) {
          out.issues.push_back({s.id, IssueKind::ImageSize,
                                "image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                    ", manifest declares " + std::to_string(ds.height) + "x" +
                                    std::to_string(ds.width)});
        } else if (load_images) {
          s.image = std::move(img);
        }
      } catch (const std::runtime_error& ex) {
        out.issues.push_back({s.id, IssueKind::MissingImage, ex.what()});
      }
    }
    ds.samples.push_back(std::move(s));
  }

  const fs::path prov = base / "provenance.json";
  if (fs::exists(prov)) {
    std::ifstream pin(prov);
    json pj;
    try {
      pin >> pj;
      ds.provenance = pj.value("provenance", std::string("external"));
    } catch (const json::exception&) {
      throw LoadError("", "provenance.json is not valid JSON");
    }
  }
  return out;
}

}  // namespace

std::vector<ManifestIssue> diagnose_manifest(const fs::path& manifest_path) {
  return parse_manifest(manifest_path, false).issues;
}

Dataset load_manifest(const fs::path& manifest_path) {
  auto parsed = parse_manifest(manifest_path, true);
  if (!parsed.issues.empty()) {
    std::string msg;
    for (const auto& issue : parsed.issues) {
      if (!msg.empty()) msg += "; ";
      msg += issue.sample_id + ": " + std::string(to_string(issue.kind)) + ": " + issue.message;
    }
    throw LoadError(parsed.issues.front().sample_id, msg);
  }
  return std::move(parsed.dataset);
}

void validate(const Dataset& dataset) {
  if (dataset.objective_names.empty()) throw LoadError("", "dataset declares no objectives");
  std::vector<ManifestIssue> issues;
  std::set<std::string> seen;
  for (const auto& s : dataset.samples) {
    if (!seen.insert(s.id).second) issues.push_back({s.id, IssueKind::DuplicateId, "duplicate sample id"});
    check_sample(s, dataset.objectives(), dataset.height, dataset.width, issues);
    if (s.image.height != dataset.height || s.image.width != dataset.width) {
      issues.push_back({s.id, IssueKind::ImageSize, "image size differs from the dataset size"});
    }
    for (float v : s.image.pixels) {
      if (!(v >= 0.0F && v <= 1.0F)) {
        issues.push_back({s.id, IssueKind::Parse, "intensity outside [0, 1]"});
        break;
      }
    }
  }
  if (!issues.empty()) throw LoadError(issues.front().sample_id, to_string(issues.front().kind).data() + std::string(": ") + issues.front().message);
}

void write_dataset(Dataset& dataset, const fs::path& dir) {
  validate(dataset);
  fs::create_directories(dir / "images");
  json samples = json::array();
  for (auto& s : dataset.samples) {
    s.path = "images/" + s.id + ".png";
    write_gray_png(dir / s.path, s.image);
    json boxes = json::array();
    for (const auto& b : s.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    samples.push_back({{"id", s.id}, {"path", s.path}, {"labels", s.labels}, {"boxes", boxes},
                       {"split", std::string(to_string(s.split))}});
  }
  json manifest = {{"objective_names", dataset.objective_names},
                   {"image_size", {dataset.height, dataset.width}},
                   {"samples", samples}};
  std::ofstream(dir / "manifest.json") << manifest.dump(1) << "\n";
  std::ofstream(dir / "provenance.json") << json{{"provenance", dataset.provenance}}.dump(1) << "\n";
}

}  // namespace camalign
