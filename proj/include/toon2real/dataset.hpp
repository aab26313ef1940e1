#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "toon2real/cartoonizer.hpp"
#include "toon2real/imaging.hpp"
#include "toon2real/rng.hpp"
#include "toon2real/synthetic.hpp"

namespace toon2real::dataset {

namespace fs = std::filesystem;
using synth::Rect;

enum class Split { Train, Val, Test };

inline constexpr std::array<Split, 3> kSplits{Split::Train, Split::Val, Split::Test};

inline std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  for (Split v : kSplits)
    if (split_name(v) == s) return v;
  fail(ErrorCategory::UsageError, "unknown split '" + s + "'");
}

/// A cartoon/real pair with its provenance.
struct PairedSample {
  std::string id;
  ImageTensor cartoon;
  ImageTensor real;
  int style_id = 0;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_split_counts{{"train", 0}, {"val", 0}, {"test", 0}};
  std::map<std::string, std::size_t> filtered_out{{"grayscale", 0}, {"low_face_ratio", 0}};
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> style_counts;
  /// Not part of manifest.json; persisted next to it as build_warnings.json.
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return nlohmann::json{{"total", total},
                          {"per_split_counts", per_split_counts},
                          {"filtered_out", filtered_out},
                          {"seed", seed},
                          {"style_counts", style_counts}};
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    static const std::set<std::string> keys{"total", "per_split_counts", "filtered_out", "seed", "style_counts"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!keys.count(it.key())) fail(ErrorCategory::CorpusError, "unexpected manifest field '" + it.key() + "'");
    DatasetManifest m;
    try {
      m.total = j.at("total").get<std::size_t>();
      m.per_split_counts = j.at("per_split_counts").get<std::map<std::string, std::size_t>>();
      m.filtered_out = j.at("filtered_out").get<std::map<std::string, std::size_t>>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.style_counts = j.at("style_counts").get<std::map<std::string, std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCategory::CorpusError, std::string("malformed manifest: ") + e.what());
    }
    return m;
  }
};

inline const char* kManifestFile = "manifest.json";
inline const char* kWarningsFile = "build_warnings.json";

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

inline constexpr double kGrayTolerance = 8.0 / 255.0;
inline constexpr double kGrayCoverage = 0.99;
inline constexpr double kDefaultMinFaceRatio = 0.2;

/// True iff at least 99% of pixels have max-min channel spread <= tol.
inline bool is_grayscale(const ImageTensor& img, double tol = kGrayTolerance) {
  require_rgb_unit(img, "is_grayscale");
  std::size_t flat = 0;
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
      const double spread = std::max({r, g, b}) - std::min({r, g, b});
      if (spread <= tol + 1e-12) ++flat;
    }
  }
  return static_cast<double>(flat) >= kGrayCoverage * static_cast<double>(img.plane());
}

/// Face-area check from an optional annotation. Missing annotations pass and
/// append an "unchecked" note to `warnings` when provided.
inline bool face_ratio_ok(const ImageTensor& img, const std::optional<Rect>& bbox, double min_ratio = kDefaultMinFaceRatio,
                          std::vector<std::string>* warnings = nullptr, const std::string& id = {}) {
  if (!bbox) {
    const std::string note = "face_ratio unchecked" + (id.empty() ? std::string() : ": " + id);
    if (warnings) warnings->push_back(note);
    std::clog << "warning: " << note << '\n';
    return true;
  }
  const auto W = static_cast<double>(img.width()), H = static_cast<double>(img.height());
  if (bbox->x < 0 || bbox->y < 0 || bbox->w <= 0 || bbox->h <= 0 || bbox->x + bbox->w > W || bbox->y + bbox->h > H) {
    fail(ErrorCategory::InvalidAnnotation, "face bbox outside the image" + (id.empty() ? std::string() : ": " + id));
  }
  return bbox->area() / (W * H) >= min_ratio;
}

/// Sidecar annotation `{"face_bbox": [x, y, w, h]}`; absent file yields nullopt.
inline std::optional<Rect> read_face_bbox(const fs::path& sidecar) {
  if (!fs::exists(sidecar)) return std::nullopt;
  std::ifstream in(sidecar);
  nlohmann::json j;
  try {
    in >> j;
    const auto v = j.at("face_bbox").get<std::vector<double>>();
    if (v.size() != 4) fail(ErrorCategory::InvalidAnnotation, "face_bbox needs 4 numbers: " + sidecar.string());
    return Rect{v[0], v[1], v[2], v[3]};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::InvalidAnnotation, "bad annotation " + sidecar.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitSizes {
  std::size_t train, val, test;
};

/// floor(0.6 n) train, ceil(0.2 n) val, remainder test. Integer arithmetic only.
inline SplitSizes split_sizes(std::size_t n) {
  const std::size_t train = (6 * n) / 10;
  const std::size_t val = std::min((2 * n + 9) / 10, n - train);
  return {train, val, n - train - val};
}

/// Seeded shuffle, then train / val / test in that order.
inline std::map<std::string, Split> split_dataset(const std::vector<std::string>& ids, std::uint64_t seed) {
  if (ids.empty()) fail(ErrorCategory::EmptyCorpus, "split_dataset: no ids");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) fail(ErrorCategory::DuplicateId, "duplicate id '" + id + "'");
  std::vector<std::string> order(seen.begin(), seen.end());
  Rng rng(derive_seed(seed, {0x5a17}));
  rng.shuffle(order.begin(), order.end());
  const SplitSizes sz = split_sizes(order.size());
  std::map<std::string, Split> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out[order[i]] = i < sz.train ? Split::Train : (i < sz.train + sz.val ? Split::Val : Split::Test);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pair files
// ---------------------------------------------------------------------------

/// Side-by-side composite, cartoon left and real right.
inline ImageTensor build_pair_file(const ImageTensor& cartoon, const ImageTensor& real) {
  if (!cartoon.same_shape(real) || cartoon.channels() != 3 || cartoon.height() != cartoon.width()) {
    fail(ErrorCategory::ShapeError,
         "pair halves must be identical square rgb images, got " + shape_string(cartoon) + " and " + shape_string(real));
  }
  const std::array<ImageTensor, 2> halves{cartoon, real};
  return hconcat(halves);
}

inline std::pair<ImageTensor, ImageTensor> split_pair_file(const ImageTensor& composite) {
  if (composite.width() % 2 != 0 || composite.width() != 2 * composite.height()) {
    fail(ErrorCategory::ShapeError, "pair file must be 2:1, got " + shape_string(composite));
  }
  const std::size_t w = composite.width() / 2;
  return {crop(composite, 0, 0, composite.height(), w), crop(composite, 0, w, composite.height(), w)};
}

inline std::pair<ImageTensor, ImageTensor> load_pair(const fs::path& path) {
  return split_pair_file(load_image(path));
}

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Image files under `dir`, recursively, sorted by path.
inline std::vector<fs::path> list_images(const fs::path& dir, bool recursive = true) {
  if (!fs::is_directory(dir)) fail(ErrorCategory::NotFound, "no such directory: " + dir.string());
  std::vector<fs::path> out;
  if (recursive) {
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  } else {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline DatasetManifest read_manifest(const fs::path& dataset_dir) {
  const fs::path p = dataset_dir / kManifestFile;
  if (!fs::exists(p)) fail(ErrorCategory::CorpusError, "missing manifest: " + p.string());
  std::ifstream in(p);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::CorpusError, "unreadable manifest " + p.string() + ": " + e.what());
  }
  return DatasetManifest::from_json(j);
}

/// Pair files of one split, sorted. Requires a manifest alongside.
inline std::vector<fs::path> list_split(const fs::path& dataset_dir, Split split) {
  read_manifest(dataset_dir);
  const fs::path d = dataset_dir / split_name(split);
  if (!fs::is_directory(d)) return {};
  return list_images(d, false);
}

/// Pair-file stem without the trailing "_s<style>" tag.
inline std::string sample_id(const fs::path& pair_file) { return pair_file.stem().string(); }

// ---------------------------------------------------------------------------
// Corpus builder
// ---------------------------------------------------------------------------

struct CorpusOptions {
  std::vector<int> styles{0};
  bool filter_grayscale = false;
  std::optional<double> min_face_ratio;
  std::uint64_t seed = 0;
  std::size_t image_size = 256;
};

/// Relative path with separators flattened and the extension dropped.
inline std::string photo_id(const fs::path& root, const fs::path& photo) {
  fs::path rel = fs::relative(photo, root);
  rel.replace_extension();
  std::string id;
  for (const auto& part : rel) {
    if (!id.empty()) id += "__";
    id += part.string();
  }
  return id;
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorCategory::IoError, "cannot write " + p.string());
  out << text;
}

/// Filter, split by source photo, cartoonize each requested style, and write
/// <out>/<split>/<id>_s<style>.png plus manifest.json.
inline DatasetManifest build_corpus(const fs::path& photo_dir, const fs::path& out_dir, const CorpusOptions& opt) {
  if (opt.styles.empty()) fail(ErrorCategory::ConfigError, "no cartoon styles requested");
  for (int s : opt.styles) cartoon::preset(static_cast<std::size_t>(s));
  const auto photos = list_images(photo_dir);
  if (photos.empty()) fail(ErrorCategory::EmptyCorpus, "no PNG/JPEG photos in " + photo_dir.string());

  for (Split s : kSplits) {
    const fs::path d = out_dir / split_name(s);
    if (fs::exists(d) && !fs::is_empty(d)) {
      if (!fs::exists(out_dir / kManifestFile)) {
        fail(ErrorCategory::CorpusError, "refusing to overwrite non-corpus directory " + d.string());
      }
      fs::remove_all(d);
    }
  }

  DatasetManifest manifest;
  manifest.seed = opt.seed;
  std::vector<std::pair<std::string, fs::path>> accepted;
  for (const auto& photo : photos) {
    const std::string id = photo_id(photo_dir, photo);
    const ImageTensor img = load_image(photo);
    if (opt.filter_grayscale && is_grayscale(img)) {
      ++manifest.filtered_out["grayscale"];
      continue;
    }
    if (opt.min_face_ratio) {
      fs::path sidecar = photo;
      sidecar.replace_extension(".json");
      if (!face_ratio_ok(img, read_face_bbox(sidecar), *opt.min_face_ratio, &manifest.warnings, id)) {
        ++manifest.filtered_out["low_face_ratio"];
        continue;
      }
    }
    accepted.emplace_back(id, photo);
  }
  if (accepted.empty()) fail(ErrorCategory::EmptyCorpus, "every photo was filtered out");

  std::vector<std::string> ids;
  for (const auto& a : accepted) ids.push_back(a.first);
  const auto assignment = split_dataset(ids, opt.seed);
  const JitterConfig plain = JitterConfig::for_size(opt.image_size, false);

  for (const auto& [id, photo] : accepted) {
    const Split split = assignment.at(id);
    const ImageTensor real = prepare_input(load_image(photo), plain, 0);
    for (int style : opt.styles) {
      const ImageTensor toon = cartoon::cartoonize(real, cartoon::preset(static_cast<std::size_t>(style)));
      save_png(build_pair_file(toon, real), out_dir / split_name(split) / (id + "_s" + std::to_string(style) + ".png"));
      ++manifest.per_split_counts[split_name(split)];
      ++manifest.style_counts[std::to_string(style)];
      ++manifest.total;
    }
  }
  write_text(out_dir / kManifestFile, manifest.to_json().dump(2) + "\n");
  write_text(out_dir / kWarningsFile, nlohmann::json(manifest.warnings).dump(2) + "\n");
  return manifest;
}

/// Load a batch of pair files as PairedSamples.
inline std::vector<PairedSample> load_samples(const std::vector<fs::path>& files, Split split) {
  std::vector<PairedSample> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    auto [toon, real] = load_pair(f);
    PairedSample s;
    s.id = sample_id(f);
    s.cartoon = std::move(toon);
    s.real = std::move(real);
    const auto pos = s.id.rfind("_s");
    if (pos != std::string::npos) {
      try {
        s.style_id = std::stoi(s.id.substr(pos + 2));
      } catch (const std::exception&) {
        s.style_id = 0;
      }
    }
    s.split = split;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace toon2real::dataset
