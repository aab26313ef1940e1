#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toon2real/config.hpp"
#include "toon2real/dataset.hpp"
#include "toon2real/evaluation.hpp"
#include "toon2real/training.hpp"

namespace toon2real::experiment {

namespace fs = std::filesystem;

enum class DatasetKind { Original, Filtered, Augmented };

inline std::string dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Original: return "original";
    case DatasetKind::Filtered: return "filtered";
    case DatasetKind::Augmented: return "augmented";
  }
  return "?";
}

struct ExperimentSpec {
  int id = 0;
  TrainMode network = TrainMode::Paired;
  DatasetKind dataset = DatasetKind::Original;
  std::optional<std::size_t> batch_size;

  /// Experiment settings take precedence over the base config.
  TrainConfig apply(TrainConfig c) const {
    c.mode = network;
    if (batch_size) c.batch_size = *batch_size;
    return c;
  }
};

inline ExperimentSpec experiment_spec(int id) {
  switch (id) {
    case 1: return {1, TrainMode::Paired, DatasetKind::Original, std::nullopt};
    case 2: return {2, TrainMode::Paired, DatasetKind::Filtered, std::nullopt};
    case 3: return {3, TrainMode::Paired, DatasetKind::Filtered, 8};
    case 4: return {4, TrainMode::Paired, DatasetKind::Filtered, 64};
    case 5: return {5, TrainMode::Paired, DatasetKind::Augmented, std::nullopt};
    case 6: return {6, TrainMode::Unpaired, DatasetKind::Filtered, std::nullopt};
    default: fail(ErrorCategory::UnknownExperiment, "no experiment " + std::to_string(id) + " (valid: 1-6)");
  }
}

inline dataset::CorpusOptions corpus_options(DatasetKind k, std::uint64_t seed, std::size_t image_size) {
  dataset::CorpusOptions o;
  o.seed = seed;
  o.image_size = image_size;
  if (k != DatasetKind::Original) {
    o.filter_grayscale = true;
    o.min_face_ratio = dataset::kDefaultMinFaceRatio;
  }
  if (k == DatasetKind::Augmented) o.styles = {0, 1, 2, 3};
  return o;
}

struct ExperimentPaths {
  fs::path photos;    // source face photos
  fs::path datasets;  // built corpora live in <datasets>/<kind>
  fs::path runs;      // artifacts go to <runs>/<id>
};

struct ExperimentResult {
  fs::path run_dir;
  std::vector<fs::path> checkpoints;
  fs::path loss_log;
  fs::path eval_report;
  eval::EvalReport report;
  std::vector<fs::path> plots;
};

/// build-if-missing, train, evaluate, plot; everything under runs/<id>/.
inline ExperimentResult run_experiment(int id, const ExperimentPaths& paths, std::uint64_t seed,
                                       const TrainConfig& base = {}, bool resume = false,
                                       eval::ClassifierAdapter* classifier = nullptr, bool quiet = false) {
  const ExperimentSpec spec = experiment_spec(id);
  TrainConfig cfg = spec.apply(base);
  cfg.seed = seed;
  cfg.validate();

  const fs::path data_dir = paths.datasets / dataset_name(spec.dataset);
  if (!fs::exists(data_dir / dataset::kManifestFile)) {
    dataset::build_corpus(paths.photos, data_dir, corpus_options(spec.dataset, seed, cfg.image_size));
  }
  const dataset::DatasetManifest manifest = dataset::read_manifest(data_dir);

  ExperimentResult out;
  out.run_dir = paths.runs / std::to_string(id);
  fs::create_directories(out.run_dir);
  dataset::write_text(out.run_dir / "config.txt", to_text(cfg));
  nlohmann::json ref;
  ref["experiment"] = id;
  ref["dataset"] = dataset_name(spec.dataset);
  ref["dataset_dir"] = fs::absolute(data_dir).lexically_normal().string();
  ref["manifest"] = manifest.to_json();
  dataset::write_text(out.run_dir / "manifest_ref.json", ref.dump(2) + "\n");

  train::TrainOptions topts;
  topts.resume = resume;
  topts.quiet = quiet;
  const auto trained = train::run_training(cfg, data_dir, out.run_dir, topts);
  out.loss_log = trained.loss_log;
  for (const auto& e : fs::directory_iterator(out.run_dir / "checkpoints")) {
    if (e.path().extension() == ".ckpt") out.checkpoints.push_back(e.path());
  }
  std::sort(out.checkpoints.begin(), out.checkpoints.end());

  const auto latest = train::latest_checkpoint(out.run_dir);
  if (!latest) fail(ErrorCategory::IoError, "training produced no checkpoint in " + out.run_dir.string());
  out.report = eval::evaluate_run(latest->second, data_dir, classifier, "experiment_" + std::to_string(id));
  out.eval_report = out.run_dir / "eval.json";
  out.report.write(out.eval_report);
  out.plots = eval::emit_loss_plots({out.loss_log}, out.run_dir / "plots");
  return out;
}

}  // namespace toon2real::experiment
