#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "toon2real.hpp"

namespace fs = std::filesystem;
using namespace toon2real;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_styles(const std::string& s) {
  if (s == "all") return {0, 1, 2, 3};
  std::vector<int> out;
  for (const auto& tok : split_csv(s)) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      fail(ErrorCategory::UsageError, "bad style '" + tok + "'");
    }
  }
  for (int v : out) {
    if (v < 0 || v >= static_cast<int>(cartoon::kStyleCount)) {
      fail(ErrorCategory::UsageError, "style must be in 0..3 or 'all'");
    }
  }
  if (out.empty()) fail(ErrorCategory::UsageError, "no styles given");
  return out;
}

void cmd_cartoonize(const fs::path& in, const fs::path& out, const std::string& style) {
  const auto styles = parse_styles(style);
  const auto photos = dataset::list_images(in);
  if (photos.empty()) fail(ErrorCategory::EmptyCorpus, "no images under " + in.string());
  for (const auto& p : photos) {
    fs::path rel = fs::relative(p, in);
    rel.replace_extension(".png");
    const ImageTensor img = load_image(p);
    for (int s : styles) {
      const fs::path dst = styles.size() == 1 ? out / rel : out / ("style_" + std::to_string(s)) / rel;
      save_png(cartoon::cartoonize(img, cartoon::preset(static_cast<std::size_t>(s))), dst);
    }
  }
  std::cout << "cartoonized " << photos.size() << " image(s) into " << out.string() << "\n";
}

void cmd_synth_photos(const fs::path& out, std::size_t n, std::size_t size, std::size_t gray, std::size_t small_faces,
                      bool bbox, std::uint64_t seed) {
  std::ostringstream labels;
  labels << "file,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    synth::FaceOptions o;
    o.size = size;
    o.label = static_cast<int>(i % 2);
    o.grayscale = i < gray;
    o.face_scale = (i >= gray && i < gray + small_faces) ? 0.35 : 1.0;
    const auto face = synth::make_face(o, derive_seed(seed, {0x9407, i}));
    char name[32];
    std::snprintf(name, sizeof(name), "face_%05zu", i);
    save_png(face.image, out / (std::string(name) + ".png"));
    if (bbox) {
      nlohmann::json j;
      j["face_bbox"] = {face.face_bbox.x, face.face_bbox.y, face.face_bbox.w, face.face_bbox.h};
      dataset::write_text(out / (std::string(name) + ".json"), j.dump() + "\n");
    }
    labels << name << ".png," << face.label << "\n";
  }
  dataset::write_text(out / "labels.csv", labels.str());
  std::cout << "wrote " << n << " synthetic photo(s) to " << out.string() << "\n";
}

TrainConfig load_config(const std::string& path) { return path.empty() ? TrainConfig{} : parse_config(path); }

void print_report(const eval::EvalReport& r) { std::cout << r.to_json().dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toon2real: cartoon/real face translation workbench"};
  app.require_subcommand(1);

  std::string in_dir, out_dir, style = "0";
  auto* cartoonize = app.add_subcommand("cartoonize", "cartoonize every image under a directory");
  cartoonize->add_option("--in", in_dir, "input directory")->required();
  cartoonize->add_option("--out", out_dir, "output directory")->required();
  cartoonize->add_option("--style", style, "0..3 or all");

  std::string photos, styles = "0";
  std::uint64_t seed = 0;
  std::optional<double> min_face_ratio;
  bool filter_gray = false;
  std::size_t image_size = 256;
  auto* build = app.add_subcommand("build-dataset", "filter, split and cartoonize a photo directory");
  build->add_option("--photos", photos, "photo directory")->required();
  build->add_option("--out", out_dir, "dataset directory")->required();
  build->add_option("--styles", styles, "comma-separated style ids or all");
  build->add_option("--seed", seed, "split seed");
  build->add_option("--min-face-ratio", min_face_ratio, "drop photos whose face box covers less than this");
  build->add_flag("--filter-grayscale", filter_gray, "drop grayscale photos");
  build->add_option("--size", image_size, "pair half size in pixels");

  std::string config_path, data_dir;
  std::optional<int> experiment_id;
  std::optional<std::uint64_t> opt_seed;
  bool resume = false, quiet = false;
  auto* train = app.add_subcommand("train", "train a model on a built dataset");
  train->add_option("--config", config_path, "key: value config file");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--experiment", experiment_id, "apply experiment id 1-6 overrides");
  train->add_option("--seed", opt_seed, "overrides the config seed");
  train->add_flag("--resume", resume, "continue from the latest checkpoint");
  train->add_flag("--quiet", quiet, "no per-epoch progress");

  std::string checkpoint, classifier_path, report_path;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  evaluate->add_option("--checkpoint", checkpoint, "generator checkpoint")->required();
  evaluate->add_option("--data", data_dir, "dataset directory (default: the one it was trained on)");
  evaluate->add_option("--classifier", classifier_path, "classifier checkpoint");
  evaluate->add_option("--out", report_path, "EvalReport JSON path");

  std::string logs;
  auto* plot = app.add_subcommand("plot-losses", "overlay loss curves of several runs");
  plot->add_option("--logs", logs, "comma-separated loss_log.csv paths")->required();
  plot->add_option("--out", out_dir, "output directory")->required();

  std::size_t n = 8;
  auto* trip = app.add_subcommand("triptychs", "input | generated | ground truth sheets");
  trip->add_option("--checkpoint", checkpoint, "generator checkpoint")->required();
  trip->add_option("--n", n, "number of test samples");
  trip->add_option("--out", out_dir, "output directory")->required();
  trip->add_option("--data", data_dir, "dataset directory (default: the one it was trained on)");

  int exp_id = 0;
  std::string datasets_dir = "datasets", runs_dir = "runs";
  auto* exp = app.add_subcommand("experiment", "build-if-missing, train, evaluate and plot one experiment");
  exp->add_option("id", exp_id, "experiment id 1-6")->required();
  exp->add_option("--photos", photos, "photo directory")->required();
  exp->add_option("--datasets", datasets_dir, "where corpora are built");
  exp->add_option("--runs", runs_dir, "where run directories go");
  exp->add_option("--config", config_path, "base config");
  exp->add_option("--seed", seed, "seed for split and training");
  exp->add_option("--classifier", classifier_path, "classifier checkpoint");
  exp->add_flag("--resume", resume, "continue from the latest checkpoint");
  exp->add_flag("--quiet", quiet, "no per-epoch progress");

  std::size_t count = 100, gray = 0, small = 0;
  bool bbox = false;
  auto* synth = app.add_subcommand("synth-photos", "write procedural face photos");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--n", count, "number of photos");
  synth->add_option("--size", image_size, "image size");
  synth->add_option("--gray", gray, "how many are grayscale");
  synth->add_option("--small-faces", small, "how many have a low face-to-image ratio");
  synth->add_flag("--bbox", bbox, "write face_bbox sidecars");
  synth->add_option("--seed", seed, "seed");

  std::string clf_out;
  std::size_t clf_epochs = 50;
  auto* clf = app.add_subcommand("train-classifier", "train the stand-in face classifier");
  clf->add_option("--out", clf_out, "classifier checkpoint path")->required();
  clf->add_option("--n", count, "synthetic training faces");
  clf->add_option("--epochs", clf_epochs, "epochs");
  clf->add_option("--seed", seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*cartoonize) {
      cmd_cartoonize(in_dir, out_dir, style);
    } else if (*build) {
      dataset::CorpusOptions o;
      o.styles = parse_styles(styles);
      o.seed = seed;
      o.min_face_ratio = min_face_ratio;
      o.filter_grayscale = filter_gray;
      o.image_size = image_size;
      const auto m = dataset::build_corpus(photos, out_dir, o);
      std::cout << m.to_json().dump(2) << "\n";
    } else if (*train) {
      TrainConfig cfg = load_config(config_path);
      if (experiment_id) cfg = experiment::experiment_spec(*experiment_id).apply(cfg);
      if (opt_seed) cfg.seed = *opt_seed;
      cfg.validate();
      dataset::write_text(fs::path(out_dir) / "config.txt", to_text(cfg));
      train::TrainOptions t;
      t.resume = resume;
      t.quiet = quiet;
      const auto r = train::run_training(cfg, data_dir, out_dir, t);
      std::cout << "trained " << r.records.size() << " step(s); log " << r.loss_log.string() << "\n";
    } else if (*evaluate) {
      std::unique_ptr<eval::ConvClassifier> c;
      if (!classifier_path.empty()) c = eval::ConvClassifier::load(classifier_path);
      if (data_dir.empty()) data_dir = Checkpoint::load(checkpoint).header().value("data_dir", "");
      const auto r = eval::evaluate_run(checkpoint, data_dir, c.get());
      if (!report_path.empty()) r.write(report_path);
      print_report(r);
    } else if (*plot) {
      std::vector<fs::path> paths;
      for (const auto& s : split_csv(logs)) paths.emplace_back(s);
      for (const auto& p : eval::emit_loss_plots(paths, out_dir)) std::cout << p.string() << "\n";
    } else if (*trip) {
      if (data_dir.empty()) data_dir = Checkpoint::load(checkpoint).header().value("data_dir", "");
      auto files = dataset::list_split(data_dir, dataset::Split::Test);
      if (files.size() > n) files.resize(n);
      for (const auto& p : eval::emit_triptychs(checkpoint, files, out_dir)) std::cout << p.string() << "\n";
    } else if (*exp) {
      std::unique_ptr<eval::ConvClassifier> c;
      if (!classifier_path.empty()) c = eval::ConvClassifier::load(classifier_path);
      const auto r = experiment::run_experiment(exp_id, {photos, datasets_dir, runs_dir}, seed,
                                                load_config(config_path), resume, c.get(), quiet);
      print_report(r.report);
    } else if (*synth) {
      cmd_synth_photos(out_dir, count, image_size, gray, small, bbox, seed);
    } else if (*clf) {
      auto [images, labels] = eval::synthetic_labeled_faces(count, seed);
      eval::ConvClassifier model;
      const double loss = model.fit(images, labels, clf_epochs, seed);
      auto [test_images, test_labels] = eval::synthetic_labeled_faces(count / 4 + 1, derive_seed(seed, {0x7e57}));
      model.save(clf_out);
      std::cout << "classifier loss " << loss << " held-out accuracy " << model.accuracy(test_images, test_labels)
                << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << category_name(e.category()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
