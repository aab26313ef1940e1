#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "toon2real/checkpoint.hpp"
#include "toon2real/config.hpp"
#include "toon2real/dataset.hpp"
#include "toon2real/losses.hpp"
#include "toon2real/metrics.hpp"
#include "toon2real/models.hpp"
#include "toon2real/nn/adam.hpp"
#include "toon2real/nn/layers.hpp"
#include "toon2real/synthetic.hpp"
#include "toon2real/training.hpp"

namespace toon2real::eval {

namespace fs = std::filesystem;

struct EvalReport {
  std::string run_id;
  double mean_cosine_dissimilarity = 0.0;
  std::vector<double> per_image_dissimilarity;
  std::optional<double> classifier_mean_abs_diff;
  std::size_t n_images = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["run_id"] = run_id;
    j["mean_cosine_dissimilarity"] = mean_cosine_dissimilarity;
    j["per_image_dissimilarity"] = per_image_dissimilarity;
    j["classifier_mean_abs_diff"] = classifier_mean_abs_diff ? nlohmann::json(*classifier_mean_abs_diff) : nlohmann::json();
    j["n_images"] = n_images;
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.mean_cosine_dissimilarity = j.at("mean_cosine_dissimilarity").get<double>();
    r.per_image_dissimilarity = j.at("per_image_dissimilarity").get<std::vector<double>>();
    if (!j.at("classifier_mean_abs_diff").is_null()) r.classifier_mean_abs_diff = j["classifier_mean_abs_diff"].get<double>();
    r.n_images = j.at("n_images").get<std::size_t>();
    return r;
  }

  void write(const fs::path& path) const { dataset::write_text(path, to_json().dump(2) + "\n"); }
};

/// Anything that scores an rgb unit-range image with a probability.
class ClassifierAdapter {
 public:
  virtual ~ClassifierAdapter() = default;
  virtual double predict(const ImageTensor& img) = 0;
};

/// mean |p(real) - p(generated)| over the pairs.
inline double classifier_delta(std::span<const std::pair<ImageTensor, ImageTensor>> pairs, ClassifierAdapter& clf) {
  if (pairs.empty()) fail(ErrorCategory::CorpusError, "classifier_delta: no pairs");
  auto checked = [&](const ImageTensor& img) {
    const double p = clf.predict(img);
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCategory::AdapterContractError, "classifier returned " + std::to_string(p));
    return p;
  };
  double sum = 0.0;
  for (const auto& [real, gen] : pairs) sum += std::abs(checked(real) - checked(gen));
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Stand-in classifier
// ---------------------------------------------------------------------------

/// Two strided convolutions, global average pooling and a 1x1 logit head,
/// run on a fixed-size resized copy of the input.
class ConvClassifier : public ClassifierAdapter {
 public:
  static constexpr std::size_t kInputSize = 64;

  ConvClassifier() {
    net_.emplace<nn::Conv2d<float>>("C.conv1", 3, 8, 4, 2, 1, true);
    net_.emplace<nn::LeakyReLU<float>>();
    net_.emplace<nn::Conv2d<float>>("C.conv2", 8, 16, 4, 2, 1, true);
    net_.emplace<nn::LeakyReLU<float>>();
    net_.emplace<nn::Conv2d<float>>("C.conv3", 16, 16, 4, 2, 1, true);
    net_.emplace<nn::LeakyReLU<float>>();
    net_.emplace<nn::GlobalAvgPool<float>>();
    net_.emplace<nn::Conv2d<float>>("C.head", 16, 1, 1, 1, 0, true);
  }

  static Tensor<float> prepare(std::span<const ImageTensor> images) {
    std::vector<ImageTensor> in;
    for (const auto& img : images) in.push_back(normalize(resize_bilinear(img, kInputSize, kInputSize)));
    return to_batch<float>(in);
  }

  double predict(const ImageTensor& img) override {
    net_.set_training(false);
    net_.set_grad_enabled(false);
    const std::array<ImageTensor, 1> one{img};
    const double logit = net_.forward(prepare(one))[0];
    return 1.0 / (1.0 + std::exp(-logit));
  }

  /// Mini-batch BCE training; returns the final epoch's mean loss.
  double fit(const std::vector<ImageTensor>& images, const std::vector<int>& labels, std::size_t epochs,
             std::uint64_t seed, double lr = 5e-3, std::size_t batch = 16) {
    if (images.empty() || images.size() != labels.size()) fail(ErrorCategory::UsageError, "fit: bad training set");
    models::init_weights(net_, derive_seed(seed, {0xc1a5}), 0.1);
    nn::Adam<float> opt(net_.parameters(), {lr, 0.9, 0.999, 1e-8, 0.0});
    const Tensor<float> all = prepare(images);
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, {0xc1a6}));
    net_.set_training(true);
    net_.set_grad_enabled(true);
    double last = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      rng.shuffle(order.begin(), order.end());
      double total = 0.0;
      for (std::size_t b = 0; b < order.size(); b += batch) {
        const std::size_t n = std::min(batch, order.size() - b);
        Tensor<float> x(n, all.c(), all.h(), all.w());
        Tensor<float> logits_label(n, 1, 1, 1);
        for (std::size_t i = 0; i < n; ++i) {
          std::copy_n(all.sample(order[b + i]), all.shape().sample_size(), x.sample(i));
          logits_label[i] = static_cast<float>(labels[order[b + i]]);
        }
        opt.zero_grad();
        const Tensor<float> logits = net_.forward(x);
        Tensor<float> grad(logits.shape());
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double z = logits[i], y = logits_label[i];
          loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
          grad[i] = static_cast<float>((1.0 / (1.0 + std::exp(-z)) - y) / static_cast<double>(n));
        }
        net_.backward(grad);
        opt.step();
        total += loss;
      }
      last = total / static_cast<double>(order.size());
    }
    net_.set_training(false);
    return last;
  }

  double accuracy(const std::vector<ImageTensor>& images, const std::vector<int>& labels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < images.size(); ++i) hits += (predict(images[i]) >= 0.5) == (labels[i] == 1);
    return static_cast<double>(hits) / static_cast<double>(images.size());
  }

  void save(const fs::path& path) {
    Checkpoint ck;
    ck.header()["kind"] = "classifier";
    ck.header()["epoch"] = 0;
    ck.header()["config_hash"] = "";
    save_module(ck, net_);
    ck.save(path);
  }

  static std::unique_ptr<ConvClassifier> load(const fs::path& path) {
    const Checkpoint ck = Checkpoint::load(path);
    if (ck.header().value("kind", "") != "classifier") {
      fail(ErrorCategory::DecodeError, path.string() + " is not a classifier checkpoint");
    }
    auto c = std::make_unique<ConvClassifier>();
    load_module(ck, c->net_);
    return c;
  }

 private:
  nn::Sequential<float> net_;
};

/// Labeled synthetic portraits (label 1 = long hair) for the stand-in classifier.
inline std::pair<std::vector<ImageTensor>, std::vector<int>> synthetic_labeled_faces(std::size_t n, std::uint64_t seed,
                                                                                    std::size_t size = 64) {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    synth::FaceOptions o;
    o.size = size;
    o.label = static_cast<int>(i % 2);
    auto face = synth::make_face(o, derive_seed(seed, {0xfa, i}));
    images.push_back(std::move(face.image));
    labels.push_back(face.label);
  }
  return {std::move(images), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Generator inference
// ---------------------------------------------------------------------------

struct LoadedGenerator {
  TrainConfig config;
  nlohmann::json header;
  std::unique_ptr<models::UnetGenerator<float>> net;
};

inline LoadedGenerator load_generator(const fs::path& checkpoint) {
  const Checkpoint ck = Checkpoint::load(checkpoint);
  if (!ck.header().contains("config")) fail(ErrorCategory::DecodeError, checkpoint.string() + " has no training config");
  LoadedGenerator g;
  g.header = ck.header();
  g.config = parse_config_text(ck.header().at("config").get<std::string>());
  g.net = std::make_unique<models::UnetGenerator<float>>(g.config.generator_spec(), "G");
  load_module(ck, *g.net);
  g.net->set_training(false);
  g.net->set_grad_enabled(false);
  return g;
}

/// Unit-range outputs of G on unit-range inputs, resized to the model size.
inline std::vector<ImageTensor> translate(models::UnetGenerator<float>& G, std::span<const ImageTensor> inputs,
                                          std::size_t batch = 8) {
  const std::size_t size = G.spec().image_size();
  const JitterConfig plain = JitterConfig::for_size(size, false);
  std::vector<ImageTensor> out;
  for (std::size_t b = 0; b < inputs.size(); b += batch) {
    std::vector<ImageTensor> chunk;
    for (std::size_t i = b; i < std::min(inputs.size(), b + batch); ++i) {
      chunk.push_back(normalize(prepare_input(inputs[i], plain, 0)));
    }
    const Tensor<float> y = G.forward(to_batch<float>(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      ImageTensor img = from_batch(y, i, ValueRange::Signed);
      for (auto& v : img.data()) v = std::clamp(v, -1.0, 1.0);
      out.push_back(denormalize(img));
    }
  }
  return out;
}

/// Score precomputed generated/ground-truth images; the core of evaluate_run.
inline EvalReport score_images(const std::string& run_id, std::span<const ImageTensor> generated,
                               std::span<const ImageTensor> truth, ClassifierAdapter* classifier = nullptr) {
  if (generated.empty()) fail(ErrorCategory::CorpusError, "nothing to evaluate");
  if (generated.size() != truth.size()) fail(ErrorCategory::ShapeError, "generated/truth count mismatch");
  EvalReport r;
  r.run_id = run_id;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    r.per_image_dissimilarity.push_back(metrics::cosine_dissimilarity(generated[i], truth[i]));
  }
  r.n_images = generated.size();
  r.mean_cosine_dissimilarity = metrics::mean(r.per_image_dissimilarity);
  if (classifier) {
    std::vector<std::pair<ImageTensor, ImageTensor>> pairs;
    for (std::size_t i = 0; i < generated.size(); ++i) pairs.emplace_back(truth[i], generated[i]);
    r.classifier_mean_abs_diff = classifier_delta(pairs, *classifier);
  }
  return r;
}

/// Generate every test pair's cartoon half with the checkpointed generator and
/// compare against the real half on unit-range pixels.
inline EvalReport evaluate_run(const fs::path& checkpoint, const fs::path& data_dir,
                               ClassifierAdapter* classifier = nullptr, std::string run_id = {}) {
  const auto files = dataset::list_split(data_dir, dataset::Split::Test);
  if (files.empty()) fail(ErrorCategory::CorpusError, "test split of " + data_dir.string() + " is empty");
  LoadedGenerator g = load_generator(checkpoint);
  const std::size_t size = g.config.image_size;
  std::vector<ImageTensor> inputs, truth;
  for (const auto& f : files) {
    auto [toon, real] = dataset::load_pair(f);
    inputs.push_back(std::move(toon));
    truth.push_back(resize_bilinear(real, size, size));
  }
  const auto generated = translate(*g.net, inputs);
  if (run_id.empty()) run_id = checkpoint.parent_path().parent_path().filename().string();
  return score_images(run_id, generated, truth, classifier);
}

// ---------------------------------------------------------------------------
// Triptychs
// ---------------------------------------------------------------------------

/// input | generated | ground truth, each panel the size of the stored halves.
inline std::vector<fs::path> emit_triptychs(const fs::path& checkpoint, const std::vector<fs::path>& samples,
                                            const fs::path& out_dir) {
  if (samples.empty()) fail(ErrorCategory::CorpusError, "emit_triptychs: no samples");
  LoadedGenerator g = load_generator(checkpoint);
  std::vector<fs::path> out;
  for (const auto& f : samples) {
    auto [toon, real] = dataset::load_pair(f);
    const std::array<ImageTensor, 1> in{toon};
    ImageTensor gen = translate(*g.net, in).front();
    gen = quantize_8bit(resize_bilinear(gen, toon.height(), toon.width()));
    const std::array<ImageTensor, 3> panels{toon, gen, real};
    const fs::path p = out_dir / (dataset::sample_id(f) + "_triptych.png");
    save_png(hconcat(panels), p);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss plots
// ---------------------------------------------------------------------------

inline constexpr int kPlotWidth = 1200;
inline constexpr int kPlotHeight = 800;
inline constexpr std::array<const char*, 4> kLossColumns{"d_real", "d_fake", "g_gan", "g_aux"};

struct LossLog {
  std::string label;
  std::vector<double> step;
  std::array<std::vector<double>, 4> columns;
};

inline LossLog read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::NotFound, "no such loss log: " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCategory::SchemaError, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != train::kLossLogHeader) fail(ErrorCategory::SchemaError, path.string() + ": unexpected header '" + line + "'");
  LossLog log;
  log.label = path.parent_path().filename().string();
  if (log.label.empty()) log.label = path.stem().string();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    try {
      while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      fail(ErrorCategory::SchemaError, path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
    }
    if (v.size() != 6) fail(ErrorCategory::SchemaError, path.string() + ":" + std::to_string(lineno) + ": expected 6 columns");
    log.step.push_back(v[0]);
    for (std::size_t c = 0; c < 4; ++c) log.columns[c].push_back(v[2 + c]);
  }
  if (log.step.empty()) fail(ErrorCategory::SchemaError, path.string() + ": no rows");
  return log;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

namespace detail {

/// Bin-average long series so each curve has at most `max_points` vertices.
inline Series downsample(Series s, std::size_t max_points = 600) {
  if (s.x.size() <= max_points) return s;
  Series out{s.label, {}, {}};
  const double per = static_cast<double>(s.x.size()) / static_cast<double>(max_points);
  for (std::size_t b = 0; b < max_points; ++b) {
    const auto lo = static_cast<std::size_t>(b * per), hi = std::max(lo + 1, static_cast<std::size_t>((b + 1) * per));
    double sx = 0, sy = 0;
    for (std::size_t i = lo; i < hi; ++i) sx += s.x[i], sy += s.y[i];
    out.x.push_back(sx / static_cast<double>(hi - lo));
    out.y.push_back(sy / static_cast<double>(hi - lo));
  }
  return out;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

inline const std::array<cv::Scalar, 8> kPalette{cv::Scalar(180, 119, 31), cv::Scalar(14, 127, 255),
                                                cv::Scalar(44, 160, 44),  cv::Scalar(40, 39, 214),
                                                cv::Scalar(189, 103, 148), cv::Scalar(75, 86, 140),
                                                cv::Scalar(194, 119, 227), cv::Scalar(127, 127, 127)};

}  // namespace detail

/// Line chart with axes, ticks and a legend, written as a 1200x800 PNG.
inline void plot_series(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                        const fs::path& path) {
  cv::Mat img(kPlotHeight, kPlotWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int left = 110, right = kPlotWidth - 40, top = 70, bottom = kPlotHeight - 90;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::vector<Series> shown;
  for (const auto& s : series) {
    shown.push_back(detail::downsample(s));
    for (double v : shown.back().x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : shown.back().y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + (y0 == 0 ? 1 : std::abs(y0) * 0.1);
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (right - left))); };
  auto py = [&](double y) { return bottom - static_cast<int>(std::lround((y - y0) / (y1 - y0) * (bottom - top))); };

  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar ink(40, 40, 40), grid(225, 225, 225);
  for (int t = 0; t <= 5; ++t) {
    const double xv = x0 + (x1 - x0) * t / 5.0, yv = y0 + (y1 - y0) * t / 5.0;
    cv::line(img, {px(xv), top}, {px(xv), bottom}, grid, 1);
    cv::line(img, {left, py(yv)}, {right, py(yv)}, grid, 1);
    cv::putText(img, detail::tick_label(xv), {px(xv) - 20, bottom + 28}, font, 0.55, ink, 1, cv::LINE_AA);
    cv::putText(img, detail::tick_label(yv), {10, py(yv) + 5}, font, 0.55, ink, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {right, bottom}, ink, 1);
  cv::putText(img, title, {left, 45}, font, 0.9, ink, 2, cv::LINE_AA);
  cv::putText(img, x_label, {(left + right) / 2 - 20, kPlotHeight - 30}, font, 0.7, ink, 1, cv::LINE_AA);

  for (std::size_t k = 0; k < shown.size(); ++k) {
    const cv::Scalar color = detail::kPalette[k % detail::kPalette.size()];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < shown[k].x.size(); ++i) {
      if (std::isfinite(shown[k].y[i])) pts.emplace_back(px(shown[k].x[i]), py(shown[k].y[i]));
    }
    if (pts.size() == 1) cv::circle(img, pts[0], 3, color, cv::FILLED, cv::LINE_AA);
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const int ly = top + 25 + 28 * static_cast<int>(k);
    cv::line(img, {right - 260, ly - 6}, {right - 220, ly - 6}, color, 3);
    cv::putText(img, shown[k].label, {right - 210, ly}, font, 0.6, ink, 1, cv::LINE_AA);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) fail(ErrorCategory::IoError, "cannot write " + path.string());
}

/// One overlay plot per loss column, one curve per log, plus a cosine plot
/// when any run directory carries cosine_log.csv snapshots.
inline std::vector<fs::path> emit_loss_plots(const std::vector<fs::path>& logs, const fs::path& out_dir) {
  if (logs.empty()) fail(ErrorCategory::UsageError, "emit_loss_plots: no logs");
  std::vector<LossLog> parsed;
  for (const auto& p : logs) parsed.push_back(read_loss_log(p));
  std::vector<fs::path> written;
  for (std::size_t c = 0; c < kLossColumns.size(); ++c) {
    std::vector<Series> series;
    for (const auto& l : parsed) series.push_back({l.label, l.step, l.columns[c]});
    const fs::path p = out_dir / (std::string("loss_") + kLossColumns[c] + ".png");
    plot_series(series, kLossColumns[c], "step", p);
    written.push_back(p);
  }
  std::vector<Series> cosine;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const fs::path c = logs[i].parent_path() / "cosine_log.csv";
    if (!fs::exists(c)) continue;
    std::ifstream in(c);
    std::string line;
    std::getline(in, line);
    Series s{parsed[i].label, {}, {}};
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      s.x.push_back(std::stod(line.substr(0, comma)));
      s.y.push_back(std::stod(line.substr(comma + 1)));
    }
    if (!s.x.empty()) cosine.push_back(std::move(s));
  }
  if (!cosine.empty()) {
    const fs::path p = out_dir / "cosine_during_training.png";
    plot_series(cosine, "mean cosine dissimilarity (val)", "epoch", p);
    written.push_back(p);
  }
  return written;
}

}  // namespace toon2real::eval
