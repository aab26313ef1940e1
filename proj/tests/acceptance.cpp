// Acceptance suite: one PASS/FAIL line per criterion.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace toon2real;
using testutil::fs::path;
using testutil::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += " (over time budget " + std::to_string(budget_s) + " s)";
  }
  if (!o.pass) ++failures;
  std::printf("AC%d %s %s [%.1f s] %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

template <typename T>
Tensor<T> signed_batch(std::size_t n, std::size_t c, std::size_t size, std::uint64_t seed) {
  Tensor<T> t(n, c, size, size);
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-1, 1));
  return t;
}

template <typename T>
std::vector<std::vector<T>> snapshot(nn::Module<T>& m) {
  std::vector<std::vector<T>> out;
  for (auto* p : m.parameters())
    if (p->trainable()) out.push_back(p->value.storage());
  return out;
}

// ---------------------------------------------------------------------------

Outcome ac1() {
  constexpr double tol = 1e-9;
  std::vector<double> a(64), orth(64, 0.0), anti(64);
  Rng rng(1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = i < 32 ? rng.uniform(0.1, 1.0) : 0.0;
    if (i >= 32) orth[i] = rng.uniform(0.1, 1.0);
    anti[i] = -a[i];
  }
  const double same = metrics::cosine_dissimilarity(a, a);
  const double perp = metrics::cosine_dissimilarity(a, orth);
  const double opp = metrics::cosine_dissimilarity(a, anti);
  double worst = std::max({std::abs(same), std::abs(perp - 1.0), std::abs(opp - 2.0)});
  double worst_scale = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> x(256), y(256), ys(256);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.uniform(-1, 1);
      y[i] = rng.uniform(-1, 1);
    }
    const double s = rng.uniform(0.01, 100.0);
    for (std::size_t i = 0; i < y.size(); ++i) ys[i] = s * y[i];
    worst_scale = std::max(worst_scale, std::abs(metrics::cosine_dissimilarity(x, y) - metrics::cosine_dissimilarity(x, ys)));
  }
  return {worst <= tol && worst_scale <= tol, fmt("identity err %.3g, scale err %.3g", worst, worst_scale)};
}

Outcome ac2() {
  models::GeneratorSpec gs;  // 8 levels, ngf 64
  models::UnetGenerator<float> G(gs, "G");
  models::PatchDiscriminator<float> D(models::DiscriminatorSpec{6, 64, 3}, "D");
  models::init_weights(G, 1);
  models::init_weights(D, 2);
  G.set_training(false);
  D.set_training(false);
  G.set_grad_enabled(false);
  D.set_grad_enabled(false);
  std::string detail;
  bool ok = true;
  for (std::size_t n : {1u, 8u, 64u}) {
    const Tensor<float> x = signed_batch<float>(n, 3, 256, n);
    const Tensor<float> y = G.forward(x);
    const auto [lo, hi] = std::minmax_element(y.storage().begin(), y.storage().end());
    const bool g_ok = y.shape() == Shape{n, 3, 256, 256} && *lo >= -1.0f && *hi <= 1.0f;
    const Tensor<float> logits = models::discriminate(D, x, y);
    const bool d_ok = logits.shape() == Shape{n, 1, 30, 30};
    ok = ok && g_ok && d_ok;
    detail += "b" + std::to_string(n) + (g_ok && d_ok ? " ok; " : " BAD; ");
  }
  return {ok, detail};
}

Outcome ac3() {
  constexpr double tol = 1e-4, h = 1e-5;
  models::GeneratorSpec gs;
  gs.depth = 3;
  gs.ngf = 4;
  models::UnetGenerator<double> G(gs, "G");
  models::PatchDiscriminator<double> D(models::DiscriminatorSpec{6, 4, 1}, "D");
  models::init_weights(G, 21);
  models::init_weights(D, 22);
  G.set_training(true);
  D.set_training(true);
  const Tensor<double> cartoon = signed_batch<double>(2, 3, 8, 31), real = signed_batch<double>(2, 3, 8, 32);
  constexpr std::uint64_t noise = 5;

  auto fake_fwd = [&] {
    G.reseed_noise(noise);
    return G.forward(cartoon);
  };
  auto g_loss = [&] {
    const Tensor<double> fake = fake_fwd();
    return losses::gan_loss_generator(models::discriminate(D, cartoon, fake)).value +
           losses::l1_term(fake, real, 100.0).value;
  };
  auto d_loss = [&] {
    const Tensor<double> fake = fake_fwd();
    const Tensor<double> lf = models::discriminate(D, cartoon, fake);
    const Tensor<double> lr = models::discriminate(D, cartoon, real);
    return losses::gan_loss_discriminator(lr, lf).value;
  };

  // analytic generator gradient
  G.zero_grad();
  D.zero_grad();
  {
    const Tensor<double> fake = fake_fwd();
    const auto gan = losses::gan_loss_generator(models::discriminate(D, cartoon, fake));
    Tensor<double> unused, grad_fake;
    split_channels(D.backward(gan.grad), 3, unused, grad_fake);
    add_inplace(grad_fake, losses::l1_term(fake, real, 100.0).grad);
    G.backward(grad_fake);
  }
  std::vector<std::vector<double>> g_grads;
  for (auto* p : G.parameters()) g_grads.push_back(p->grad.storage());

  // analytic discriminator gradient
  D.zero_grad();
  {
    const Tensor<double> fake = fake_fwd();
    const Tensor<double> lf = models::discriminate(D, cartoon, fake);
    auto half = [](Tensor<double> g) {
      for (auto& v : g.storage()) v *= 0.5;
      return g;
    };
    D.backward(half(losses::bce_with_logits(lf, 0.0).grad));
    const Tensor<double> lr = models::discriminate(D, cartoon, real);
    D.backward(half(losses::bce_with_logits(lr, 1.0).grad));
  }

  std::size_t checked = 0;
  double worst = 0.0;
  Rng rng(40);
  auto sweep = [&](nn::Module<double>& m, const std::vector<std::vector<double>>* stored,
                   const std::function<double()>& loss, std::size_t per_tensor) {
    std::size_t k = 0;
    for (auto* p : m.parameters()) {
      const std::vector<double> grad = stored ? (*stored)[k] : p->grad.storage();
      ++k;
      if (!p->trainable()) continue;
      for (std::size_t s = 0; s < std::min(per_tensor, p->value.size()); ++s) {
        const std::size_t i = rng.below(p->value.size());
        double& slot = p->value[i];
        const double saved = slot;
        slot = saved + h;
        const double up = loss();
        slot = saved - h;
        const double down = loss();
        slot = saved;
        const double numeric = (up - down) / (2 * h);
        const double rel = std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-7});
        worst = std::max(worst, rel);
        ++checked;
      }
    }
  };
  sweep(D, nullptr, d_loss, 16);
  const std::size_t d_checked = checked;
  sweep(G, &g_grads, g_loss, 16);
  return {checked >= 100 && worst < tol,
          fmt("%.0f params (%.0f D, ", double(checked), double(d_checked)) +
              fmt("%.0f G), max rel err %.3g", double(checked - d_checked), worst)};
}

Outcome ac4() {
  TrainConfig cfg;  // table defaults: batch 1, Adam 2e-4 / 0.5, lambda 100
  cfg.image_size = 64;
  cfg.jitter = false;
  cfg.seed = 4;
  train::PairedTrainer<float> t(cfg);
  std::vector<Tensor<float>> cart, real;
  for (int i = 0; i < 4; ++i) {
    const ImageTensor photo = testutil::face(64, 400 + i, i % 2);
    cart.push_back(to_batch<float>(std::vector<ImageTensor>{normalize(cartoon::cartoonize(photo, cartoon::preset(0)))}));
    real.push_back(to_batch<float>(std::vector<ImageTensor>{normalize(photo)}));
  }
  constexpr int steps = 500;
  std::vector<double> l1;
  for (int s = 0; s < steps; ++s) {
    const auto rec = t.step(cart[s % 4], real[s % 4]);
    l1.push_back(*rec.g_l1 / cfg.lambda_l1);
  }
  double tail = 0.0;
  for (int s = steps - 4; s < steps; ++s) tail += l1[s] / 4.0;
  return {l1.front() > 0.2 && tail < 0.05, fmt("step1 %.4f, final (mean of last 4 = one pass) %.4f", l1.front(), tail)};
}

Outcome ac5() {
  const Tensor<double> zero(Shape{2, 1, 30, 30}, 0.0), half(Shape{2, 1, 30, 30}, 0.5);
  const double d = losses::gan_loss_discriminator(zero, zero).value;
  const double g = losses::gan_loss_generator(zero).value;
  const double ls = losses::lsgan_loss_discriminator(half, half).value;
  const double ln2 = std::log(2.0);
  return {std::abs(d - ln2) <= 1e-6 && std::abs(g - ln2) <= 1e-6 && std::abs(ls - 0.25) <= 1e-9,
          fmt("D %.9f, G %.9f, LSGAN %.12f", d, g, ls)};
}

Outcome ac6() {
  TempDir tmp("t2r_ac6");
  for (std::size_t i = 0; i < 200; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%03zu.png", i);
    save_png(testutil::face(64, 6000 + i, static_cast<int>(i % 2)), tmp / "photos" / name);
  }
  dataset::CorpusOptions o;
  o.seed = 6;
  o.image_size = 32;
  dataset::build_corpus(tmp / "photos", tmp / "data", o);

  auto score = [&](std::size_t batch, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.image_size = 32;
    cfg.ngf = 16;
    cfg.ndf = 16;
    cfg.epochs = 10;
    cfg.checkpoint_every = 10;
    cfg.batch_size = batch;
    cfg.seed = seed;
    const path run = tmp / ("b" + std::to_string(batch) + "_s" + std::to_string(seed));
    const auto res = train::run_training(cfg, tmp / "data", run, {false, true});
    return eval::evaluate_run(res.checkpoints.back(), tmp / "data").mean_cosine_dissimilarity;
  };
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const double b1 = score(1, seed), b64 = score(64, seed);
    wins += b1 <= b64;
    detail += fmt("seed %.0f: b1 %.5f vs b64 %.5f; ", double(seed), b1, b64);
  }
  return {wins >= 2, detail + std::to_string(wins) + "/3"};
}

Outcome ac7() {
  TempDir tmp("t2r_ac7");
  for (std::size_t i = 0; i < 100; ++i) {
    synth::FaceOptions f;
    f.size = 64;
    f.label = static_cast<int>(i % 2);
    f.grayscale = i % 10 == 3;
    char name[32];
    std::snprintf(name, sizeof(name), "photo_%03zu.png", i);
    save_png(synth::make_face(f, 7000 + i).image, tmp / "photos" / name);
  }
  dataset::CorpusOptions o;
  o.filter_grayscale = true;
  o.seed = 7;
  o.image_size = 32;
  const auto m = dataset::build_corpus(tmp / "photos", tmp / "a", o);
  dataset::build_corpus(tmp / "photos", tmp / "b", o);
  const std::string ma = testutil::read_file(tmp / "a" / dataset::kManifestFile);
  const std::string mb = testutil::read_file(tmp / "b" / dataset::kManifestFile);
  const auto& s = m.per_split_counts;
  const bool ok = m.filtered_out.at("grayscale") == 10 && s.at("train") == 54 && s.at("val") == 18 &&
                  s.at("test") == 18 && !ma.empty() && ma == mb;
  return {ok, fmt("grayscale %.0f, splits %.0f/%.0f/", double(m.filtered_out.at("grayscale")), double(s.at("train")),
                  double(s.at("val"))) +
                  std::to_string(s.at("test")) + (ma == mb ? ", manifests identical" : ", manifests differ")};
}

Outcome ac8() {
  const ImageTensor photo = testutil::face(256, 2024);
  const auto once = cartoon::style_variants(photo);
  const auto twice = cartoon::style_variants(photo);
  bool deterministic = once.size() == twice.size();
  for (std::size_t i = 0; deterministic && i < once.size(); ++i) deterministic = once[i].data() == twice[i].data();
  const double before = static_cast<double>(cartoon::distinct_colors(photo));
  double worst_reduction = 1.0;
  for (const auto& v : once)
    worst_reduction = std::min(worst_reduction, 1.0 - static_cast<double>(cartoon::distinct_colors(v)) / before);
  std::set<std::vector<double>> unique;
  for (const auto& v : once) unique.insert(v.data());
  const bool ok = deterministic && worst_reduction >= 0.9 && once.size() == 4 && unique.size() == 4;
  return {ok, fmt("deterministic %.0f, min color reduction %.4f, distinct variants %.0f", deterministic, worst_reduction,
                  double(unique.size()))};
}

Outcome ac9() {
  TrainConfig cfg;
  cfg.mode = TrainMode::Unpaired;
  cfg.image_size = 16;
  cfg.ngf = 4;
  cfg.ndf = 4;
  cfg.d_layers = 1;
  cfg.seed = 9;
  const Tensor<float> x = signed_batch<float>(2, 3, 16, 91);
  train::UnpairedTrainer<float> stub(cfg, std::make_unique<nn::Identity<float>>(), std::make_unique<nn::Identity<float>>(),
                                     std::make_unique<models::PatchDiscriminator<float>>(cfg.discriminator_spec(), "DX"),
                                     std::make_unique<models::PatchDiscriminator<float>>(cfg.discriminator_spec(), "DY"));
  const double direct = losses::cycle_loss(x, x, cfg.lambda_cycle).value;
  const double stepped = *stub.step(x, x).g_cycle;

  train::UnpairedTrainer<float> t(cfg);
  const auto g = snapshot(t.generator()), f = snapshot(t.inverse_generator());
  const auto dx = snapshot(t.discriminator_x()), dy = snapshot(t.discriminator_y());
  const auto rec = t.step(x, signed_batch<float>(2, 3, 16, 92));
  const bool all = snapshot(t.generator()) != g && snapshot(t.inverse_generator()) != f &&
                   snapshot(t.discriminator_x()) != dx && snapshot(t.discriminator_y()) != dy;
  const bool logged = rec.g_cycle.has_value() && !rec.g_l1.has_value() && train::to_csv_row(rec).find(',') != std::string::npos;
  return {direct == 0.0 && stepped == 0.0 && all && logged,
          fmt("stub cycle %.3g / %.3g, all four updated %.0f, ", direct, stepped, all) +
              "g_cycle " + (rec.g_cycle ? std::to_string(*rec.g_cycle) : "missing")};
}

Outcome ac10() {
  TempDir tmp("t2r_ac10");
  const auto sh = [&](const std::string& args) {
    const std::string cmd = std::string(TOON2REAL_CLI) + " " + args + " >/dev/null 2>" + (tmp / "err.txt").string();
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  if (sh("synth-photos --out " + (tmp / "photos").string() + " --n 24 --size 64 --bbox --seed 10") != 0)
    return {false, "synth-photos failed: " + testutil::read_file(tmp / "err.txt")};
  dataset::write_text(tmp / "toy.cfg", "image_size: 32\nngf: 8\nndf: 8\nepochs: 2\ncheckpoint_every: 1\n");
  if (sh("experiment 3 --photos " + (tmp / "photos").string() + " --datasets " + (tmp / "datasets").string() +
         " --runs " + (tmp / "runs").string() + " --config " + (tmp / "toy.cfg").string() + " --quiet") != 0)
    return {false, "experiment failed: " + testutil::read_file(tmp / "err.txt")};
  const path run = tmp / "runs" / "3";
  const std::string log = testutil::read_file(run / "loss_log.csv");
  const bool config = testutil::fs::exists(run / "config.txt");
  const bool header = log.substr(0, log.find('\n')) == "step,epoch,d_real,d_fake,g_gan,g_aux";
  const bool ckpt = train::latest_checkpoint(run).has_value();
  bool report = false;
  if (testutil::fs::exists(run / "eval.json")) {
    const auto j = nlohmann::json::parse(testutil::read_file(run / "eval.json"));
    report = j.contains("mean_cosine_dissimilarity") && j.size() == 5;
  }
  std::size_t plots = 0;
  if (testutil::fs::is_directory(run / "plots"))
    for (const auto& e : testutil::fs::directory_iterator(run / "plots")) {
      if (e.path().extension() != ".png") continue;
      const ImageTensor p = load_image(e.path());
      plots += p.width() == 1200 && p.height() == 800;
    }
  return {config && header && ckpt && report && plots == 4,
          fmt("config %.0f, header %.0f, checkpoint %.0f, ", config, header, ckpt) +
              fmt("eval %.0f, 1200x800 plots %.0f", report, double(plots))};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::tuple<int, std::string, double, std::function<Outcome()>>> all{
      {1, "metric identities", 1.0, ac1},
      {2, "shape suite", 60.0, ac2},
      {3, "gradient oracle", 120.0, ac3},
      {4, "desk-scale overfit", 900.0, ac4},
      {5, "loss closed forms", 1.0, ac5},
      {6, "batch-size trend", 7200.0, ac6},
      {7, "dataset pipeline", 60.0, ac7},
      {8, "cartoonizer properties", 60.0, ac8},
      {9, "cycle-consistency sanity", 60.0, ac9},
      {10, "artifact contract", 300.0, ac10},
  };
  for (const auto& [id, name, budget, fn] : all)
    if (only.empty() || only.count(id)) criterion(id, name, budget, fn);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
