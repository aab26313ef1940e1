#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "toon2real/checkpoint.hpp"
#include "toon2real/config.hpp"
#include "toon2real/dataset.hpp"
#include "toon2real/losses.hpp"
#include "toon2real/metrics.hpp"
#include "toon2real/models.hpp"
#include "toon2real/nn/adam.hpp"

namespace toon2real::train {

namespace fs = std::filesystem;
using nn::Module;
using nn::ModulePtr;

/// Losses of one optimization step. Exactly one of g_l1 / g_cycle is set.
struct LossRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double d_real = 0.0;
  double d_fake = 0.0;
  double g_gan = 0.0;
  std::optional<double> g_l1;
  std::optional<double> g_cycle;

  double g_aux() const { return g_l1 ? *g_l1 : g_cycle.value_or(0.0); }

  bool finite() const {
    return std::isfinite(d_real) && std::isfinite(d_fake) && std::isfinite(g_gan) && std::isfinite(g_aux());
  }
};

inline const char* kLossLogHeader = "step,epoch,d_real,d_fake,g_gan,g_aux";

inline std::string to_csv_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%llu,%zu,%.9g,%.9g,%.9g,%.9g", static_cast<unsigned long long>(r.step), r.epoch,
                r.d_real, r.d_fake, r.g_gan, r.g_aux());
  return buf;
}

inline nn::AdamOptions adam_options(const TrainConfig& c) {
  return {c.lr, c.beta1, c.beta2, c.epsilon, c.weight_decay};
}

[[noreturn]] inline void diverged(const LossRecord& r) {
  fail(ErrorCategory::DivergenceError, "non-finite loss at step " + std::to_string(r.step));
}

// ---------------------------------------------------------------------------
// Paired (conditional GAN + L1)
// ---------------------------------------------------------------------------

/// Generator/discriminator pair with their optimizers. Step order per batch:
/// one discriminator update on the detached fake, then one generator update
/// on the non-saturating GAN term plus the weighted L1 term.
template <typename T = float>
class PairedTrainer {
 public:
  explicit PairedTrainer(const TrainConfig& cfg)
      : PairedTrainer(cfg, std::make_unique<models::UnetGenerator<T>>(cfg.generator_spec(), "G"),
                      std::make_unique<models::PatchDiscriminator<T>>(cfg.discriminator_spec(), "D")) {}

  PairedTrainer(const TrainConfig& cfg, ModulePtr<T> generator, ModulePtr<T> discriminator)
      : cfg_(cfg), G_(std::move(generator)), D_(std::move(discriminator)) {
    models::init_weights(*G_, derive_seed(cfg.seed, {0x6e}));
    models::init_weights(*D_, derive_seed(cfg.seed, {0xde}));
    opt_G_ = std::make_unique<nn::Adam<T>>(G_->parameters(), adam_options(cfg));
    opt_D_ = std::make_unique<nn::Adam<T>>(D_->parameters(), adam_options(cfg));
  }

  /// One D-then-G step on signed-range batches `cartoon` (input) and `real` (target).
  LossRecord step(const Tensor<T>& cartoon, const Tensor<T>& real) {
    require_same_shape(cartoon, real, "train_step_paired");
    LossRecord rec;
    rec.step = ++steps_;
    G_->set_training(true);
    D_->set_training(true);
    G_->reseed_noise(derive_seed(cfg_.seed, {0x7015e, steps_}));

    const Tensor<T> fake = G_->forward(cartoon);
    discriminator_update(cartoon, real, fake, rec);
    generator_update(cartoon, real, fake, rec);
    return rec;
  }

  /// D step on a detached fake; only D and its optimizer are touched.
  void discriminator_update(const Tensor<T>& cartoon, const Tensor<T>& real, const Tensor<T>& fake, LossRecord& rec) {
    opt_D_->zero_grad();
    const Tensor<T> fake_logits = models::discriminate(*D_, cartoon, fake);
    auto fake_term = losses::bce_with_logits(fake_logits, 0.0);
    D_->backward(scaled(fake_term.grad, T(0.5)));
    const Tensor<T> real_logits = models::discriminate(*D_, cartoon, real);
    auto real_term = losses::bce_with_logits(real_logits, 1.0);
    D_->backward(scaled(real_term.grad, T(0.5)));
    rec.d_real = real_term.value;
    rec.d_fake = fake_term.value;
    if (!std::isfinite(rec.d_real) || !std::isfinite(rec.d_fake)) diverged(rec);
    opt_D_->step();
  }

  /// G step; `fake` must be the output of the last G forward on `cartoon`.
  /// D gradients are accumulated but D is not stepped.
  void generator_update(const Tensor<T>& cartoon, const Tensor<T>& real, const Tensor<T>& fake, LossRecord& rec) {
    opt_G_->zero_grad();
    const Tensor<T> logits = models::discriminate(*D_, cartoon, fake);
    const auto gan = losses::gan_loss_generator(logits);
    Tensor<T> d_in = D_->backward(gan.grad);
    Tensor<T> unused, grad_fake;
    split_channels(d_in, cartoon.c(), unused, grad_fake);
    const auto l1 = losses::l1_term(fake, real, cfg_.lambda_l1);
    add_inplace(grad_fake, l1.grad);
    G_->backward(grad_fake);
    rec.g_gan = gan.value;
    rec.g_l1 = l1.value;
    if (!rec.finite()) diverged(rec);
    opt_G_->step();
  }

  LossRecord step(std::span<const dataset::PairedSample> batch) {
    std::vector<ImageTensor> a, b;
    for (const auto& s : batch) {
      a.push_back(normalize(s.cartoon));
      b.push_back(normalize(s.real));
    }
    return step(to_batch<T>(a), to_batch<T>(b));
  }

  void set_lr(double lr) {
    opt_G_->set_lr(lr);
    opt_D_->set_lr(lr);
  }

  Module<T>& generator() { return *G_; }
  Module<T>& discriminator() { return *D_; }
  nn::Adam<T>& generator_optimizer() { return *opt_G_; }
  nn::Adam<T>& discriminator_optimizer() { return *opt_D_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  void save_state(Checkpoint& ck) {
    save_module(ck, *G_);
    save_module(ck, *D_);
    save_optimizer(ck, "adam.G", *opt_G_);
    save_optimizer(ck, "adam.D", *opt_D_);
  }

  void load_state(const Checkpoint& ck) {
    load_module(ck, *G_);
    load_module(ck, *D_);
    load_optimizer(ck, "adam.G", *opt_G_);
    load_optimizer(ck, "adam.D", *opt_D_);
  }

 private:
  static Tensor<T> scaled(Tensor<T> t, T s) {
    for (auto& v : t.storage()) v *= s;
    return t;
  }

  TrainConfig cfg_;
  ModulePtr<T> G_, D_;
  std::unique_ptr<nn::Adam<T>> opt_G_, opt_D_;
  std::uint64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Unpaired (cycle-consistent)
// ---------------------------------------------------------------------------

/// G: X -> Y and F: Y -> X with discriminators D_X, D_Y and least-squares
/// adversarial terms. Generators update first on the adversarial plus both
/// cycle terms, then both discriminators update on the detached fakes.
template <typename T = float>
class UnpairedTrainer {
 public:
  explicit UnpairedTrainer(const TrainConfig& cfg)
      : UnpairedTrainer(cfg, std::make_unique<models::UnetGenerator<T>>(cfg.generator_spec(), "G"),
                        std::make_unique<models::UnetGenerator<T>>(cfg.generator_spec(), "F"),
                        std::make_unique<models::PatchDiscriminator<T>>(cfg.discriminator_spec(), "DX"),
                        std::make_unique<models::PatchDiscriminator<T>>(cfg.discriminator_spec(), "DY")) {}

  UnpairedTrainer(const TrainConfig& cfg, ModulePtr<T> g, ModulePtr<T> f, ModulePtr<T> dx, ModulePtr<T> dy)
      : cfg_(cfg), G_(std::move(g)), F_(std::move(f)), DX_(std::move(dx)), DY_(std::move(dy)) {
    models::init_weights(*G_, derive_seed(cfg.seed, {0x6e}));
    models::init_weights(*F_, derive_seed(cfg.seed, {0xf0}));
    models::init_weights(*DX_, derive_seed(cfg.seed, {0xd0}));
    models::init_weights(*DY_, derive_seed(cfg.seed, {0xd1}));
    const auto opts = adam_options(cfg);
    opt_G_ = std::make_unique<nn::Adam<T>>(G_->parameters(), opts);
    opt_F_ = std::make_unique<nn::Adam<T>>(F_->parameters(), opts);
    opt_DX_ = std::make_unique<nn::Adam<T>>(DX_->parameters(), opts);
    opt_DY_ = std::make_unique<nn::Adam<T>>(DY_->parameters(), opts);
  }

  /// `x` from domain X (cartoons), `y` from domain Y (photos); signed range.
  LossRecord step(const Tensor<T>& x, const Tensor<T>& y) {
    LossRecord rec;
    rec.step = ++steps_;
    for (auto* m : {G_.get(), F_.get(), DX_.get(), DY_.get()}) m->set_training(true);
    G_->reseed_noise(derive_seed(cfg_.seed, {0x7015e, steps_, 0}));
    F_->reseed_noise(derive_seed(cfg_.seed, {0x7015e, steps_, 1}));

    opt_G_->zero_grad();
    opt_F_->zero_grad();

    // x -> G -> F cycle.
    const Tensor<T> fake_y = G_->forward(x);
    const Tensor<T> rec_x = F_->forward(fake_y);
    const auto adv_g = losses::lsgan_loss_generator(DY_->forward(fake_y));
    Tensor<T> grad_fake_y = DY_->backward(adv_g.grad);
    const auto cyc_x = losses::cycle_loss(x, rec_x, cfg_.lambda_cycle);
    add_inplace(grad_fake_y, F_->backward(cyc_x.grad));
    G_->backward(grad_fake_y);

    // y -> F -> G cycle.
    const Tensor<T> fake_x = F_->forward(y);
    const Tensor<T> rec_y = G_->forward(fake_x);
    const auto adv_f = losses::lsgan_loss_generator(DX_->forward(fake_x));
    Tensor<T> grad_fake_x = DX_->backward(adv_f.grad);
    const auto cyc_y = losses::cycle_loss(y, rec_y, cfg_.lambda_cycle);
    add_inplace(grad_fake_x, G_->backward(cyc_y.grad));
    F_->backward(grad_fake_x);

    rec.g_gan = adv_g.value + adv_f.value;
    rec.g_cycle = cyc_x.value + cyc_y.value;
    if (!std::isfinite(rec.g_gan) || !std::isfinite(*rec.g_cycle)) diverged(rec);
    opt_G_->step();
    opt_F_->step();

    const auto dy = update_discriminator(*DY_, *opt_DY_, y, fake_y);
    const auto dx = update_discriminator(*DX_, *opt_DX_, x, fake_x);
    rec.d_real = 0.5 * (dy.first + dx.first);
    rec.d_fake = 0.5 * (dy.second + dx.second);
    if (!rec.finite()) diverged(rec);
    return rec;
  }

  void set_lr(double lr) {
    for (auto* o : {opt_G_.get(), opt_F_.get(), opt_DX_.get(), opt_DY_.get()}) o->set_lr(lr);
  }

  Module<T>& generator() { return *G_; }
  Module<T>& inverse_generator() { return *F_; }
  Module<T>& discriminator_x() { return *DX_; }
  Module<T>& discriminator_y() { return *DY_; }
  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

  void save_state(Checkpoint& ck) {
    for (auto* m : {G_.get(), F_.get(), DX_.get(), DY_.get()}) save_module(ck, *m);
    save_optimizer(ck, "adam.G", *opt_G_);
    save_optimizer(ck, "adam.F", *opt_F_);
    save_optimizer(ck, "adam.DX", *opt_DX_);
    save_optimizer(ck, "adam.DY", *opt_DY_);
  }

  void load_state(const Checkpoint& ck) {
    for (auto* m : {G_.get(), F_.get(), DX_.get(), DY_.get()}) load_module(ck, *m);
    load_optimizer(ck, "adam.G", *opt_G_);
    load_optimizer(ck, "adam.F", *opt_F_);
    load_optimizer(ck, "adam.DX", *opt_DX_);
    load_optimizer(ck, "adam.DY", *opt_DY_);
  }

 private:
  /// Returns the unhalved (real, fake) least-squares terms.
  static std::pair<double, double> update_discriminator(Module<T>& d, nn::Adam<T>& opt, const Tensor<T>& real,
                                                        const Tensor<T>& fake) {
    opt.zero_grad();
    auto r = losses::mse_to_label(d.forward(real), 1.0);
    for (auto& g : r.grad.storage()) g *= T(0.5);
    d.backward(r.grad);
    auto f = losses::mse_to_label(d.forward(fake), 0.0);
    for (auto& g : f.grad.storage()) g *= T(0.5);
    d.backward(f.grad);
    opt.step();
    return {r.value, f.value};
  }

  TrainConfig cfg_;
  ModulePtr<T> G_, F_, DX_, DY_;
  std::unique_ptr<nn::Adam<T>> opt_G_, opt_F_, opt_DX_, opt_DY_;
  std::uint64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

struct TrainOptions {
  bool resume = false;
  bool quiet = false;
};

struct TrainingResult {
  std::vector<fs::path> checkpoints;
  fs::path loss_log;
  std::vector<LossRecord> records;
  std::size_t start_epoch = 0;
};

inline fs::path checkpoint_path(const fs::path& run_dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04zu.ckpt", epoch);
  return run_dir / "checkpoints" / name;
}

/// Highest-epoch checkpoint in run_dir, if any.
inline std::optional<std::pair<std::size_t, fs::path>> latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(epoch_(\d+)\.ckpt)");
  std::optional<std::pair<std::size_t, fs::path>> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const auto epoch = static_cast<std::size_t>(std::stoull(m[1].str()));
      if (!best || epoch > best->first) best = {epoch, e.path()};
    }
  }
  return best;
}

/// Loss-log rows are appended one per step; on resume, rows past the
/// checkpoint epoch are dropped and earlier rows are kept byte-for-byte.
inline void truncate_log_after_epoch(const fs::path& log, std::size_t epoch) {
  if (!fs::exists(log)) return;
  std::ifstream in(log);
  std::string line, kept;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept += line + "\n";
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) continue;
    if (std::stoull(line.substr(c1 + 1, c2 - c1 - 1)) <= epoch) kept += line + "\n";
  }
  in.close();
  dataset::write_text(log, kept);
}

template <typename Trainer>
void write_checkpoint(Trainer& trainer, const TrainConfig& cfg, const fs::path& data_dir, std::size_t epoch,
                      const fs::path& path) {
  Checkpoint ck;
  auto& h = ck.header();
  h["epoch"] = epoch;
  h["step"] = trainer.steps();
  h["config_hash"] = config_hash(cfg);
  h["config"] = to_text(cfg);
  h["mode"] = mode_name(cfg.mode);
  h["data_dir"] = fs::absolute(data_dir).lexically_normal().string();
  trainer.save_state(ck);
  ck.save(path);
}

namespace detail {

/// Prepared, normalized batch of one pair-file half. `half` 0 = cartoon, 1 = real.
inline Tensor<float> load_half_batch(const std::vector<fs::path>& files, std::span<const std::size_t> idx, int half,
                                     const JitterConfig& jitter, std::uint64_t seed, std::size_t epoch) {
  std::vector<ImageTensor> imgs;
  for (std::size_t i : idx) {
    auto [toon, real] = dataset::load_pair(files[i]);
    const std::uint64_t s = derive_seed(seed, {0x1a77e, epoch, i});
    imgs.push_back(normalize(prepare_input(half == 0 ? toon : real, jitter, s)));
  }
  return to_batch<float>(imgs);
}

/// Mean cosine dissimilarity of G(cartoon) vs real over one split, eval mode.
inline double split_cosine(Module<float>& G, const std::vector<fs::path>& files, std::size_t size) {
  G.set_training(false);
  G.set_grad_enabled(false);
  std::vector<double> scores;
  const JitterConfig plain = JitterConfig::for_size(size, false);
  for (const auto& f : files) {
    auto [toon, real] = dataset::load_pair(f);
    const std::array<ImageTensor, 1> in{normalize(prepare_input(toon, plain, 0))};
    const Tensor<float> out = G.forward(to_batch<float>(in));
    const ImageTensor gen = denormalize(from_batch(out, 0, ValueRange::Signed));
    scores.push_back(metrics::cosine_dissimilarity(gen, prepare_input(real, plain, 0)));
  }
  G.set_training(true);
  G.set_grad_enabled(true);
  return metrics::mean(scores);
}

}  // namespace detail

/// Epoch loop over the train split of `data_dir`, writing loss_log.csv and
/// checkpoints/epoch_NNNN.ckpt under `run_dir`.
inline TrainingResult run_training(const TrainConfig& cfg, const fs::path& data_dir, const fs::path& run_dir,
                                   const TrainOptions& opts = {}) {
  cfg.validate();
  const auto files = dataset::list_split(data_dir, dataset::Split::Train);
  if (files.empty()) fail(ErrorCategory::CorpusError, "train split of " + data_dir.string() + " is empty");
  std::vector<fs::path> val_files;
  if (cfg.eval_every > 0) val_files = dataset::list_split(data_dir, dataset::Split::Val);

  fs::create_directories(run_dir / "checkpoints");
  TrainingResult result;
  result.loss_log = run_dir / "loss_log.csv";

  std::unique_ptr<PairedTrainer<float>> paired;
  std::unique_ptr<UnpairedTrainer<float>> unpaired;
  if (cfg.mode == TrainMode::Paired) {
    paired = std::make_unique<PairedTrainer<float>>(cfg);
  } else {
    unpaired = std::make_unique<UnpairedTrainer<float>>(cfg);
  }
  auto set_lr = [&](double lr) { paired ? paired->set_lr(lr) : unpaired->set_lr(lr); };
  auto steps = [&] { return paired ? paired->steps() : unpaired->steps(); };
  auto save = [&](std::size_t epoch, const fs::path& p) {
    paired ? write_checkpoint(*paired, cfg, data_dir, epoch, p) : write_checkpoint(*unpaired, cfg, data_dir, epoch, p);
  };

  std::size_t start_epoch = 0;
  if (opts.resume) {
    if (auto latest = latest_checkpoint(run_dir)) {
      const Checkpoint ck = Checkpoint::load(latest->second);
      if (ck.header().value("config_hash", "") != config_hash(cfg)) {
        fail(ErrorCategory::ConfigError, "resume: config differs from checkpoint " + latest->second.string());
      }
      paired ? paired->load_state(ck) : unpaired->load_state(ck);
      const auto step = ck.header().at("step").get<std::uint64_t>();
      paired ? paired->set_steps(step) : unpaired->set_steps(step);
      start_epoch = latest->first;
      truncate_log_after_epoch(result.loss_log, start_epoch);
    }
  }
  result.start_epoch = start_epoch;
  if (!opts.resume || !fs::exists(result.loss_log)) dataset::write_text(result.loss_log, std::string(kLossLogHeader) + "\n");
  const fs::path cosine_log = run_dir / "cosine_log.csv";
  if (cfg.eval_every > 0 && (!opts.resume || !fs::exists(cosine_log))) {
    dataset::write_text(cosine_log, "epoch,mean_cosine_dissimilarity\n");
  }

  std::ofstream log(result.loss_log, std::ios::app);
  const JitterConfig jitter = JitterConfig::for_size(cfg.image_size, cfg.jitter);
  const std::size_t n = files.size();

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    set_lr(cfg.lr_at_epoch(epoch));
    std::vector<std::size_t> order(n), order_b(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = order_b[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, {0x0de7, epoch}));
    shuffle_rng.shuffle(order.begin(), order.end());
    shuffle_rng.shuffle(order_b.begin(), order_b.end());

    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      const std::span<const std::size_t> idx(order.data() + begin, count);
      LossRecord rec;
      try {
        if (paired) {
          rec = paired->step(detail::load_half_batch(files, idx, 0, jitter, cfg.seed, epoch),
                             detail::load_half_batch(files, idx, 1, jitter, cfg.seed, epoch));
        } else {
          const std::span<const std::size_t> idx_b(order_b.data() + begin, count);
          rec = unpaired->step(detail::load_half_batch(files, idx, 0, jitter, cfg.seed, epoch),
                               detail::load_half_batch(files, idx_b, 1, jitter, cfg.seed, epoch));
        }
      } catch (const Error& e) {
        if (e.category() == ErrorCategory::DivergenceError) save(epoch, run_dir / "checkpoints" / "diverged.ckpt");
        throw;
      }
      rec.epoch = epoch + 1;
      log << to_csv_row(rec) << '\n';
      log.flush();
      result.records.push_back(rec);
    }

    const std::size_t done = epoch + 1;
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0 && !val_files.empty()) {
      auto& G = paired ? paired->generator() : unpaired->generator();
      const double c = detail::split_cosine(G, val_files, cfg.image_size);
      std::ofstream(cosine_log, std::ios::app) << done << ',' << c << '\n';
    }
    if (done % cfg.checkpoint_every == 0 || done == cfg.epochs) {
      const fs::path p = checkpoint_path(run_dir, done);
      save(done, p);
      result.checkpoints.push_back(p);
    }
    if (!opts.quiet) {
      const LossRecord& last = result.records.back();
      std::clog << "epoch " << done << "/" << cfg.epochs << " step " << steps() << " d_real " << last.d_real
                << " d_fake " << last.d_fake << " g_gan " << last.g_gan << " g_aux " << last.g_aux() << '\n';
    }
  }
  return result;
}

}  // namespace toon2real::train
