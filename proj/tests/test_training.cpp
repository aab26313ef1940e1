#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace toon2real;
using namespace toon2real::train;
using testutil::TempDir;

namespace {

TrainConfig tiny(std::size_t size = 16) {
  TrainConfig c;
  c.image_size = size;
  c.ngf = 4;
  c.ndf = 4;
  c.d_layers = 1;
  c.epochs = 1;
  c.jitter = false;
  c.checkpoint_every = 1;
  c.seed = 3;
  return c;
}

template <typename T>
std::vector<std::vector<T>> snapshot(nn::Module<T>& m) {
  std::vector<std::vector<T>> out;
  for (auto* p : m.parameters())
    if (p->trainable()) out.push_back(p->value.storage());
  return out;
}

Tensor<float> signed_batch(std::size_t n, std::size_t size, std::uint64_t seed) {
  Tensor<float> t(n, 3, size, size);
  Rng rng(seed);
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

std::vector<std::string> lines(const testutil::fs::path& p) {
  std::istringstream in(testutil::read_file(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Generator that emits NaN everywhere.
class NanGenerator : public nn::Module<float> {
 public:
  Tensor<float> forward(const Tensor<float>& x) override { return Tensor<float>(x.shape(), std::nanf("")); }
  Tensor<float> backward(const Tensor<float>& g) override { return g; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Config and schedule
// ---------------------------------------------------------------------------

TEST(TrainConfig, EmptyFileGivesTableOneDefaults) {
  const TrainConfig c = parse_config_text("");
  EXPECT_EQ(c.batch_size, 1u);
  EXPECT_DOUBLE_EQ(c.lr, 2e-4);
  EXPECT_DOUBLE_EQ(c.beta1, 0.5);
  EXPECT_DOUBLE_EQ(c.beta2, 0.9999);
  EXPECT_DOUBLE_EQ(c.epsilon, 1e-8);
  EXPECT_DOUBLE_EQ(c.weight_decay, 0.0);
  EXPECT_DOUBLE_EQ(c.lambda_l1, 100.0);
  EXPECT_EQ(c.epochs, 200u);
  EXPECT_EQ(c.mode, TrainMode::Paired);
  EXPECT_EQ(c.image_size, 256u);
  EXPECT_EQ(c.checkpoint_every, 20u);
}

TEST(TrainConfig, ParsesOverridesAndComments) {
  const TrainConfig c = parse_config_text("# comment\nbatch_size: 64\n\n  lr : 1e-3  # trailing\njitter: false\n");
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.lr, 1e-3);
  EXPECT_FALSE(c.jitter);
}

TEST(TrainConfig, Errors) {
  try {
    parse_config_text("batch_size: 8\nlearning_rate: 0.1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::ConfigError);
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_CATEGORY(parse_config_text("batch_size: eight"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("batch_size: -1"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("batch_size: 0"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("lr: fast"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("jitter: yes"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("mode: sideways"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("mode: unpaired\nlambda_l1: 100"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("lr: 1\nlr: 2"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("just words"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("image_size: 100"), ConfigError);
  EXPECT_CATEGORY(parse_config_text("beta1: 1.0"), ConfigError);
  EXPECT_CATEGORY(parse_config(testutil::fs::path("/nonexistent/cfg.txt")), NotFound);
}

TEST(TrainConfig, TextRoundTrip) {
  TrainConfig c = tiny();
  c.lr = 1.2345678901234e-4;
  c.batch_size = 8;
  EXPECT_EQ(to_text(parse_config_text(to_text(c))), to_text(c));
  c.mode = TrainMode::Unpaired;
  const TrainConfig u = parse_config_text(to_text(c));
  EXPECT_EQ(u.mode, TrainMode::Unpaired);
  EXPECT_EQ(config_hash(u), config_hash(c));
  EXPECT_NE(config_hash(u), config_hash(tiny()));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(LrSchedule, ConstantThenLinearDecay) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(0), 2e-4);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(100), 2e-4);
  EXPECT_NEAR(c.lr_at_epoch(150), 1e-4, 1e-18);
  EXPECT_NEAR(c.lr_at_epoch(199), 2e-6, 1e-18);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(200), 0.0);
  EXPECT_DOUBLE_EQ(c.lr_at_epoch(250), 0.0);
  for (std::size_t e = 1; e < 200; ++e) EXPECT_LE(c.lr_at_epoch(e), c.lr_at_epoch(e - 1));
}

TEST(LossRecord, CsvRow) {
  LossRecord r;
  r.step = 7;
  r.epoch = 2;
  r.d_real = 0.5;
  r.d_fake = 0.25;
  r.g_gan = 1.0;
  r.g_l1 = 12.5;
  EXPECT_EQ(to_csv_row(r), "7,2,0.5,0.25,1,12.5");
  EXPECT_STREQ(kLossLogHeader, "step,epoch,d_real,d_fake,g_gan,g_aux");
  r.g_gan = INFINITY;
  EXPECT_FALSE(r.finite());
}

// ---------------------------------------------------------------------------
// Paired step
// ---------------------------------------------------------------------------

TEST(PairedStep, UpdatesBothNetworksWithNonNegativeLosses) {
  PairedTrainer<float> t(tiny());
  const auto g0 = snapshot(t.generator()), d0 = snapshot(t.discriminator());
  const LossRecord r = t.step(signed_batch(2, 16, 1), signed_batch(2, 16, 2));
  EXPECT_NE(snapshot(t.generator()), g0);
  EXPECT_NE(snapshot(t.discriminator()), d0);
  EXPECT_EQ(r.step, 1u);
  ASSERT_TRUE(r.g_l1.has_value());
  EXPECT_FALSE(r.g_cycle.has_value());
  for (double v : {r.d_real, r.d_fake, r.g_gan, *r.g_l1}) EXPECT_GE(v, 0.0);
  EXPECT_TRUE(r.finite());
}

TEST(PairedStep, UpdatesAreDetached) {
  PairedTrainer<float> t(tiny());
  const Tensor<float> c = signed_batch(1, 16, 1), r = signed_batch(1, 16, 2);
  t.generator().set_training(true);
  t.discriminator().set_training(true);
  const Tensor<float> fake = t.generator().forward(c);
  LossRecord rec;
  const auto g0 = snapshot(t.generator()), d0 = snapshot(t.discriminator());
  t.discriminator_update(c, r, fake, rec);
  EXPECT_EQ(snapshot(t.generator()), g0);
  const auto d1 = snapshot(t.discriminator());
  EXPECT_NE(d1, d0);
  t.generator_update(c, r, fake, rec);
  EXPECT_EQ(snapshot(t.discriminator()), d1);
  EXPECT_NE(snapshot(t.generator()), g0);
}

TEST(PairedStep, ZeroLrIsBitIdentical) {
  TrainConfig cfg = tiny();
  cfg.lr = 0.0;
  PairedTrainer<float> t(cfg);
  const auto g0 = snapshot(t.generator()), d0 = snapshot(t.discriminator());
  for (int i = 0; i < 3; ++i) t.step(signed_batch(2, 16, i), signed_batch(2, 16, 10 + i));
  EXPECT_EQ(snapshot(t.generator()), g0);
  EXPECT_EQ(snapshot(t.discriminator()), d0);
}

TEST(PairedStep, TwoSampleOverfitHalvesL1) {
  TrainConfig cfg = tiny(32);
  cfg.ngf = 8;
  cfg.ndf = 8;
  PairedTrainer<float> t(cfg);
  std::vector<ImageTensor> cart, real;
  for (int i = 0; i < 2; ++i) {
    const ImageTensor photo = testutil::face(32, 50 + i, i);
    real.push_back(normalize(photo));
    cart.push_back(normalize(cartoon::cartoonize(photo, cartoon::preset(0))));
  }
  const Tensor<float> c = to_batch<float>(cart), r = to_batch<float>(real);
  double first = 0, last = 0;
  for (int s = 0; s < 200; ++s) {
    const LossRecord rec = t.step(c, r);
    if (s == 0) first = *rec.g_l1;
    last = *rec.g_l1;
  }
  EXPECT_LE(last, 0.5 * first) << first << " -> " << last;
}

TEST(PairedStep, NonFiniteLossThrowsDivergence) {
  PairedTrainer<float> t(tiny(), std::make_unique<NanGenerator>(),
                         std::make_unique<models::PatchDiscriminator<float>>(tiny().discriminator_spec()));
  EXPECT_CATEGORY(t.step(signed_batch(1, 16, 1), signed_batch(1, 16, 2)), DivergenceError);
}

TEST(PairedStep, CheckpointStateRoundTrip) {
  TempDir tmp;
  const TrainConfig cfg = tiny();
  PairedTrainer<float> a(cfg);
  for (int i = 0; i < 2; ++i) a.step(signed_batch(2, 16, i), signed_batch(2, 16, 20 + i));
  write_checkpoint(a, cfg, tmp.path(), 1, tmp / "a.ckpt");

  TrainConfig other = cfg;
  other.seed = 99;
  PairedTrainer<float> b(other);
  b.load_state(Checkpoint::load(tmp / "a.ckpt"));
  EXPECT_EQ(snapshot(b.generator()), snapshot(a.generator()));
  EXPECT_EQ(snapshot(b.discriminator()), snapshot(a.discriminator()));
  EXPECT_EQ(b.generator_optimizer().steps(), 2);
  EXPECT_EQ(b.generator_optimizer().first_moment(0), a.generator_optimizer().first_moment(0));

  const Checkpoint ck = Checkpoint::load(tmp / "a.ckpt");
  EXPECT_EQ(ck.header().at("epoch").get<std::size_t>(), 1u);
  EXPECT_EQ(ck.header().at("config_hash").get<std::string>(), config_hash(cfg));
  EXPECT_TRUE(ck.header().contains("spec_version"));
}

// ---------------------------------------------------------------------------
// Unpaired step
// ---------------------------------------------------------------------------

TEST(UnpairedStep, UpdatesAllFourNetworksAndLogsCycle) {
  TrainConfig cfg = tiny();
  cfg.mode = TrainMode::Unpaired;
  UnpairedTrainer<float> t(cfg);
  const auto g = snapshot(t.generator()), f = snapshot(t.inverse_generator());
  const auto dx = snapshot(t.discriminator_x()), dy = snapshot(t.discriminator_y());
  const LossRecord r = t.step(signed_batch(1, 16, 1), signed_batch(1, 16, 2));
  EXPECT_NE(snapshot(t.generator()), g);
  EXPECT_NE(snapshot(t.inverse_generator()), f);
  EXPECT_NE(snapshot(t.discriminator_x()), dx);
  EXPECT_NE(snapshot(t.discriminator_y()), dy);
  ASSERT_TRUE(r.g_cycle.has_value());
  EXPECT_FALSE(r.g_l1.has_value());
  EXPECT_GT(*r.g_cycle, 0.0);
  for (double v : {r.d_real, r.d_fake, r.g_gan}) EXPECT_GE(v, 0.0);
}

TEST(UnpairedStep, IdentityGeneratorsHaveZeroCycle) {
  TrainConfig cfg = tiny();
  cfg.mode = TrainMode::Unpaired;
  UnpairedTrainer<float> t(cfg, std::make_unique<nn::Identity<float>>(), std::make_unique<nn::Identity<float>>(),
                           std::make_unique<models::PatchDiscriminator<float>>(cfg.discriminator_spec(), "DX"),
                           std::make_unique<models::PatchDiscriminator<float>>(cfg.discriminator_spec(), "DY"));
  const Tensor<float> x = signed_batch(2, 16, 4);
  const LossRecord r = t.step(x, x);
  EXPECT_EQ(*r.g_cycle, 0.0);
  EXPECT_EQ(losses::cycle_loss(x, x, 10.0).value, 0.0);
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

class RunTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    corpus_ = new TempDir("t2r_train");
    const auto m = testutil::toy_corpus(corpus_->path(), 10, 16);
    ASSERT_EQ(m.per_split_counts.at("train"), 6u);
  }
  static void TearDownTestSuite() {
    delete corpus_;
    corpus_ = nullptr;
  }
  static testutil::fs::path data() { return corpus_->path() / "data"; }

  static TempDir* corpus_;
  TempDir run_;
};

TempDir* RunTraining::corpus_ = nullptr;

TEST_F(RunTraining, OneEpochSixPairsSixRecords) {
  const TrainingResult r = run_training(tiny(), data(), run_.path(), {false, true});
  EXPECT_EQ(r.records.size(), 6u);
  const auto l = lines(r.loss_log);
  ASSERT_EQ(l.size(), 7u);
  EXPECT_EQ(l[0], "step,epoch,d_real,d_fake,g_gan,g_aux");
  EXPECT_EQ(l[6].substr(0, 4), "6,1,");
  ASSERT_EQ(r.checkpoints.size(), 1u);
  EXPECT_TRUE(testutil::fs::exists(run_.path() / "checkpoints" / "epoch_0001.ckpt"));
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.epoch, 1u);
    for (double v : {rec.d_real, rec.d_fake, rec.g_gan, rec.g_aux()}) EXPECT_GE(v, 0.0);
  }
}

TEST_F(RunTraining, BatchedStepsAndCheckpointCadence) {
  TrainConfig c = tiny();
  c.batch_size = 4;
  c.epochs = 3;
  c.checkpoint_every = 2;
  const TrainingResult r = run_training(c, data(), run_.path(), {false, true});
  EXPECT_EQ(r.records.size(), 6u);  // ceil(6 / 4) per epoch
  ASSERT_EQ(r.checkpoints.size(), 2u);
  EXPECT_EQ(r.checkpoints[0].filename(), "epoch_0002.ckpt");
  EXPECT_EQ(r.checkpoints[1].filename(), "epoch_0003.ckpt");
  EXPECT_EQ(latest_checkpoint(run_.path())->first, 3u);
}

TEST_F(RunTraining, DeterministicUnderSeed) {
  TrainConfig c = tiny();
  c.epochs = 2;
  c.jitter = true;
  TempDir other;
  run_training(c, data(), run_.path(), {false, true});
  run_training(c, data(), other.path(), {false, true});
  const auto a = lines(run_.path() / "loss_log.csv"), b = lines(other.path() / "loss_log.csv");
  ASSERT_GE(a.size(), 11u);
  for (std::size_t i = 0; i < 11; ++i) EXPECT_EQ(a[i], b[i]);
  c.seed = 4;
  TempDir third;
  run_training(c, data(), third.path(), {false, true});
  EXPECT_NE(lines(third.path() / "loss_log.csv")[1], a[1]);
}

TEST_F(RunTraining, ResumeReproducesUninterruptedRun) {
  TrainConfig c = tiny();
  c.epochs = 3;
  run_training(c, data(), run_.path(), {false, true});
  const auto full = lines(run_.path() / "loss_log.csv");
  ASSERT_EQ(full.size(), 19u);

  // Simulate a crash two steps into epoch 3: last checkpoint is epoch 2.
  testutil::fs::remove(run_.path() / "checkpoints" / "epoch_0003.ckpt");
  std::string partial;
  for (std::size_t i = 0; i < 15; ++i) partial += full[i] + "\n";
  dataset::write_text(run_.path() / "loss_log.csv", partial);

  const TrainingResult r = run_training(c, data(), run_.path(), {true, true});
  EXPECT_EQ(r.start_epoch, 2u);
  EXPECT_EQ(r.records.size(), 6u);
  EXPECT_EQ(lines(run_.path() / "loss_log.csv"), full);

  c.lr = 1e-3;
  EXPECT_CATEGORY(run_training(c, data(), run_.path(), {true, true}), ConfigError);
}

TEST_F(RunTraining, UnpairedModeLogsCycle) {
  TrainConfig c = tiny();
  c.mode = TrainMode::Unpaired;
  const TrainingResult r = run_training(c, data(), run_.path(), {false, true});
  ASSERT_EQ(r.records.size(), 6u);
  for (const auto& rec : r.records) {
    EXPECT_TRUE(rec.g_cycle.has_value());
    EXPECT_FALSE(rec.g_l1.has_value());
  }
  EXPECT_EQ(Checkpoint::load(r.checkpoints.back()).header().at("mode").get<std::string>(), "unpaired");
}

TEST_F(RunTraining, DivergenceDumpsCheckpoint) {
  TrainConfig c = tiny();
  c.lr = 1e30;
  EXPECT_CATEGORY(run_training(c, data(), run_.path(), {false, true}), DivergenceError);
  EXPECT_TRUE(testutil::fs::exists(run_.path() / "checkpoints" / "diverged.ckpt"));
}

TEST_F(RunTraining, CosineSnapshots) {
  TrainConfig c = tiny();
  c.epochs = 2;
  c.eval_every = 1;
  run_training(c, data(), run_.path(), {false, true});
  const auto l = lines(run_.path() / "cosine_log.csv");
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], "epoch,mean_cosine_dissimilarity");
  EXPECT_EQ(l[2].substr(0, 2), "2,");
}

TEST(RunTrainingErrors, MissingManifestAndEmptySplit) {
  TempDir tmp;
  EXPECT_CATEGORY(run_training(tiny(), tmp.path(), tmp / "run", {false, true}), CorpusError);
  dataset::write_text(tmp / "manifest.json",
                      R"({"total":0,"per_split_counts":{"train":0,"val":0,"test":0},)"
                      R"("filtered_out":{"grayscale":0,"low_face_ratio":0},"seed":0,"style_counts":{}})");
  EXPECT_CATEGORY(run_training(tiny(), tmp.path(), tmp / "run", {false, true}), CorpusError);
}
