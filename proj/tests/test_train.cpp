#include <gtest/gtest.h>

#include <fstream>

#include "cmi/checkpoint.hpp"
#include "cmi/error.hpp"
#include "cmi/synth.hpp"
#include "cmi/train.hpp"
#include "test_util.hpp"

using namespace cmi;
using cmi::testing::TempDir;

namespace {

std::vector<RgbdSample> synth_samples(int64_t n, int64_t size = 64, int64_t seed = 0) {
  std::vector<RgbdSample> out;
  for (int64_t i = 0; i < n; ++i) out.push_back(generate_scene({size, size}, seed, i).sample);
  return out;
}

TrainConfig small_train_config() {
  TrainConfig cfg;
  cfg.model = cmi::testing::tiny_config(64, 4);
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  return cfg;
}

void expect_same_parameters(CascadedSaliencyNet& a, CascadedSaliencyNet& b) {
  auto pa = a->named_parameters();
  auto pb = b->named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (const auto& p : pa) EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr, 5e-5);
  EXPECT_EQ(cfg.decay_step, 80);
  EXPECT_DOUBLE_EQ(cfg.decay_rate, 0.1);
  EXPECT_EQ(cfg.batch_size, 5);
  EXPECT_EQ(cfg.epochs, 100);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 0), 5e-5);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 79), 5e-5);
  EXPECT_NEAR(learning_rate_at(cfg, 80), 5e-6, 1e-18);
  EXPECT_NEAR(learning_rate_at(cfg, 99), 5e-6, 1e-18);
  EXPECT_NEAR(learning_rate_at(cfg, 160), 5e-7, 1e-19);
}

TEST(TrainConfigJson, RoundTripAndUnknownKeys) {
  auto cfg = small_train_config();
  cfg.ablation = Variant::kSs;
  cfg.model.seed = 17;
  auto back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"learning_rate", 1.0}}), Error);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"model", {{"seed", 1}}}}), Error);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"epochs", "many"}}), Error);
  auto seeded = train_config_from_json(nlohmann::json{{"seed", 9}, {"backbone", "tiny"}});
  EXPECT_EQ(seeded.model.seed, 9);
}

TEST(TrainConfigJson, Validation) {
  auto cfg = small_train_config();
  cfg.optimizer = "sgd";
  EXPECT_THROW(cfg.validate(), Error);
  cfg = small_train_config();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Trainer, OneEpochFiveSamplesBatchFiveIsOneStep) {
  auto cfg = small_train_config();
  cfg.epochs = 1;
  cfg.batch_size = 5;
  Trainer t(cfg, synth_samples(5));
  t.run();
  ASSERT_EQ(t.log().steps.size(), 1u);
  EXPECT_EQ(t.log().steps[0].step, 1);
  ASSERT_EQ(t.log().epochs.size(), 1u);
  EXPECT_EQ(t.log().epochs[0].steps, 1);
  EXPECT_TRUE(t.log().epochs[0].cosine_diag.has_value());
}

TEST(Trainer, BaseVariantLogsZeroMi) {
  auto cfg = small_train_config();
  cfg.ablation = Variant::kBase;
  Trainer t(cfg, synth_samples(4));
  t.run();
  ASSERT_FALSE(t.log().steps.empty());
  for (const auto& s : t.log().steps) EXPECT_EQ(s.loss.mi_total, 0.0);
  EXPECT_FALSE(t.log().epochs[0].cosine_diag.has_value());
}

TEST(Trainer, LossDecreasesOnTinyData) {
  auto cfg = small_train_config();
  cfg.epochs = 8;
  Trainer t(cfg, synth_samples(4));
  t.run();
  const auto& e = t.log().epochs;
  EXPECT_LT(e.back().mean_loss.total, e.front().mean_loss.total);
}

TEST(Trainer, MaxStepsStopsEarly) {
  auto cfg = small_train_config();
  cfg.epochs = 10;
  cfg.max_steps = 3;
  Trainer t(cfg, synth_samples(4));
  t.run();
  EXPECT_EQ(t.step(), 3);
  EXPECT_EQ(t.log().steps.size(), 3u);
}

TEST(Trainer, IdenticalRunsGiveIdenticalWeights) {
  auto cfg = small_train_config();
  auto data = synth_samples(4);
  Trainer a(cfg, data), b(cfg, data);
  a.run();
  b.run();
  expect_same_parameters(a.model(), b.model());
  for (std::size_t i = 0; i < a.log().steps.size(); ++i) {
    EXPECT_EQ(a.log().steps[i].loss.total, b.log().steps[i].loss.total);
  }
}

TEST(Trainer, ResumeReplaysUninterruptedRun) {
  TempDir dir("resume");
  auto cfg = small_train_config();
  cfg.epochs = 4;
  auto data = synth_samples(4);

  Trainer full(cfg, data);
  full.run();

  Trainer first(cfg, data);
  first.run(2);
  first.save_checkpoint(dir / "half.pt");

  Trainer resumed(cfg, data);
  resumed.load_checkpoint(dir / "half.pt");
  EXPECT_EQ(resumed.epoch(), 2);
  EXPECT_EQ(resumed.step(), first.step());
  resumed.run();

  const auto& ref = full.log().steps;
  const auto& tail = resumed.log().steps;
  ASSERT_EQ(first.log().steps.size() + tail.size(), ref.size());
  for (std::size_t i = 0; i < tail.size(); ++i) {
    const auto& r = ref[first.log().steps.size() + i];
    EXPECT_EQ(tail[i].step, r.step);
    EXPECT_NEAR(tail[i].loss.total, r.loss.total, 1e-5 * std::abs(r.loss.total));
  }
  expect_same_parameters(full.model(), resumed.model());
}

TEST(Trainer, CheckpointDirGetsCheckpointAndLog) {
  TempDir dir("ckdir");
  auto cfg = small_train_config();
  cfg.checkpoint_dir = (dir / "run").string();
  Trainer t(cfg, synth_samples(4));
  t.run();
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "checkpoint.pt"));
  std::ifstream log(dir / "run" / "loss_log.jsonl");
  int steps = 0, epochs = 0;
  for (std::string line; std::getline(log, line);) {
    auto j = nlohmann::json::parse(line);
    if (j["type"] == "step") ++steps;
    if (j["type"] == "epoch") {
      ++epochs;
      for (auto key : {"ce_final", "ce_fused", "ce_rgb", "ce_depth", "mi_total", "total",
                       "cosine_diag", "lr"}) {
        EXPECT_TRUE(j.contains(key)) << key;
      }
    }
  }
  EXPECT_EQ(steps, 4);
  EXPECT_EQ(epochs, 2);
}

TEST(Trainer, NonFiniteInputAbortsWithNumericError) {
  TempDir dir("nan");
  auto cfg = small_train_config();
  cfg.checkpoint_dir = dir.path().string();
  auto data = synth_samples(2);
  Trainer t(cfg, data);
  t.run(1);
  auto good = read_checkpoint_info(dir / "checkpoint.pt");
  EXPECT_EQ(good.epoch, 1);

  // Blow up the weights: the next forward produces non-finite values.
  {
    torch::NoGradGuard ng;
    for (auto& p : t.model()->parameters()) p.fill_(std::numeric_limits<float>::infinity());
  }
  try {
    t.run();
    FAIL() << "expected a numeric error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
  // last good checkpoint retained
  EXPECT_EQ(read_checkpoint_info(dir / "checkpoint.pt").epoch, 1);
}

TEST(Trainer, RejectsSamplesWithoutGt) {
  auto data = synth_samples(2);
  data[1].gt = torch::Tensor();
  EXPECT_THROW(Trainer(small_train_config(), data), Error);
}

TEST(Checkpoint, RoundTripRestoresModel) {
  TempDir dir("ckpt");
  auto cfg = small_train_config();
  cfg.ablation = Variant::kSs;
  Trainer t(cfg, synth_samples(2));
  t.run(1);
  t.save_checkpoint(dir / "c.pt");
  CheckpointInfo info;
  auto model = load_model(dir / "c.pt", &info);
  EXPECT_EQ(info.epoch, 1);
  EXPECT_EQ(info.step, 1);
  EXPECT_EQ(info.config.ablation, Variant::kSs);
  EXPECT_EQ(model->variant(), Variant::kSs);
  expect_same_parameters(t.model(), model);
}

TEST(Checkpoint, BadVersionRejected) {
  TempDir dir("ckpt");
  torch::serialize::OutputArchive ar;
  ar.write("format_version", torch::tensor(int64_t{999}));
  ar.save_to((dir / "future.pt").string());
  try {
    read_checkpoint_info(dir / "future.pt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersion);
  }
  std::ofstream(dir / "junk.pt") << "not an archive";
  EXPECT_THROW(read_checkpoint_info(dir / "junk.pt"), Error);
}

TEST(Checkpoint, ConfigMismatchOnResume) {
  TempDir dir("ckpt");
  auto cfg = small_train_config();
  Trainer t(cfg, synth_samples(2));
  t.save_checkpoint(dir / "c.pt");
  auto other = cfg;
  other.model.embed_dim = 3;
  Trainer u(other, synth_samples(2));
  try {
    u.load_checkpoint(dir / "c.pt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kVersion);
  }
}
