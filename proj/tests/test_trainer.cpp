#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ptd/error.hpp"
#include "ptd/network.hpp"
#include "ptd/parallel.hpp"
#include "ptd/presets.hpp"
#include "ptd/pruning.hpp"
#include "ptd/trainer.hpp"

using namespace ptd;

namespace {

struct DeterministicScope {
  DeterministicScope() { parallel::set_deterministic(true); }
  ~DeterministicScope() { parallel::set_deterministic(false); }
};

ParamSet<double> scalar_param(double w) {
  ParamInfo info{"w", "dense-0", {1}, ParamRole::Weight, 1};
  return ParamSet<double>({{info, Tensor<double>({1}, std::vector<double>{w})}});
}

LabeledDataset blobs(int classes, int per_class, double noise, std::uint64_t seed, int hw = 8) {
  BlobSpec b;
  b.classes = classes;
  b.height = b.width = hw;
  b.per_class = per_class;
  b.noise_std = noise;
  b.seed = seed;
  auto ds = hold_out_test(synthetic_blobs(b), 0.2, seed);
  return normalize(split_train_val(std::move(ds), 0.1, seed), {0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
}

ArchitectureSpec linear_net(const Shape& input, int classes) {
  ArchitectureSpec arch{"linear", input, classes, {{Flatten{}}, {Dense{1, classes, true}}}};
  return rewire(std::move(arch));
}

/// Flatten -> Dense with zero weights and a bias favoring `cls`.
MaskedCheckpoint<float> constant_model(const Shape& input, int classes, int cls) {
  auto ckpt = MaskedCheckpoint<float>::fresh(linear_net(input, classes), 0);
  ckpt.params.at("layers.1.weight").fill(0);
  auto& b = ckpt.params.at("layers.1.bias");
  b.fill(0);
  b[static_cast<std::size_t>(cls)] = 1;
  return ckpt;
}

LabeledDataset constant_labels(int n, int label, int classes) {
  LabeledDataset ds;
  ds.images = Tensor<float>({n, 1, 2, 2}, 0.5f);
  ds.labels.assign(static_cast<std::size_t>(n), label);
  ds.classes = classes;
  for (int i = 0; i < n; ++i) ds.splits.test.push_back(static_cast<std::size_t>(i));
  return ds;
}

TrainConfig quick(int epochs, std::uint64_t seed = 0) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.lr_drops = {};
  cfg.weight_decay = 5e-4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(LrSchedule, VggPreset) {
  TrainConfig cfg;  // defaults are the VGG training row
  EXPECT_EQ(lr_at_epoch(cfg, 0), 0.1);
  EXPECT_NEAR(lr_at_epoch(cfg, 59), 0.1, 1e-15);
  EXPECT_NEAR(lr_at_epoch(cfg, 60), 0.02, 1e-15);
  EXPECT_NEAR(lr_at_epoch(cfg, 199), 0.0008, 1e-15);
  EXPECT_THROW(lr_at_epoch(cfg, 200), ConfigError);
  double prev = 1;
  for (int e = 0; e < cfg.epochs; ++e) {
    EXPECT_LE(lr_at_epoch(cfg, e), prev);
    prev = lr_at_epoch(cfg, e);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.lr_drops = {60, 60};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.lr_drops = {200};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Sgd, PlainStep) {
  auto w = scalar_param(1.0);
  auto g = scalar_param(0.1);
  auto v = w.zeros_like();
  sgd_nesterov_step(w, g, v, 0.1, 0.0, 0.0);
  EXPECT_NEAR(w[0].value[0], 0.99, 1e-15);
}

TEST(Sgd, TwoStepNesterovOracle) {
  // Hand-unrolled recurrence: v1 = 1, w1 = -0.1 * (1 + 0.9) = -0.19;
  // v2 = 1.9, w2 = -0.19 - 0.1 * (1 + 1.71) = -0.461.
  auto w = scalar_param(0.0);
  const auto g = scalar_param(1.0);
  auto v = w.zeros_like();
  sgd_nesterov_step(w, g, v, 0.1, 0.9, 0.0);
  EXPECT_NEAR(w[0].value[0], -0.19, 1e-12);
  sgd_nesterov_step(w, g, v, 0.1, 0.9, 0.0);
  EXPECT_NEAR(w[0].value[0], -0.461, 1e-9);
  EXPECT_NEAR(v[0].value[0], 1.9, 1e-12);
}

TEST(Sgd, MaskedCoordinateStaysZero) {
  auto w = scalar_param(0.0);
  const auto g = scalar_param(-7.0);
  auto v = w.zeros_like();
  MaskSet masks{{LayerMask{"w", {0}}}};
  for (int i = 0; i < 3; ++i) sgd_nesterov_step(w, g, v, 0.1, 0.9, 5e-4, &masks);
  EXPECT_EQ(w[0].value[0], 0.0);
  EXPECT_EQ(v[0].value[0], 0.0);
}

TEST(Sgd, NonFiniteUpdateThrows) {
  auto w = scalar_param(0.0);
  const auto g = scalar_param(std::numeric_limits<double>::infinity());
  auto v = w.zeros_like();
  EXPECT_THROW(sgd_nesterov_step(w, g, v, 0.1, 0.9, 0.0), NumericError);
}

TEST(Train, ZeroEpochsReturnsInit) {
  const auto data = blobs(3, 10, 0.1, 0);
  const auto arch = presets::mini_vgg(3, {3, 8, 8});
  auto cfg = quick(0);
  const auto r = train<float>(arch, data, cfg);
  EXPECT_TRUE(r.checkpoint.params == init_params<float>(arch, cfg.seed));
  EXPECT_TRUE(r.report.epochs.empty());
}

TEST(Train, SeparableBlobsLinearModel) {
  const auto data = blobs(2, 100, 0.1, 3);
  const auto r = train<float>(linear_net({3, 8, 8}, 2), data, quick(20));
  EXPECT_GE(evaluate(r.checkpoint, data, SplitName::Val), 0.99);
}

TEST(Train, LinearProbeOnTenClassBlobs) {
  const auto data = blobs(10, 40, 0.1, 4);
  const auto r = train<float>(linear_net({3, 8, 8}, 10), data, quick(20));
  EXPECT_GE(evaluate(r.checkpoint, data, SplitName::Test), 0.95);
}

TEST(Train, BitIdenticalRerun) {
  DeterministicScope det;
  const auto data = blobs(3, 12, 0.3, 1);
  const auto arch = presets::mini_resnet(3, {3, 8, 8});
  const auto a = train<float>(arch, data, quick(2, 9));
  const auto b = train<float>(arch, data, quick(2, 9));
  EXPECT_TRUE(a.checkpoint == b.checkpoint);
  EXPECT_EQ(a.report.epochs, b.report.epochs);
}

TEST(Train, BestCheckpointContract) {
  const auto data = blobs(4, 15, 0.8, 2);
  const auto r = train<float>(presets::mini_vgg(4, {3, 8, 8}), data, quick(6));
  double best = -1;
  int first = -1;
  for (const auto& e : r.report.epochs)
    if (e.val_acc > best) {
      best = e.val_acc;
      first = e.epoch;
    }
  EXPECT_EQ(r.report.best_val_epoch, first);
  EXPECT_EQ(evaluate(r.checkpoint, data, SplitName::Val), best);
  EXPECT_EQ(r.checkpoint.meta.metrics.at("val_acc"), best);
}

TEST(Train, MaskDisciplinePreservesSparsity) {
  const auto data = blobs(3, 12, 0.3, 5);
  const auto arch = presets::mini_vgg(3, {3, 8, 8});
  auto init = MaskedCheckpoint<float>::fresh(arch, 0);
  init.masks = global_magnitude_mask(init.params, 0.5, init.masks);
  apply_masks(init.params, init.masks);
  const auto r = train<float>(arch, data, quick(2), init);
  EXPECT_EQ(r.checkpoint.masks, init.masks);
  EXPECT_EQ(r.checkpoint.sparsity(), init.sparsity());
  EXPECT_TRUE(masked_weights_zero(r.checkpoint.params, r.checkpoint.masks));
}

TEST(Distill, AlphaZeroEqualsTraining) {
  DeterministicScope det;
  const auto data = blobs(3, 12, 0.3, 6);
  const auto arch = presets::mini_vgg(3, {3, 8, 8});
  const auto teacher = MaskedCheckpoint<float>::fresh(arch, 42);
  const auto plain = train<float>(arch, data, quick(2, 1));
  const auto kd = distill<float>(arch, teacher, data, DistillConfig{0.0, 4.0, true}, quick(2, 1));
  EXPECT_EQ(plain.report.epochs, kd.report.epochs);
  EXPECT_TRUE(plain.checkpoint.params == kd.checkpoint.params);
}

TEST(Distill, SelfDistillationStartsAtTeacherEntropy) {
  const auto data = blobs(3, 12, 0.3, 7);
  const auto arch = linear_net({3, 8, 8}, 3);
  auto teacher = train<float>(arch, data, quick(2)).checkpoint;
  auto cfg = quick(1);
  cfg.batch_size = static_cast<int>(data.splits.train.size());
  const auto r = distill<float>(arch, teacher, data, DistillConfig{1.0, 1.0, true}, cfg, teacher);
  Network<float> net(arch);
  const auto logits = net.infer(teacher.params, gather_images<float>(data, data.splits.train));
  EXPECT_NEAR(r.report.initial_loss, mean_entropy(logits), 1e-5);
  EXPECT_TRUE(r.report.final_metrics.count("agreement"));
}

TEST(Distill, ClassMismatchThrows) {
  const auto data = blobs(3, 12, 0.3, 8);
  const auto teacher = MaskedCheckpoint<float>::fresh(presets::mini_vgg(4, {3, 8, 8}), 0);
  EXPECT_THROW(distill<float>(presets::mini_vgg(3, {3, 8, 8}), teacher, data, DistillConfig{}, quick(1)), ConfigError);
}

TEST(Distill, MismatchedTeacherStudentPairRuns) {
  const auto data = blobs(3, 12, 0.3, 9);
  const auto teacher = MaskedCheckpoint<float>::fresh(presets::mini_resnet(3, {3, 8, 8}), 0);
  const auto r = distill<float>(presets::mini_vgg(3, {3, 8, 8}), teacher, data, DistillConfig{}, quick(1));
  EXPECT_EQ(r.report.epochs.size(), 1u);
}

TEST(Evaluate, ConstantModel) {
  const auto model = constant_model({1, 2, 2}, 3, 0);
  EXPECT_EQ(evaluate(model, constant_labels(5, 0, 3), SplitName::Test), 1.0);
  EXPECT_EQ(evaluate(model, constant_labels(5, 2, 3), SplitName::Test), 0.0);
  EXPECT_THROW(evaluate(model, constant_labels(5, 0, 3), SplitName::Val), DataError);
}

TEST(Evaluate, TiesGoToLowestClass) {
  auto model = constant_model({1, 2, 2}, 3, 0);
  model.params.at("layers.1.bias").fill(0);
  EXPECT_EQ(predict(model, constant_labels(2, 0, 3), SplitName::Test), (std::vector<int>{0, 0}));
}

TEST(Evaluate, RandomLabelsUntrainedNetIsChance) {
  BlobSpec b;
  b.classes = 10;
  b.height = b.width = 8;
  b.per_class = 1000;
  auto ds = synthetic_blobs(b);
  std::mt19937_64 rng(0);
  for (auto& y : ds.labels) y = static_cast<int>(rng() % 10);
  ds.splits.test = ds.splits.train;
  ds.splits.train.clear();
  const auto model = MaskedCheckpoint<float>::fresh(presets::mini_vgg(10, {3, 8, 8}), 3);
  EXPECT_NEAR(evaluate(model, ds, SplitName::Test), 0.10, 0.02);
}

TEST(Agreement, Properties) {
  const auto data = blobs(4, 10, 0.5, 10);
  const auto a = MaskedCheckpoint<float>::fresh(presets::mini_vgg(4, {3, 8, 8}), 1);
  const auto b = MaskedCheckpoint<float>::fresh(presets::mini_resnet(4, {3, 8, 8}), 2);
  EXPECT_EQ(agreement(a, a, data, SplitName::Test), 1.0);
  EXPECT_EQ(agreement(a, b, data, SplitName::Test), agreement(b, a, data, SplitName::Test));
  const auto ds = constant_labels(4, 0, 3);
  EXPECT_EQ(agreement(constant_model({1, 2, 2}, 3, 0), constant_model({1, 2, 2}, 3, 1), ds, SplitName::Test), 0.0);
  EXPECT_THROW(agreement(constant_model({1, 2, 2}, 3, 0), constant_model({1, 2, 2}, 4, 1), ds, SplitName::Test),
               ConfigError);
}
