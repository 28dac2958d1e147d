#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "ptd/error.hpp"
#include "ptd/presets.hpp"
#include "ptd/pruning.hpp"
#include "ptd/verify.hpp"

using namespace ptd;

namespace {

ArchitectureSpec dense_chain(std::vector<int> widths, bool bias = false) {
  ArchitectureSpec arch{"chain", {widths.front(), 1, 1}, widths.back(), {{Flatten{}}}};
  for (std::size_t i = 1; i < widths.size(); ++i) {
    if (i > 1) arch.layers.push_back({ReLU{}});
    arch.layers.push_back({Dense{widths[i - 1], widths[i], bias}});
  }
  validate(arch);
  return arch;
}

LabeledDataset tiny_blobs(std::uint64_t seed) {
  BlobSpec b;
  b.classes = 4;
  b.height = b.width = 8;
  b.per_class = 12;
  b.seed = seed;
  return split_train_val(synthetic_blobs(b), 0.25, seed);
}

}  // namespace

TEST(Sparsity, Schedule) {
  EXPECT_EQ(schedule_sparsity(2, 0.2), 1 - 0.8 * 0.8);
  EXPECT_NEAR(schedule_sparsity(2, 0.2), 0.36, 1e-15);
  EXPECT_NEAR(schedule_sparsity(7, 0.2), 0.7902848, 1e-12);
  EXPECT_EQ(iterations_for_target(0.36), 2);
  EXPECT_EQ(iterations_for_target(0.59), 4);
  EXPECT_EQ(iterations_for_target(0.79), 7);
  EXPECT_EQ(iterations_for_target(0.0), 0);
  EXPECT_EQ(iterations_for_target(0.5), 4);
  EXPECT_THROW(iterations_for_target(1.0), ConfigError);
}

TEST(Sparsity, AllOnesIsZero) {
  const auto arch = presets::mini_vgg();
  EXPECT_EQ(sparsity(MaskSet::all_ones(param_layout(arch))), 0.0);
}

TEST(MagnitudeMask, SingleLayerOrderStatistics) {
  const auto arch = dense_chain({4, 1});
  auto params = init_params<double>(arch, 0);
  params.at("layers.1.weight").values() = {0.1, -0.5, 0.3, -0.2};
  const auto masks = global_magnitude_mask(params, 0.5, MaskSet::all_ones(params.layout()));
  EXPECT_EQ(masks.layers[0].keep, (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(MagnitudeMask, TargetZeroIsNoOp) {
  const auto arch = dense_chain({4, 3, 2});
  const auto params = init_params<double>(arch, 0);
  const auto ones = MaskSet::all_ones(params.layout());
  EXPECT_EQ(global_magnitude_mask(params, 0.0, ones), ones);
}

TEST(MagnitudeMask, GlobalNotPerLayer) {
  const auto arch = dense_chain({1, 2, 1});
  auto params = init_params<double>(arch, 0);
  params.at("layers.1.weight").values() = {1.0, 0.01};
  params.at("layers.3.weight").values() = {0.5, 0.02};
  const auto masks = global_magnitude_mask(params, 0.5, MaskSet::all_ones(params.layout()));
  EXPECT_EQ(masks.layers[0].keep, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(masks.layers[1].keep, (std::vector<std::uint8_t>{1, 0}));
}

TEST(MagnitudeMask, BelowCurrentSparsityThrows) {
  const auto arch = dense_chain({4, 3, 2});
  const auto params = init_params<double>(arch, 0);
  const auto half = global_magnitude_mask(params, 0.5, MaskSet::all_ones(params.layout()));
  EXPECT_THROW(global_magnitude_mask(params, 0.2, half), ConfigError);
}

TEST(MagnitudeMask, MatchesBruteForceSortWithTies) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const auto arch = dense_chain({5, 7, 4, 3});
    auto params = init_params<double>(arch, static_cast<std::uint64_t>(trial));
    // Quantize so ties are common.
    for (auto& e : params)
      for (auto& v : e.value.values()) v = std::round(v * 4) / 4;
    auto masks = MaskSet::all_ones(params.layout());
    const double first = 0.1 + 0.3 * static_cast<double>(rng() % 100) / 100;
    masks = global_magnitude_mask(params, first, masks);
    const double target = first + 0.3;
    const auto out = global_magnitude_mask(params, target, masks);

    // Oracle: sort kept coordinates by (|w|, layer, index) and prune the head.
    std::vector<std::tuple<double, std::size_t, std::size_t>> pool;
    for (std::size_t l = 0; l < masks.layers.size(); ++l) {
      const auto& w = params.at(masks.layers[l].name).values();
      for (std::size_t i = 0; i < w.size(); ++i)
        if (masks.layers[l].keep[i]) pool.emplace_back(std::abs(w[i]), l, i);
    }
    std::sort(pool.begin(), pool.end());
    auto expect = masks;
    const auto goal = static_cast<std::size_t>(std::llround(target * static_cast<double>(masks.total())));
    for (std::size_t k = 0; k < goal - masks.pruned(); ++k) {
      expect.layers[std::get<1>(pool[k])].keep[std::get<2>(pool[k])] = 0;
    }
    EXPECT_EQ(out, expect);
    EXPECT_TRUE(masks_monotone(masks, out));
    EXPECT_LE(std::abs(static_cast<double>(out.pruned()) - target * static_cast<double>(out.total())), 1.0);
  }
}

TEST(Masks, ApplyIsIdempotentAndExact) {
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  auto params = init_params<float>(arch, 3);
  const auto masks = global_magnitude_mask(params, 0.6, MaskSet::all_ones(params.layout()));
  apply_masks(params, masks);
  const auto once = params;
  apply_masks(params, masks);
  EXPECT_TRUE(params == once);
  EXPECT_TRUE(masked_weights_zero(params, masks));
  for (const auto& m : masks.layers) {
    const auto& w = params.at(m.name).values();
    for (std::size_t i = 0; i < w.size(); ++i)
      if (!m.keep[i]) EXPECT_EQ(std::signbit(w[i]), false);
  }
}

TEST(Masks, BiasesAndBnHaveNoMask) {
  const auto arch = presets::mini_vgg();
  const auto ones = MaskSet::all_ones(param_layout(arch));
  for (const auto& m : ones.layers) EXPECT_NE(m.name.find(".weight"), std::string::npos);
  EXPECT_EQ(ones.layers.size(), 7u);
}

TEST(IterativePrune, ZeroIterationsIsIdentity) {
  const auto data = tiny_blobs(0);
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  auto ckpt = MaskedCheckpoint<float>::fresh(arch, 1);
  PruneConfig cfg;
  cfg.iterations = 0;
  const auto out = iterative_prune_lr_rewind(ckpt, cfg, data);
  EXPECT_TRUE(out.checkpoint == ckpt);
  EXPECT_TRUE(out.iterations.empty());
}

TEST(IterativePrune, TwoIterationsExactAndZero) {
  const auto data = tiny_blobs(1);
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  PruneConfig cfg;
  cfg.iterations = 2;
  cfg.post_epochs = 2;
  cfg.post_batch_size = 8;
  cfg.post_lr = 0.05;
  cfg.post_lr_drops = {1};
  const auto r = prune_exactness(arch, data, cfg, 0);
  ASSERT_EQ(r.sparsities.size(), 2u);
  EXPECT_TRUE(r.sparsity_ok);
  EXPECT_TRUE(r.zeros_ok);
  EXPECT_TRUE(r.monotone_ok);
  EXPECT_NEAR(r.sparsities.back(), 0.36, r.tolerance);
}

TEST(IterativePrune, ResumesFromPartiallyPrunedCheckpoint) {
  const auto data = tiny_blobs(2);
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  PruneConfig cfg;
  cfg.iterations = 2;
  cfg.post_epochs = 0;
  auto first = iterative_prune_lr_rewind(MaskedCheckpoint<float>::fresh(arch, 0), cfg, data);
  cfg.iterations = 4;
  auto second = iterative_prune_lr_rewind(first.checkpoint, cfg, data);
  EXPECT_EQ(second.iterations.size(), 2u);
  EXPECT_NEAR(second.checkpoint.sparsity(), schedule_sparsity(4, 0.2), 1.0 / second.checkpoint.masks.total());
  EXPECT_TRUE(masks_monotone(first.checkpoint.masks, second.checkpoint.masks));
}

TEST(PruneConfig, DefaultsAndValidation) {
  PruneConfig cfg;
  EXPECT_EQ(cfg.rate_per_iteration, 0.2);
  EXPECT_EQ(cfg.post_epochs, 130);
  EXPECT_EQ(cfg.post_lr_drops, (std::vector<int>{39, 84}));
  cfg.rate_per_iteration = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PruneConfig{};
  cfg.post_lr_drops = {84, 39};
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_prune_method("synflow"), PruneMethod::SynFlow);
  EXPECT_THROW(parse_prune_method("random"), ConfigError);
}

TEST(SynFlow, TwoWeightChainScoresEqual) {
  const auto arch = dense_chain({1, 1, 1});
  auto params = init_params<double>(arch, 0);
  params.at("layers.1.weight")[0] = 0.7;
  params.at("layers.3.weight")[0] = -3.0;
  const auto scores = synflow_scores(arch, params, MaskSet::all_ones(params.layout()));
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_NEAR(scores[0][0], 2.1, 1e-12);
  EXPECT_NEAR(scores[1][0], 2.1, 1e-12);
}

TEST(SynFlow, TargetZeroIsAllOnes) {
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  const auto params = init_params<float>(arch, 0);
  EXPECT_EQ(synflow_prune(arch, params, 0.0, 10), MaskSet::all_ones(params.layout()));
}

TEST(SynFlow, SinglePassMatchesIndependentOracle) {
  const auto arch = dense_chain({4, 5, 3, 2}, true);
  const auto params = init_params<double>(arch, 0);
  const auto& w1 = params.at("layers.1.weight").values();
  const auto& w2 = params.at("layers.3.weight").values();
  const auto& w3 = params.at("layers.5.weight").values();
  // Forward of |W| on ones, then backward of R = sum of outputs.
  const std::vector<double> a0(4, 1.0);
  auto mat_vec = [](const std::vector<double>& w, const std::vector<double>& x, std::size_t out) {
    std::vector<double> y(out, 0.0);
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < x.size(); ++i) y[o] += std::abs(w[o * x.size() + i]) * x[i];
    return y;
  };
  auto vec_mat = [](const std::vector<double>& w, const std::vector<double>& g, std::size_t in) {
    std::vector<double> y(in, 0.0);
    for (std::size_t o = 0; o < g.size(); ++o)
      for (std::size_t i = 0; i < in; ++i) y[i] += std::abs(w[o * in + i]) * g[o];
    return y;
  };
  const auto a1 = mat_vec(w1, a0, 5), a2 = mat_vec(w2, a1, 3);
  const std::vector<double> g3(2, 1.0);
  const auto g2 = vec_mat(w3, g3, 3), g1 = vec_mat(w2, g2, 5);
  auto layer_scores = [](const std::vector<double>& w, const std::vector<double>& g, const std::vector<double>& a) {
    std::vector<double> s(w.size());
    for (std::size_t o = 0; o < g.size(); ++o)
      for (std::size_t i = 0; i < a.size(); ++i) s[o * a.size() + i] = std::abs(w[o * a.size() + i]) * g[o] * a[i];
    return s;
  };
  const std::vector<std::vector<double>> oracle = {layer_scores(w1, g1, a0), layer_scores(w2, g2, a1),
                                                   layer_scores(w3, g3, a2)};
  const auto ones = MaskSet::all_ones(params.layout());
  const auto scores = synflow_scores(arch, params, ones);
  ASSERT_EQ(scores.size(), 3u);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t i = 0; i < oracle[l].size(); ++i) EXPECT_NEAR(scores[l][i], oracle[l][i], 1e-12 * (1 + oracle[l][i]));

  std::vector<std::tuple<double, std::size_t, std::size_t>> pool;
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t i = 0; i < oracle[l].size(); ++i) pool.emplace_back(oracle[l][i], l, i);
  std::sort(pool.begin(), pool.end());
  auto expect = ones;
  const auto goal = static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(ones.total())));
  for (std::size_t k = 0; k < goal; ++k) expect.layers[std::get<1>(pool[k])].keep[std::get<2>(pool[k])] = 0;
  EXPECT_EQ(synflow_prune(arch, params, 0.5, 1), expect);
}

TEST(SynFlow, SignInvariant) {
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  auto params = init_params<double>(arch, 4);
  const auto ones = MaskSet::all_ones(params.layout());
  const auto a = synflow_scores(arch, params, ones);
  for (auto& e : params)
    if (e.info.prunable())
      for (auto& v : e.value.values()) v = -v;
  const auto b = synflow_scores(arch, params, ones);
  for (std::size_t l = 0; l < a.size(); ++l)
    for (std::size_t i = 0; i < a[l].size(); ++i) EXPECT_NEAR(a[l][i], b[l][i], 1e-12 * (1 + std::abs(a[l][i])));
}

TEST(SynFlow, IterativeReachesTargetMonotonically) {
  const auto arch = presets::mini_resnet(4, {3, 8, 8});
  const auto params = init_params<float>(arch, 1);
  const auto m = synflow_prune(arch, params, 0.79, 20);
  EXPECT_NEAR(sparsity(m), 0.79, 1.0 / m.total());
}

TEST(Verify, PruningCheckPasses) { EXPECT_TRUE(check_pruning(0).passed); }
