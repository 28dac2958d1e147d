#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ptd/error.hpp"
#include "ptd/presets.hpp"
#include "ptd/pruning.hpp"
#include "ptd/student.hpp"
#include "ptd/verify.hpp"

using namespace ptd;
using presets::kPool;

namespace {

presets::VggPlan vgg_plan(const std::vector<int>& ch) {
  return {ch[0], ch[1], kPool, ch[2], ch[3], kPool, ch[4], ch[5], ch[6], ch[7], kPool,
          ch[8], ch[9], ch[10], ch[11], kPool, ch[12], ch[13], ch[14], ch[15], kPool};
}

}  // namespace

TEST(CountParams, Vgg19PerLayerRows) {
  const auto counts = count_params(presets::vgg19());
  const auto rows = counts.weight_layers();
  const auto& golden = vgg19_cifar100_weights();
  ASSERT_EQ(rows.size(), golden.size());
  long long sum = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].weights, golden[i]) << rows[i].label;
    sum += golden[i];
  }
  EXPECT_EQ(rows[0].label, "conv-0");
  EXPECT_EQ(rows[0].weights, 1728);
  EXPECT_EQ(rows.back().label, "fc");
  // The rows add up to 20,070,080; the printed table total reads 20,070,088.
  EXPECT_EQ(counts.total_weights, sum);
  EXPECT_EQ(counts.total_weights, 20070080);
}

TEST(CountParams, BiasAndBnReportedSeparately) {
  const auto counts = count_params(presets::vgg19());
  EXPECT_EQ(counts.total_biases, 5504 + 100);
  EXPECT_EQ(counts.total_bn, 2 * 5504);
}

TEST(CountParams, ReferenceStudentChannelsRecount) {
  const auto arch = presets::vgg("s", vgg_plan({40, 49, 111, 97, 225, 187, 224, 170, 356, 233, 220, 99, 111, 84, 297, 122}),
                                 {3, 32, 32}, 100);
  EXPECT_EQ(count_params(arch).total_weights, 4153613);
}

TEST(CountParams, ComparisonStudents) {
  EXPECT_EQ(count_params(presets::vgg19_cl1()).total_weights, 11001536);
  EXPECT_EQ(count_params(presets::vgg19_cl2()).total_weights, 9915146);
}

TEST(CountMacs, Examples) {
  ArchitectureSpec conv{"c", {3, 32, 32}, 64 * 32 * 32, {{Conv2d{3, 64, 3, 3, 1, 1, true}}, {Flatten{}}}};
  EXPECT_EQ(count_macs(conv).total_macs, 1769472);
  ArchitectureSpec one{"o", {5, 1, 1}, 7, {{Conv2d{5, 7, 1, 1, 1, 0, false}}, {Flatten{}}}};
  EXPECT_EQ(count_macs(one).total_macs, 35);
  const double vgg = static_cast<double>(count_macs(presets::vgg19()).total_macs);
  EXPECT_EQ(vgg, 398182400.0);
  EXPECT_LE(std::abs(vgg - 399e6) / 399e6, 0.02);
}

TEST(CountMacs, AuxiliaryOpsExcludedFromHeadline) {
  const auto m = count_macs(presets::vgg19());
  long long weighted = 0;
  for (const auto& l : m.weight_layers()) weighted += l.macs;
  EXPECT_EQ(weighted, m.total_macs);
  EXPECT_GT(m.total_aux_ops, 0);
}

TEST(Census, DenseVgg19MatchesRows) {
  const auto ckpt = MaskedCheckpoint<float>::fresh(presets::vgg19(), 0);
  const auto c = census(ckpt);
  ASSERT_EQ(c.layers.size(), 17u);
  for (std::size_t i = 0; i < 17; ++i) EXPECT_EQ(c.layers[i].nonzero, vgg19_cifar100_weights()[i]);
  EXPECT_EQ(c.layers.back().kind, CensusKind::Classifier);
}

TEST(Census, MasklessCheckpointThrows) {
  auto ckpt = MaskedCheckpoint<float>::fresh(presets::mini_vgg(), 0);
  ckpt.masks = MaskSet{};
  EXPECT_THROW(census(ckpt), ConfigError);
}

TEST(Census, FullyPrunedLayerCountsZeroAndConserves) {
  auto ckpt = MaskedCheckpoint<float>::fresh(presets::mini_vgg(), 0);
  for (auto& k : ckpt.masks.layers[2].keep) k = 0;
  ckpt.masks = global_magnitude_mask(ckpt.params, 0.6, ckpt.masks);
  const auto c = census(ckpt);
  EXPECT_EQ(c.layers[2].nonzero, 0);
  EXPECT_EQ(static_cast<std::size_t>(c.total_nonzero()), ckpt.masks.kept());
}

TEST(Solver, Vgg19SparseFixture) {
  const auto vgg = presets::vgg19();
  const auto plan = solve_student_channels(vgg, census_from_counts(vgg, vgg19_sparse79_census()));
  EXPECT_EQ(plan.channels.front(), 3);
  const std::vector<int> expect{40, 50, 111, 98, 225, 188, 224, 171, 356, 234, 219, 100, 111, 85, 295, 124};
  EXPECT_EQ(std::vector<int>(plan.channels.begin() + 1, plan.channels.end()), expect);
  EXPECT_EQ(plan.rows[0].channels, 40);
  EXPECT_EQ(plan.rows[0].student_params, 1080);
  EXPECT_EQ(plan.total_weights, 4177870);
  EXPECT_LE(std::abs(static_cast<double>(plan.total_weights) - 4153613.0) / 4153613.0, 0.02);
  EXPECT_EQ(count_params(plan.arch).total_weights, plan.total_weights);
  EXPECT_NO_THROW(validate(plan.arch));
}

TEST(Solver, IdentityFixedPoint) {
  for (const auto& arch : {presets::vgg19(), presets::mini_vgg(), presets::resnet18(), presets::mini_resnet()}) {
    const auto plan = solve_student_channels(arch, census(MaskedCheckpoint<float>::fresh(arch, 0)));
    auto renamed = plan.arch;
    renamed.name = arch.name;
    EXPECT_EQ(renamed, arch) << arch.name;
  }
}

TEST(Solver, RoundingBoundAndClamp) {
  std::mt19937_64 rng(5);
  const auto arch = presets::mini_vgg();
  const auto dense = census(MaskedCheckpoint<float>::fresh(arch, 0));
  for (int t = 0; t < 200; ++t) {
    std::vector<long long> counts;
    for (const auto& e : dense.layers) counts.push_back(static_cast<long long>(rng() % static_cast<unsigned long long>(e.capacity + 1)));
    const auto plan = solve_student_channels(arch, census_from_counts(arch, counts));
    for (std::size_t i = 0; i + 1 < plan.channels.size(); ++i) {
      const long long a_cprev = 9LL * plan.channels[i];
      const long long got = a_cprev * plan.channels[i + 1];
      EXPECT_GE(plan.channels[i + 1], 1);
      if (plan.channels[i + 1] > 1) {
        EXPECT_LE(2 * std::llabs(got - counts[i]), a_cprev);
      } else {
        EXPECT_LE(std::llabs(got - counts[i]), a_cprev + a_cprev / 2);
      }
    }
    EXPECT_EQ(solve_student_channels(arch, census_from_counts(arch, counts)).channels, plan.channels);
  }
}

TEST(Solver, ResidualBlocksShareOneWidth) {
  const auto arch = presets::mini_resnet();
  auto ckpt = MaskedCheckpoint<float>::fresh(arch, 0);
  ckpt.masks = global_magnitude_mask(ckpt.params, 0.7, ckpt.masks);
  const auto plan = solve_student_channels(arch, census(ckpt));
  EXPECT_NO_THROW(validate(plan.arch));
  EXPECT_EQ(plan.arch.classes, arch.classes);
}

TEST(Solver, CensusMismatchThrows) {
  const auto vgg = presets::vgg19();
  EXPECT_THROW(census_from_counts(vgg, {1, 2, 3}), ConfigError);
}
