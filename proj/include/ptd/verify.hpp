#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptd/arch.hpp"
#include "ptd/checkpoint.hpp"
#include "ptd/data.hpp"
#include "ptd/gradcheck.hpp"
#include "ptd/pruning.hpp"

namespace ptd {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;
  double threshold = 0;
  std::string detail;
};

/// VGG19 / CIFAR-100 weight counts per layer (conv-0 .. conv-15, fc).
const std::vector<long long>& vgg19_cifar100_weights();
/// Nonzero counts of a 79%-sparse VGG19 used as the student-solver fixture.
const std::vector<long long>& vgg19_sparse79_census();
inline constexpr long long kVgg19StudentWeights = 4153613;
inline constexpr double kVgg19Macs = 399e6;
inline constexpr double kVgg19DblMacs = 1495e6;

/// Small network holding every layer kind (conv, BN, ReLU, max-pool, residual with
/// projection, flatten, hidden dense, classifier).
ArchitectureSpec gradcheck_arch();

CheckResult check_gradients(LossKind kind, std::uint64_t seed = 0, double step = 1e-5, double tolerance = 1e-4);
CheckResult check_kd_lsr(int instances = 1000, std::uint64_t seed = 0, double tolerance = 1e-10);

struct PruneExactness {
  std::vector<int> iterations;       // k per recorded iteration
  std::vector<double> sparsities;    // achieved
  std::vector<double> expected;      // 1 - (1 - rate)^k
  double tolerance = 0;              // 1 / T
  bool sparsity_ok = true;
  bool zeros_ok = true;
  bool monotone_ok = true;
};

/// Prunes `arch` (fresh init, seed) through `cfg.iterations` rounds with fine-tuning on
/// `data`, checking every round's sparsity, zeros and mask monotonicity.
PruneExactness prune_exactness(const ArchitectureSpec& arch, const LabeledDataset& data, const PruneConfig& cfg,
                               std::uint64_t seed = 0);
CheckResult check_pruning(std::uint64_t seed = 0);

/// Per-layer VGG19 weight rows, MAC totals and the student-solver fixture.
std::vector<CheckResult> check_golden_counts();

CheckResult check_smoothness(const MaskedCheckpoint<float>& dense, const MaskedCheckpoint<float>& pruned,
                             const LabeledDataset& data, double floor = -0.05);

/// Columns: check,passed,value,threshold,detail.
std::string checks_csv(const std::vector<CheckResult>& checks);

}  // namespace ptd
