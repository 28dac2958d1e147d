#include "ptd/verify.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "ptd/losses.hpp"
#include "ptd/presets.hpp"
#include "ptd/report.hpp"
#include "ptd/smoothness.hpp"
#include "ptd/student.hpp"

namespace ptd {

const std::vector<long long>& vgg19_cifar100_weights() {
  static const std::vector<long long> rows = {1728,    36864,   73728,   147456,  294912,  589824,
                                              589824,  589824,  1179648, 2359296, 2359296, 2359296,
                                              2359296, 2359296, 2359296, 2359296, 51200};
  return rows;
}

const std::vector<long long>& vgg19_sparse79_census() {
  static const std::vector<long long> rows = {1087,   18102,  50134,  97936,  198189, 381144, 379358, 344924, 548035,
                                              749074, 461873, 196359, 99450,  84433,  225496, 328861, 44546};
  return rows;
}

ArchitectureSpec gradcheck_arch() {
  // Convs feeding a BN carry no bias: BN cancels it, so its true gradient is exactly zero.
  ResidualBlock block;
  block.body = {{Conv2d{3, 4, 3, 3, 1, 1, false}}, {BatchNorm{4}}, {ReLU{}}, {Conv2d{4, 4, 3, 3, 1, 1, true}}};
  block.projection = Conv2d{3, 4, 1, 1, 1, 0, false};
  ArchitectureSpec arch{"gradcheck", {2, 6, 6}, 3, {}};
  arch.layers = {{Conv2d{2, 3, 3, 3, 1, 1, false}},
                 {BatchNorm{3}},
                 {ReLU{}},
                 {std::move(block)},
                 {MaxPool{2, 2}},
                 {Flatten{}},
                 {Dense{36, 5, true}},
                 {ReLU{}},
                 {Dense{5, 3, true}}};
  validate(arch);
  return arch;
}

CheckResult check_gradients(LossKind kind, std::uint64_t seed, double step, double tolerance) {
  const auto arch = gradcheck_arch();
  auto params = init_params<double>(arch, seed);
  std::mt19937_64 rng(seed + 17);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Nonzero BN shifts and biases so every parameter carries a generic gradient.
  for (auto& e : params) {
    if (!e.info.trainable() || e.info.role == ParamRole::Weight) continue;
    for (auto& v : e.value.values()) v += 0.1 * normal(rng);
  }
  const int n = 4;
  Tensor<double> batch({n, 2, 6, 6});
  for (auto& v : batch.values()) v = normal(rng);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 3);

  GradCheckLoss loss;
  loss.kind = kind;
  if (kind == LossKind::Distill) {
    loss.distill = DistillConfig{0.5, 4.0, true};
    loss.teacher_logits = Tensor<double>({n, 3});
    for (auto& v : loss.teacher_logits.values()) v = 2.0 * normal(rng);
  }
  const auto r = gradient_check(arch, params, batch, labels, loss, step, 200, seed);
  CheckResult c;
  c.name = kind == LossKind::Distill ? "gradcheck_kd" : "gradcheck_ce";
  c.value = r.max_relative_error;
  c.threshold = tolerance;
  c.passed = r.max_relative_error <= tolerance;
  c.detail = std::to_string(r.coordinates) + " coordinates, worst " + r.worst_parameter;
  return c;
}

CheckResult check_kd_lsr(int instances, std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0;
  for (int t = 0; t < instances; ++t) {
    const int k = 2 + static_cast<int>(rng() % 19);
    const int n = 1 + static_cast<int>(rng() % 4);
    Tensor<double> zs({n, k}), zt({n, k});
    for (auto& v : zs.values()) v = normal(rng);
    for (auto& v : zt.values()) v = normal(rng);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& y : labels) y = static_cast<int>(rng() % static_cast<unsigned>(k));
    const double alpha = unit(rng);
    const double kd = kd_loss(zs, zt, labels, DistillConfig{alpha, 1.0, true});
    const double lsr = lsr_loss(zs, zt, labels, alpha);
    worst = std::max(worst, std::abs(kd - lsr) / std::max(std::abs(lsr), 1e-300));
  }
  return {"kd_equals_lsr", worst <= tolerance, worst, tolerance, std::to_string(instances) + " instances, tau = 1"};
}

PruneExactness prune_exactness(const ArchitectureSpec& arch, const LabeledDataset& data, const PruneConfig& cfg,
                               std::uint64_t seed) {
  PruneExactness out;
  auto ckpt = MaskedCheckpoint<float>::fresh(arch, seed);
  out.tolerance = 1.0 / static_cast<double>(ckpt.masks.total());
  MaskSet previous = ckpt.masks;
  const auto result = iterative_prune_lr_rewind(std::move(ckpt), cfg, data, seed);
  for (const auto& it : result.iterations) {
    const double expected = schedule_sparsity(it.iteration, cfg.rate_per_iteration);
    out.iterations.push_back(it.iteration);
    out.sparsities.push_back(it.sparsity);
    out.expected.push_back(expected);
    out.sparsity_ok = out.sparsity_ok && std::abs(it.sparsity - expected) <= out.tolerance;
    out.zeros_ok = out.zeros_ok && it.masked_zero;
    out.monotone_ok = out.monotone_ok && masks_monotone(previous, it.masks);
    previous = it.masks;
  }
  out.zeros_ok = out.zeros_ok && masked_weights_zero(result.checkpoint.params, result.checkpoint.masks);
  out.sparsity_ok = out.sparsity_ok && static_cast<int>(result.iterations.size()) == cfg.iterations;
  return out;
}

CheckResult check_pruning(std::uint64_t seed) {
  BlobSpec blobs;
  blobs.classes = 4;
  blobs.height = blobs.width = 8;
  blobs.per_class = 16;
  blobs.seed = seed;
  auto data = split_train_val(synthetic_blobs(blobs), 0.25, seed);
  const auto arch = presets::mini_vgg(4, {3, 8, 8});
  PruneConfig cfg;
  cfg.iterations = 7;
  cfg.post_epochs = 1;
  cfg.post_batch_size = 16;
  cfg.post_lr = 0.05;
  cfg.post_lr_drops = {};
  const auto r = prune_exactness(arch, data, cfg, seed);
  double worst = 0;
  for (std::size_t i = 0; i < r.sparsities.size(); ++i) worst = std::max(worst, std::abs(r.sparsities[i] - r.expected[i]));
  std::ostringstream detail;
  detail << "zeros " << (r.zeros_ok ? "ok" : "FAILED") << ", monotone " << (r.monotone_ok ? "ok" : "FAILED")
         << ", final sparsity " << (r.sparsities.empty() ? 0.0 : r.sparsities.back());
  return {"pruning_exactness", r.sparsity_ok && r.zeros_ok && r.monotone_ok, worst, r.tolerance, detail.str()};
}

std::vector<CheckResult> check_golden_counts() {
  std::vector<CheckResult> out;
  const auto vgg = presets::vgg19();
  const auto counts = count_params(vgg);
  const auto rows = counts.weight_layers();
  const auto& golden = vgg19_cifar100_weights();
  long long mismatches = rows.size() == golden.size() ? 0 : static_cast<long long>(golden.size());
  long long golden_sum = 0;
  for (std::size_t i = 0; i < golden.size(); ++i) {
    golden_sum += golden[i];
    if (i < rows.size() && rows[i].weights != golden[i]) ++mismatches;
  }
  out.push_back({"vgg19_layer_weights", mismatches == 0, static_cast<double>(mismatches), 0,
                 std::to_string(golden.size()) + " rows compared"});
  out.push_back({"vgg19_total_weights", counts.total_weights == golden_sum, static_cast<double>(counts.total_weights),
                 static_cast<double>(golden_sum), "total equals the sum of the per-layer rows"});

  const double macs = static_cast<double>(count_macs(vgg).total_macs);
  const double mac_err = std::abs(macs - kVgg19Macs) / kVgg19Macs;
  out.push_back({"vgg19_macs", mac_err <= 0.02, macs, kVgg19Macs, "relative error " + format_real(mac_err)});

  // Doubling every hidden width quadruples conv MACs except conv-0 (input fixed) and doubles the classifier.
  const auto dbl = count_macs(presets::vgg19dbl()).weight_layers();
  const auto base = count_macs(vgg).weight_layers();
  bool scaled_ok = dbl.size() == base.size();
  for (std::size_t i = 0; scaled_ok && i < base.size(); ++i) {
    const long long factor = (i == 0 || i + 1 == base.size()) ? 2 : 4;
    scaled_ok = dbl[i].macs == factor * base[i].macs;
  }
  out.push_back({"vgg19dbl_mac_scaling", scaled_ok, static_cast<double>(count_macs(presets::vgg19dbl()).total_macs), 0,
                 "per-layer MACs follow the 2x width scaling"});

  const auto plan = solve_student_channels(vgg, census_from_counts(vgg, vgg19_sparse79_census()));
  const bool conv0 = !plan.rows.empty() && plan.rows[0].channels == 40 && plan.rows[0].student_params == 1080;
  out.push_back({"student_conv0", conv0, plan.rows.empty() ? 0.0 : static_cast<double>(plan.rows[0].student_params),
                 1080, "conv-0 solves to 40 channels"});
  const double rel = std::abs(static_cast<double>(plan.total_weights - kVgg19StudentWeights)) / kVgg19StudentWeights;
  out.push_back({"student_total_weights", rel <= 0.02, static_cast<double>(plan.total_weights),
                 static_cast<double>(kVgg19StudentWeights), "relative error " + format_real(rel)});

  std::vector<long long> dense_counts;
  for (const auto& r : rows) dense_counts.push_back(r.weights);
  const auto fixed = solve_student_channels(vgg, census_from_counts(vgg, dense_counts));
  const bool identity = conv_channels(fixed.arch) == conv_channels(vgg) &&
                        count_params(fixed.arch).total_weights == counts.total_weights;
  out.push_back({"student_identity", identity, static_cast<double>(fixed.total_weights),
                 static_cast<double>(counts.total_weights), "dense census reproduces the teacher"});
  return out;
}

CheckResult check_smoothness(const MaskedCheckpoint<float>& dense, const MaskedCheckpoint<float>& pruned,
                             const LabeledDataset& data, double floor) {
  const auto split = data.splits.test.empty() ? SplitName::Val : SplitName::Test;
  const auto r = smoothness_report(dense, pruned, data, split);
  return {"smoothness", r.mean_log_ratio >= floor, r.mean_log_ratio, floor,
          std::to_string(r.per_sample.size()) + " samples"};
}

std::string checks_csv(const std::vector<CheckResult>& checks) {
  std::ostringstream out;
  out << "check,passed,value,threshold,detail\n";
  for (const auto& c : checks) {
    out << c.name << ',' << (c.passed ? 1 : 0) << ',' << format_real(c.value) << ',' << format_real(c.threshold)
        << ",\"" << c.detail << "\"\n";
  }
  return out.str();
}

}  // namespace ptd
