#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ptd/arch.hpp"
#include "ptd/losses.hpp"
#include "ptd/params.hpp"

namespace ptd {

enum class LossKind { CrossEntropy, Distill };

struct GradCheckLoss {
  LossKind kind = LossKind::CrossEntropy;
  DistillConfig distill;           // used when kind == Distill
  Tensor<double> teacher_logits;   // N x K, used when kind == Distill
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t coordinates = 0;
  std::string worst_parameter;
};

/// Scalar training loss of `params` on the batch (train-mode forward on a scratch copy).
double batch_loss(const ArchitectureSpec& arch, const ParamSet<double>& params, const Tensor<double>& batch,
                  std::span<const int> labels, const GradCheckLoss& loss);

/// Compares backward() against central differences with the given step on a random
/// subset of at least `min_coordinates` trainable coordinates covering every trainable
/// tensor. Error per coordinate: |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult gradient_check(const ArchitectureSpec& arch, const ParamSet<double>& params,
                               const Tensor<double>& batch, std::span<const int> labels, const GradCheckLoss& loss,
                               double step, std::size_t min_coordinates = 200, std::uint64_t seed = 0);

}  // namespace ptd
