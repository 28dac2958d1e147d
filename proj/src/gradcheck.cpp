#include "ptd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ptd/network.hpp"

namespace ptd {

namespace {

LossWithGrad<double> evaluate_loss(const Tensor<double>& logits, std::span<const int> labels,
                                   const GradCheckLoss& loss) {
  if (loss.kind == LossKind::CrossEntropy) return cross_entropy_loss(logits, labels);
  return kd_loss_with_grad(logits, loss.teacher_logits, labels, loss.distill);
}

}  // namespace

double batch_loss(const ArchitectureSpec& arch, const ParamSet<double>& params, const Tensor<double>& batch,
                  std::span<const int> labels, const GradCheckLoss& loss) {
  Network<double> net(arch);
  ParamSet<double> scratch = params;
  return evaluate_loss(net.forward(scratch, batch, Mode::Train), labels, loss).loss;
}

GradCheckResult gradient_check(const ArchitectureSpec& arch, const ParamSet<double>& params,
                               const Tensor<double>& batch, std::span<const int> labels, const GradCheckLoss& loss,
                               double step, std::size_t min_coordinates, std::uint64_t seed) {
  if (!(step > 0)) throw ConfigError("finite-difference step must be positive");
  Network<double> net(arch);
  ParamSet<double> scratch = params;
  auto logits = net.forward(scratch, batch, Mode::Train);
  auto lg = evaluate_loss(logits, labels, loss);
  if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss in gradient check");
  const ParamSet<double> analytic = net.backward(params, lg.grad);

  std::vector<std::size_t> tensors;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].info.trainable()) tensors.push_back(i);
  }
  if (tensors.empty()) throw ConfigError("architecture has no trainable parameters");
  // Even share per tensor; whatever small tensors cannot absorb moves to the larger ones.
  std::vector<std::size_t> quota(tensors.size(), 0);
  std::size_t assigned = 0, total = 0;
  for (std::size_t t : tensors) total += params[t].value.size();
  const std::size_t want = std::min(min_coordinates, total);
  while (assigned < want) {
    std::size_t open = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) open += quota[i] < params[tensors[i]].value.size();
    const std::size_t share = std::max<std::size_t>(1, (want - assigned + open - 1) / open);
    for (std::size_t i = 0; i < tensors.size() && assigned < want; ++i) {
      const std::size_t room = params[tensors[i]].value.size() - quota[i];
      const std::size_t add = std::min({room, share, want - assigned});
      quota[i] += add;
      assigned += add;
    }
  }

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  auto perturbed = [&](std::size_t t, std::size_t idx, double delta) {
    ParamSet<double> p = params;
    p[t].value[idx] += delta;
    return batch_loss(arch, p, batch, labels, loss);
  };
  for (std::size_t q = 0; q < tensors.size(); ++q) {
    const std::size_t t = tensors[q];
    const std::size_t size = params[t].value.size();
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(quota[q]);
    for (std::size_t idx : coords) {
      const double numeric = (perturbed(t, idx, step) - perturbed(t, idx, -step)) / (2 * step);
      const double a = analytic[t].value[idx];
      if (!std::isfinite(numeric)) throw NumericError("non-finite finite-difference loss");
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = params[t].info.name + "[" + std::to_string(idx) + "]";
      }
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace ptd
