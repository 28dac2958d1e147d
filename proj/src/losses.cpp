#include "ptd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ptd {

void DistillConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("distill alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw ConfigError("distill tau must be positive");
}

std::vector<double> softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softmax temperature must be positive");
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (!std::isfinite(logits[k])) throw NumericError("non-finite logit in softmax");
    out[k] = std::exp((logits[k] - mx) / tau);
    sum += out[k];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double cross_entropy(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size()) {
    throw ShapeError("cross_entropy length mismatch: " + std::to_string(target.size()) + " vs " +
                     std::to_string(pred.size()));
  }
  double h = 0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] != 0.0) h -= target[k] * std::log(std::max(pred[k], kProbFloor));
  }
  return h;
}

std::vector<double> smoothed_label(std::span<const double> f_true, std::span<const double> f_teacher, double alpha) {
  if (f_true.size() != f_teacher.size()) throw ShapeError("smoothed_label length mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("smoothing alpha must lie in [0, 1]");
  std::vector<double> out(f_true.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - alpha) * f_true[k] + alpha * f_teacher[k];
  return out;
}

std::vector<double> one_hot(int label, int classes) {
  if (label < 0 || label >= classes) {
    throw ConfigError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
  }
  std::vector<double> out(classes, 0.0);
  out[label] = 1.0;
  return out;
}

namespace {

template <class T>
void check_batch(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be N x K");
  if (static_cast<std::size_t>(logits.dim(0)) != labels.size()) throw ShapeError("label count does not match batch");
  if (logits.dim(0) == 0) throw ShapeError("empty batch");
  for (int y : labels) {
    if (y < 0 || y >= logits.dim(1)) throw ConfigError("label " + std::to_string(y) + " out of range");
  }
}

template <class T>
std::vector<double> row(const Tensor<T>& t, int i) {
  const int k = t.dim(1);
  return std::vector<double>(t.data() + static_cast<std::size_t>(i) * k, t.data() + static_cast<std::size_t>(i + 1) * k);
}

}  // namespace

template <class T>
LossWithGrad<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels) {
  check_batch(logits, labels);
  const int n = logits.dim(0), k = logits.dim(1);
  LossWithGrad<T> out{0.0, Tensor<T>(logits.shape())};
  for (int i = 0; i < n; ++i) {
    auto q = softmax(row(logits, i), 1.0);
    out.loss -= std::log(std::max(q[labels[i]], kProbFloor));
    for (int c = 0; c < k; ++c) {
      out.grad[static_cast<std::size_t>(i) * k + c] = static_cast<T>((q[c] - (c == labels[i] ? 1.0 : 0.0)) / n);
    }
  }
  out.loss /= n;
  return out;
}

template <class T>
LossWithGrad<T> kd_loss_with_grad(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                                  std::span<const int> labels, const DistillConfig& cfg) {
  cfg.validate();
  check_batch(student_logits, labels);
  if (teacher_logits.shape() != student_logits.shape()) {
    throw ShapeError("teacher logits " + shape_string(teacher_logits.shape()) + " vs student logits " +
                     shape_string(student_logits.shape()));
  }
  const int n = student_logits.dim(0), k = student_logits.dim(1);
  const double a = cfg.alpha;
  const double s = cfg.tau_sq_scaling ? cfg.tau * cfg.tau : 1.0;
  LossWithGrad<T> out{0.0, Tensor<T>(student_logits.shape())};
  for (int i = 0; i < n; ++i) {
    const auto zs = row(student_logits, i);
    const auto zt = row(teacher_logits, i);
    const auto q1 = softmax(zs, 1.0);
    const auto qt = softmax(zs, cfg.tau);
    const auto pt = softmax(zt, cfg.tau);
    const double hard = -std::log(std::max(q1[labels[i]], kProbFloor));
    const double soft = cross_entropy(pt, qt);
    out.loss += (1.0 - a) * hard + a * s * soft;
    for (int c = 0; c < k; ++c) {
      const double g_hard = q1[c] - (c == labels[i] ? 1.0 : 0.0);
      const double g_soft = (qt[c] - pt[c]) / cfg.tau;
      out.grad[static_cast<std::size_t>(i) * k + c] = static_cast<T>(((1.0 - a) * g_hard + a * s * g_soft) / n);
    }
  }
  out.loss /= n;
  return out;
}

template <class T>
double lsr_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, std::span<const int> labels,
                double alpha) {
  DistillConfig{alpha, 1.0, false}.validate();
  check_batch(student_logits, labels);
  if (teacher_logits.shape() != student_logits.shape()) throw ShapeError("teacher/student logit shapes differ");
  const int n = student_logits.dim(0), k = student_logits.dim(1);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const auto target = smoothed_label(one_hot(labels[i], k), softmax(row(teacher_logits, i), 1.0), alpha);
    total += cross_entropy(target, softmax(row(student_logits, i), 1.0));
  }
  return total / n;
}

template <class T>
double mean_entropy(const Tensor<T>& logits, double tau) {
  const int n = logits.dim(0);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const auto p = softmax(row(logits, i), tau);
    total += cross_entropy(p, p);
  }
  return total / n;
}

void to_json(nlohmann::json& j, const DistillConfig& cfg) {
  j = {{"alpha", cfg.alpha}, {"tau", cfg.tau}, {"tau_sq_scaling", cfg.tau_sq_scaling}};
}

void from_json(const nlohmann::json& j, DistillConfig& cfg) {
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.tau_sq_scaling = j.value("tau_sq_scaling", cfg.tau_sq_scaling);
}

template LossWithGrad<float> cross_entropy_loss(const Tensor<float>&, std::span<const int>);
template LossWithGrad<double> cross_entropy_loss(const Tensor<double>&, std::span<const int>);
template LossWithGrad<float> kd_loss_with_grad(const Tensor<float>&, const Tensor<float>&, std::span<const int>,
                                               const DistillConfig&);
template LossWithGrad<double> kd_loss_with_grad(const Tensor<double>&, const Tensor<double>&, std::span<const int>,
                                                const DistillConfig&);
template double lsr_loss(const Tensor<float>&, const Tensor<float>&, std::span<const int>, double);
template double lsr_loss(const Tensor<double>&, const Tensor<double>&, std::span<const int>, double);
template double mean_entropy(const Tensor<float>&, double);
template double mean_entropy(const Tensor<double>&, double);

}  // namespace ptd
