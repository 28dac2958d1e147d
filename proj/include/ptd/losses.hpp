#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "ptd/tensor.hpp"

namespace ptd {

/// Probabilities below this are clamped before taking a log.
inline constexpr double kProbFloor = 1e-12;

struct DistillConfig {
  double alpha = 0.95;
  double tau = 10.0;
  bool tau_sq_scaling = true;

  /// Throws ConfigError unless alpha in [0,1] and tau > 0.
  void validate() const;

  friend bool operator==(const DistillConfig&, const DistillConfig&) = default;
};

/// out[k] = exp(z[k]/tau) / sum_j exp(z[j]/tau), evaluated max-subtracted.
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);

/// H(p, q) = -sum_k p[k] ln q[k] with q clamped at kProbFloor.
double cross_entropy(std::span<const double> target, std::span<const double> pred);

/// (1 - alpha) * f_true + alpha * f_teacher.
std::vector<double> smoothed_label(std::span<const double> f_true, std::span<const double> f_teacher, double alpha);

std::vector<double> one_hot(int label, int classes);

template <class T>
struct LossWithGrad {
  double loss = 0;
  Tensor<T> grad;  // dLoss/dStudentLogits, N x K
};

/// Mean cross-entropy of softmax(logits) against the labels, with its logit gradient.
template <class T>
LossWithGrad<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels);

/// Batch mean of (1-a) H(onehot, softmax(z_s)) + a s H(softmax(z_t/tau), softmax(z_s/tau)),
/// s = tau^2 when tau_sq_scaling is on, else 1.
template <class T>
LossWithGrad<T> kd_loss_with_grad(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits,
                                  std::span<const int> labels, const DistillConfig& cfg);

template <class T>
double kd_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, std::span<const int> labels,
               const DistillConfig& cfg) {
  return kd_loss_with_grad(student_logits, teacher_logits, labels, cfg).loss;
}

/// Batch mean of H(smoothed_label(onehot, softmax(z_t), alpha), softmax(z_s)), tau fixed to 1.
template <class T>
double lsr_loss(const Tensor<T>& student_logits, const Tensor<T>& teacher_logits, std::span<const int> labels,
                double alpha);

/// Shannon entropy (natural log) of softmax(logits / tau), averaged over rows.
template <class T>
double mean_entropy(const Tensor<T>& logits, double tau = 1.0);

void to_json(nlohmann::json& j, const DistillConfig& cfg);
void from_json(const nlohmann::json& j, DistillConfig& cfg);

}  // namespace ptd
