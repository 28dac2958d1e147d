#pragma once

#include <memory>
#include <vector>

#include "ptd/arch.hpp"
#include "ptd/params.hpp"
#include "ptd/tensor.hpp"

namespace ptd {

/// Train: BN uses batch statistics and updates running stats.
/// Eval: BN uses running stats.
/// Linearized: biases and BN shifts dropped, BN is a per-channel scale, ReLU is identity
/// (the positive-path network used for data-free pruning scores).
enum class Mode { Train, Eval, Linearized };

namespace detail {
template <class T>
class Layer;
}

/// Executable form of an ArchitectureSpec. Holds the activation cache of the last
/// forward pass, so one instance serves one forward/backward stream at a time.
template <class T>
class Network {
 public:
  explicit Network(ArchitectureSpec arch);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;

  const ArchitectureSpec& arch() const { return arch_; }
  const std::vector<ParamInfo>& layout() const { return layout_; }

  /// N x C x H x W batch -> N x K logits. In Train mode the BN running stats in
  /// `params` are updated.
  Tensor<T> forward(ParamSet<T>& params, const Tensor<T>& batch, Mode mode);

  /// Eval-mode forward that leaves `params` untouched.
  Tensor<T> infer(const ParamSet<T>& params, const Tensor<T>& batch);

  /// Gradient of a scalar loss w.r.t. every trainable parameter given dLoss/dLogits.
  /// Requires the immediately preceding forward() on this instance. Running-stat
  /// entries of the result are zero. If `input_grad` is non-null it receives dLoss/dInput.
  ParamSet<T> backward(const ParamSet<T>& params, const Tensor<T>& upstream, Tensor<T>* input_grad = nullptr);

 private:
  Tensor<T> run(const ParamSet<T>& params, ParamSet<T>* stats, const Tensor<T>& batch, Mode mode);

  ArchitectureSpec arch_;
  std::vector<ParamInfo> layout_;
  std::vector<std::unique_ptr<detail::Layer<T>>> layers_;
  Shape batch_input_;
  bool cached_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace ptd
