#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ptd/arch.hpp"
#include "ptd/tensor.hpp"

namespace ptd {

enum class ParamRole { Weight, Bias, BnScale, BnShift, BnRunningMean, BnRunningVar };

std::string_view role_name(ParamRole role);
ParamRole parse_role(std::string_view name);

struct ParamInfo {
  std::string name;   // e.g. "layers.3.body.0.weight"
  std::string label;  // human layer label: conv-0, fc, bn-2, proj-0
  Shape shape;
  ParamRole role = ParamRole::Weight;
  int fan_in = 0;

  bool trainable() const { return role != ParamRole::BnRunningMean && role != ParamRole::BnRunningVar; }
  /// Conv kernels and dense matrices carry masks; biases and BN parameters never do.
  bool prunable() const { return role == ParamRole::Weight; }

  friend bool operator==(const ParamInfo&, const ParamInfo&) = default;
};

/// Parameter layout of an architecture in forward order (projection after its block body).
std::vector<ParamInfo> param_layout(const ArchitectureSpec& arch);

template <class T>
struct ParamEntry {
  ParamInfo info;
  Tensor<T> value;
};

/// Named parameter tensors of one network, one entry per ParamInfo of its layout.
template <class T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<ParamEntry<T>> entries) : entries_(std::move(entries)) {}

  /// Zero-filled tensors for `layout`.
  static ParamSet zeros(const std::vector<ParamInfo>& layout);

  std::size_t size() const { return entries_.size(); }
  ParamEntry<T>& operator[](std::size_t i) { return entries_[i]; }
  const ParamEntry<T>& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Index of the entry called `name`; throws ConfigError when absent.
  std::size_t index_of(std::string_view name) const;
  const Tensor<T>& at(std::string_view name) const { return entries_[index_of(name)].value; }
  Tensor<T>& at(std::string_view name) { return entries_[index_of(name)].value; }

  ParamSet zeros_like() const;
  std::vector<ParamInfo> layout() const;
  bool all_finite() const;

  template <class U>
  ParamSet<U> cast() const {
    std::vector<ParamEntry<U>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back({e.info, e.value.template cast<U>()});
    return ParamSet<U>(std::move(out));
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (!(a.entries_[i].info == b.entries_[i].info) || !(a.entries_[i].value == b.entries_[i].value)) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
};

/// He-normal weights (std sqrt(2/fan_in)), zero biases, BN scale 1 / shift 0, running var 1.
template <class T>
ParamSet<T> init_params(const ArchitectureSpec& arch, std::uint64_t seed);

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace ptd
