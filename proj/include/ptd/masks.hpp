#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptd/params.hpp"

namespace ptd {

/// Keep-mask of one prunable tensor (1 = keep).
struct LayerMask {
  std::string name;
  std::vector<std::uint8_t> keep;

  std::size_t kept() const;
  friend bool operator==(const LayerMask&, const LayerMask&) = default;
};

/// One LayerMask per prunable tensor, in layout order. Biases and BN parameters have none.
struct MaskSet {
  std::vector<LayerMask> layers;

  static MaskSet all_ones(const std::vector<ParamInfo>& layout);

  bool empty() const { return layers.empty(); }
  std::size_t total() const;
  std::size_t kept() const;
  std::size_t pruned() const { return total() - kept(); }
  const LayerMask* find(const std::string& name) const;

  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

/// pruned / total over prunable weights; 0 for an empty set.
double sparsity(const MaskSet& masks);

/// Sets every masked coordinate to exactly zero.
template <class T>
void apply_masks(ParamSet<T>& params, const MaskSet& masks);

/// True when every coordinate pruned in `before` is also pruned in `after`.
bool masks_monotone(const MaskSet& before, const MaskSet& after);

/// True when every masked coordinate of `params` is exactly zero.
template <class T>
bool masked_weights_zero(const ParamSet<T>& params, const MaskSet& masks);

/// Throws ConfigError if the mask set does not match the prunable tensors of `layout`.
void check_mask_layout(const MaskSet& masks, const std::vector<ParamInfo>& layout);

}  // namespace ptd
