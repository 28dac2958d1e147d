#include "ptd/masks.hpp"

#include <algorithm>
#include <numeric>

namespace ptd {

std::size_t LayerMask::kept() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

MaskSet MaskSet::all_ones(const std::vector<ParamInfo>& layout) {
  MaskSet out;
  for (const auto& info : layout) {
    if (info.prunable()) out.layers.push_back({info.name, std::vector<std::uint8_t>(shape_size(info.shape), 1)});
  }
  return out;
}

std::size_t MaskSet::total() const {
  return std::accumulate(layers.begin(), layers.end(), std::size_t{0},
                         [](std::size_t acc, const LayerMask& m) { return acc + m.keep.size(); });
}

std::size_t MaskSet::kept() const {
  return std::accumulate(layers.begin(), layers.end(), std::size_t{0},
                         [](std::size_t acc, const LayerMask& m) { return acc + m.kept(); });
}

const LayerMask* MaskSet::find(const std::string& name) const {
  for (const auto& m : layers) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

double sparsity(const MaskSet& masks) {
  const std::size_t total = masks.total();
  return total == 0 ? 0.0 : static_cast<double>(total - masks.kept()) / static_cast<double>(total);
}

void check_mask_layout(const MaskSet& masks, const std::vector<ParamInfo>& layout) {
  std::size_t next = 0;
  for (const auto& info : layout) {
    if (!info.prunable()) continue;
    if (next >= masks.layers.size() || masks.layers[next].name != info.name) {
      throw ConfigError("mask set does not cover prunable tensor " + info.name);
    }
    if (masks.layers[next].keep.size() != shape_size(info.shape)) {
      throw ConfigError("mask length mismatch for " + info.name);
    }
    ++next;
  }
  if (next != masks.layers.size()) throw ConfigError("mask set has entries for non-prunable tensors");
}

template <class T>
void apply_masks(ParamSet<T>& params, const MaskSet& masks) {
  for (const auto& m : masks.layers) {
    auto& values = params.at(m.name).values();
    if (values.size() != m.keep.size()) throw ConfigError("mask length mismatch for " + m.name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!m.keep[i]) values[i] = T{0};
    }
  }
}

bool masks_monotone(const MaskSet& before, const MaskSet& after) {
  if (before.layers.size() != after.layers.size()) return false;
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    const auto& a = before.layers[l].keep;
    const auto& b = after.layers[l].keep;
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i] && b[i]) return false;
    }
  }
  return true;
}

template <class T>
bool masked_weights_zero(const ParamSet<T>& params, const MaskSet& masks) {
  for (const auto& m : masks.layers) {
    const auto& values = params.at(m.name).values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!m.keep[i] && values[i] != T{0}) return false;
    }
  }
  return true;
}

template void apply_masks<float>(ParamSet<float>&, const MaskSet&);
template void apply_masks<double>(ParamSet<double>&, const MaskSet&);
template bool masked_weights_zero<float>(const ParamSet<float>&, const MaskSet&);
template bool masked_weights_zero<double>(const ParamSet<double>&, const MaskSet&);

}  // namespace ptd
