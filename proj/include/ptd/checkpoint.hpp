#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptd/arch.hpp"
#include "ptd/masks.hpp"
#include "ptd/params.hpp"

namespace ptd {

inline constexpr char kCheckpointMagic[4] = {'P', 'T', 'D', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epoch = 0;
  std::map<std::string, double> metrics;
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

/// Parameters + keep-masks + metadata: the unit of persistence.
template <class T>
struct MaskedCheckpoint {
  ArchitectureSpec arch;
  ParamSet<T> params;
  MaskSet masks;  // empty for a maskless checkpoint
  CheckpointMeta meta;

  /// He-initialized parameters with all-ones masks.
  static MaskedCheckpoint fresh(const ArchitectureSpec& arch, std::uint64_t seed);

  bool has_masks() const { return !masks.empty(); }
  double sparsity() const { return ptd::sparsity(masks); }

  template <class U>
  MaskedCheckpoint<U> cast() const {
    return MaskedCheckpoint<U>{arch, params.template cast<U>(), masks, meta};
  }

  friend bool operator==(const MaskedCheckpoint&, const MaskedCheckpoint&) = default;
};

/// Serialized form: "PTDL", u32 LE version, u64 LE header length, JSON header, then
/// f32 LE tensors in manifest order, then per-prunable-tensor packed keep bits
/// (LSB-first within each byte, byte-padded).
std::vector<std::uint8_t> encode_checkpoint(const MaskedCheckpoint<float>& ckpt);
MaskedCheckpoint<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin = "buffer");

void save_checkpoint(const MaskedCheckpoint<float>& ckpt, const std::string& path);
MaskedCheckpoint<float> load_checkpoint(const std::string& path);

extern template struct MaskedCheckpoint<float>;
extern template struct MaskedCheckpoint<double>;

}  // namespace ptd
