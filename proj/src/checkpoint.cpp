#include "ptd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ptd {

using nlohmann::json;

template <class T>
MaskedCheckpoint<T> MaskedCheckpoint<T>::fresh(const ArchitectureSpec& arch, std::uint64_t seed) {
  MaskedCheckpoint out;
  out.arch = arch;
  out.params = init_params<T>(arch, seed);
  out.masks = MaskSet::all_ones(out.params.layout());
  out.meta.seed = seed;
  return out;
}

template struct MaskedCheckpoint<float>;
template struct MaskedCheckpoint<double>;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[at + i]} << (8 * i);
  return v;
}

std::size_t packed_bytes(std::size_t bits) { return (bits + 7) / 8; }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MaskedCheckpoint<float>& ckpt) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.params) {
    tensors.push_back({{"name", e.info.name}, {"shape", e.info.shape}, {"offset", offset}, {"count", e.value.size()}});
    offset += 4 * e.value.size();
  }
  json masks = json::array();
  for (const auto& m : ckpt.masks.layers) {
    masks.push_back({{"name", m.name}, {"offset", offset}, {"bits", m.keep.size()}});
    offset += packed_bytes(m.keep.size());
  }
  json header = {{"arch", ckpt.arch},
                 {"tensors", tensors},
                 {"masks", masks},
                 {"sparsity", ckpt.sparsity()},
                 {"seed", ckpt.meta.seed},
                 {"epoch", ckpt.meta.epoch},
                 {"metrics", ckpt.meta.metrics},
                 {"config", ckpt.meta.config},
                 {"payload_bytes", offset}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : ckpt.params) {
    for (float v : e.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  for (const auto& m : ckpt.masks.layers) {
    std::vector<std::uint8_t> packed(packed_bytes(m.keep.size()), 0);
    for (std::size_t i = 0; i < m.keep.size(); ++i) {
      if (m.keep[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
    out.insert(out.end(), packed.begin(), packed.end());
  }
  return out;
}

MaskedCheckpoint<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw BadMagicError(origin + ": not a checkpoint (bad magic, expected \"PTDL\")");
  }
  if (bytes.size() < 16) throw ManifestError(origin + ": truncated checkpoint preamble");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw VersionError(origin + ": unsupported checkpoint version " + std::to_string(version) +
                       " (supported versions: " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t header_len = get_le(bytes, 8, 8);
  if (header_len > bytes.size() - 16) throw ManifestError(origin + ": header length exceeds file size");
  const std::size_t payload = 16 + header_len;

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(payload));
  } catch (const json::exception& e) {
    throw ManifestError(origin + ": unreadable header: " + e.what());
  }

  MaskedCheckpoint<float> ckpt;
  try {
    ckpt.arch = header.at("arch").get<ArchitectureSpec>();
    ckpt.meta.seed = header.at("seed").get<std::uint64_t>();
    ckpt.meta.epoch = header.at("epoch").get<int>();
    ckpt.meta.metrics = header.at("metrics").get<std::map<std::string, double>>();
    ckpt.meta.config = header.at("config");
  } catch (const json::exception& e) {
    throw ManifestError(origin + ": malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw ManifestError(origin + ": malformed architecture: " + e.what());
  }
  const std::uint64_t payload_bytes = header.value("payload_bytes", std::uint64_t{0});
  if (payload + payload_bytes != bytes.size()) {
    throw ManifestError(origin + ": payload is " + std::to_string(bytes.size() - payload) + " bytes, manifest declares " +
                        std::to_string(payload_bytes));
  }

  std::vector<ParamInfo> layout;
  try {
    validate(ckpt.arch);
    layout = param_layout(ckpt.arch);
  } catch (const ConfigError& e) {
    throw ManifestError(origin + ": invalid architecture: " + e.what());
  }
  const auto& tensors = header.at("tensors");
  if (tensors.size() != layout.size()) throw ManifestError(origin + ": tensor manifest does not match architecture");
  std::uint64_t expect = 0;
  std::vector<ParamEntry<float>> entries;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& t = tensors[i];
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    if (name != layout[i].name || shape != layout[i].shape || count != shape_size(shape) || offset != expect ||
        offset + 4 * count > payload_bytes) {
      throw ManifestError(origin + ": manifest entry " + std::to_string(i) + " (" + name + ") is inconsistent");
    }
    std::vector<float> values(count);
    for (std::uint64_t k = 0; k < count; ++k) {
      values[k] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, payload + offset + 4 * k, 4)));
    }
    entries.push_back({layout[i], Tensor<float>(shape, std::move(values))});
    expect += 4 * count;
  }
  ckpt.params = ParamSet<float>(std::move(entries));

  for (const auto& m : header.at("masks")) {
    LayerMask mask;
    mask.name = m.at("name").get<std::string>();
    const auto offset = m.at("offset").get<std::uint64_t>();
    const auto bits = m.at("bits").get<std::uint64_t>();
    if (offset != expect || offset + packed_bytes(bits) > payload_bytes) {
      throw ManifestError(origin + ": mask " + mask.name + " offset is inconsistent");
    }
    mask.keep.resize(bits);
    for (std::uint64_t i = 0; i < bits; ++i) mask.keep[i] = (bytes[payload + offset + i / 8] >> (i % 8)) & 1u;
    expect += packed_bytes(bits);
    ckpt.masks.layers.push_back(std::move(mask));
  }
  if (expect != payload_bytes) throw ManifestError(origin + ": manifest offsets do not cover the payload");
  if (ckpt.has_masks()) {
    try {
      check_mask_layout(ckpt.masks, layout);
    } catch (const ConfigError& e) {
      throw ManifestError(origin + ": " + e.what());
    }
  }
  return ckpt;
}

void save_checkpoint(const MaskedCheckpoint<float>& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

MaskedCheckpoint<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return decode_checkpoint(bytes, path);
}

}  // namespace ptd
