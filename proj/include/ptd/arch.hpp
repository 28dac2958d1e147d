#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "ptd/tensor.hpp"

namespace ptd {

struct Conv2d {
  int in_ch = 0;
  int out_ch = 0;
  int kh = 3;
  int kw = 3;
  int stride = 1;
  int pad = 0;
  bool has_bias = true;

  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct Dense {
  int in = 0;
  int out = 0;
  bool has_bias = true;

  friend bool operator==(const Dense&, const Dense&) = default;
};

struct BatchNorm {
  int channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;

  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct MaxPool {
  int k = 2;
  int stride = 2;

  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

struct LayerSpec;

/// out = body(x) + shortcut(x); the shortcut is identity unless a 1x1 projection is given.
struct ResidualBlock {
  std::vector<LayerSpec> body;
  std::optional<Conv2d> projection;
};

bool operator==(const ResidualBlock& a, const ResidualBlock& b);

struct LayerSpec {
  using Kind = std::variant<Conv2d, Dense, BatchNorm, ReLU, MaxPool, Flatten, ResidualBlock>;
  Kind kind;

  template <class K>
  bool is() const { return std::holds_alternative<K>(kind); }
  template <class K>
  const K& as() const { return std::get<K>(kind); }
  template <class K>
  K& as() { return std::get<K>(kind); }
};

bool operator==(const LayerSpec& a, const LayerSpec& b);

/// A feed-forward network: input shape (C, H, W), class count, ordered layers.
struct ArchitectureSpec {
  std::string name;
  Shape input;  // {C, H, W}
  int classes = 0;
  std::vector<LayerSpec> layers;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

int conv_output_size(int in, int kernel, int stride, int pad);

/// Per-sample output shape of one layer ({C,H,W} or {F}); throws ShapeError on mismatch.
Shape layer_output_shape(const LayerSpec& layer, const Shape& in);

/// Checks the whole chain and returns the per-sample logits shape ({classes}).
Shape validate(const ArchitectureSpec& arch);

/// Recomputes every input width (conv in_ch, dense in, BN channels, projections) from
/// the chain, keeping output widths. Projections are added or dropped as the block's
/// shapes require.
ArchitectureSpec rewire(ArchitectureSpec arch);

/// Multiplies every hidden width by `factor` (rounded half away from zero, at least 1).
ArchitectureSpec scale_channels(const ArchitectureSpec& arch, double factor);

/// Output widths of the main-path conv layers in forward order.
std::vector<int> conv_channels(const ArchitectureSpec& arch);

/// Index of the top-level classifier layer (last Dense).
std::size_t classifier_index(const ArchitectureSpec& arch);
/// Same layer as classifier_index, or nullptr for a headless network.
const LayerSpec* find_classifier(const ArchitectureSpec& arch);

/// Main-path layer visit: `fn(layer, input_shape, in_residual_body)`. Projections are not visited.
void visit_layers(const ArchitectureSpec& arch,
                  const std::function<void(const LayerSpec&, const Shape&, bool)>& fn);

long long round_half_away(double x);

void to_json(nlohmann::json& j, const LayerSpec& layer);
void from_json(const nlohmann::json& j, LayerSpec& layer);
void to_json(nlohmann::json& j, const ArchitectureSpec& arch);
void from_json(const nlohmann::json& j, ArchitectureSpec& arch);

ArchitectureSpec load_arch_file(const std::string& path);
void save_arch_file(const ArchitectureSpec& arch, const std::string& path);

}  // namespace ptd
