#include "ptd/arch.hpp"

#include <cmath>
#include <fstream>

#include "ptd/json_util.hpp"

namespace ptd {

using nlohmann::json;

bool operator==(const ResidualBlock& a, const ResidualBlock& b) {
  return a.body == b.body && a.projection == b.projection;
}

bool operator==(const LayerSpec& a, const LayerSpec& b) { return a.kind == b.kind; }

int conv_output_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

long long round_half_away(double x) { return static_cast<long long>(std::llround(x)); }

namespace {

Shape conv_shape(const Conv2d& c, const Shape& in) {
  if (c.kh <= 0 || c.kw <= 0 || c.stride < 1 || c.pad < 0 || c.in_ch <= 0 || c.out_ch <= 0) {
    throw ShapeError("conv2d has invalid geometry");
  }
  if (in.size() != 3 || in[0] != c.in_ch) {
    throw ShapeError("conv2d expects " + std::to_string(c.in_ch) + " input channels, got " + shape_string(in));
  }
  int h = in[1] + 2 * c.pad - c.kh;
  int w = in[2] + 2 * c.pad - c.kw;
  if (h < 0 || w < 0) throw ShapeError("conv2d kernel larger than padded input " + shape_string(in));
  return {c.out_ch, h / c.stride + 1, w / c.stride + 1};
}

Shape chain_shape(const std::vector<LayerSpec>& layers, Shape shape) {
  for (const auto& layer : layers) shape = layer_output_shape(layer, shape);
  return shape;
}

}  // namespace

Shape layer_output_shape(const LayerSpec& layer, const Shape& in) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2d>) {
          return conv_shape(l, in);
        } else if constexpr (std::is_same_v<L, Dense>) {
          if (l.in <= 0 || l.out <= 0) throw ShapeError("dense has non-positive width");
          if (in.size() != 1 || in[0] != l.in) {
            throw ShapeError("dense expects " + std::to_string(l.in) + " features, got " + shape_string(in));
          }
          return {l.out};
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          if (in.empty() || in[0] != l.channels) {
            throw ShapeError("batchnorm expects " + std::to_string(l.channels) + " channels, got " +
                             shape_string(in));
          }
          return in;
        } else if constexpr (std::is_same_v<L, ReLU>) {
          return in;
        } else if constexpr (std::is_same_v<L, MaxPool>) {
          if (l.k <= 0 || l.stride < 1) throw ShapeError("maxpool has invalid geometry");
          if (in.size() != 3 || in[1] < l.k || in[2] < l.k) {
            throw ShapeError("maxpool " + std::to_string(l.k) + " does not fit input " + shape_string(in));
          }
          return {in[0], (in[1] - l.k) / l.stride + 1, (in[2] - l.k) / l.stride + 1};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return {static_cast<int>(shape_size(in))};
        } else {
          Shape out = chain_shape(l.body, in);
          if (l.projection) {
            if (l.projection->kh != 1 || l.projection->kw != 1) throw ShapeError("projection must be 1x1");
            Shape proj = conv_shape(*l.projection, in);
            if (proj != out) {
              throw ShapeError("projection output " + shape_string(proj) + " does not match block output " +
                               shape_string(out));
            }
          } else if (out != in) {
            throw ShapeError("residual block changes shape " + shape_string(in) + " -> " + shape_string(out) +
                             " without a projection");
          }
          return out;
        }
      },
      layer.kind);
}

Shape validate(const ArchitectureSpec& arch) {
  if (arch.input.size() != 3) throw ShapeError("architecture input must be {C,H,W}");
  if (arch.classes <= 0) throw ShapeError("architecture needs a positive class count");
  if (arch.layers.empty()) throw ShapeError("architecture has no layers");
  shape_size(arch.input);
  Shape out = chain_shape(arch.layers, arch.input);
  if (out != Shape{arch.classes}) {
    throw ShapeError("network output " + shape_string(out) + " does not match class count " +
                     std::to_string(arch.classes));
  }
  return out;
}

namespace {

Shape rewire_chain(std::vector<LayerSpec>& layers, Shape shape) {
  for (auto& layer : layers) {
    if (auto* c = std::get_if<Conv2d>(&layer.kind)) {
      if (shape.size() == 3) c->in_ch = shape[0];
    } else if (auto* d = std::get_if<Dense>(&layer.kind)) {
      if (shape.size() == 1) d->in = shape[0];
    } else if (auto* bn = std::get_if<BatchNorm>(&layer.kind)) {
      if (!shape.empty()) bn->channels = shape[0];
    } else if (auto* block = std::get_if<ResidualBlock>(&layer.kind)) {
      Shape out = rewire_chain(block->body, shape);
      if (out.size() == 3 && shape.size() == 3) {
        if (block->projection || out != shape) {
          Conv2d proj = block->projection.value_or(Conv2d{});
          proj.kh = proj.kw = 1;
          proj.pad = 0;
          proj.in_ch = shape[0];
          proj.out_ch = out[0];
          if (!block->projection) {
            proj.has_bias = false;
            proj.stride = std::max(1, shape[1] / std::max(1, out[1]));
          }
          block->projection = proj;
        }
      }
    }
    shape = layer_output_shape(layer, shape);
  }
  return shape;
}

}  // namespace

ArchitectureSpec rewire(ArchitectureSpec arch) {
  rewire_chain(arch.layers, arch.input);
  validate(arch);
  return arch;
}

std::size_t classifier_index(const ArchitectureSpec& arch) {
  for (std::size_t i = arch.layers.size(); i-- > 0;) {
    if (arch.layers[i].is<Dense>()) return i;
  }
  throw ShapeError("architecture '" + arch.name + "' has no dense classifier");
}

const LayerSpec* find_classifier(const ArchitectureSpec& arch) {
  for (std::size_t i = arch.layers.size(); i-- > 0;) {
    if (arch.layers[i].is<Dense>()) return &arch.layers[i];
  }
  return nullptr;
}

namespace {

int scaled(int width, double factor) {
  return static_cast<int>(std::max<long long>(1, round_half_away(width * factor)));
}

void scale_chain(std::vector<LayerSpec>& layers, double factor, const LayerSpec* keep) {
  for (auto& layer : layers) {
    if (&layer == keep) continue;
    if (auto* c = std::get_if<Conv2d>(&layer.kind)) {
      c->out_ch = scaled(c->out_ch, factor);
    } else if (auto* d = std::get_if<Dense>(&layer.kind)) {
      d->out = scaled(d->out, factor);
    } else if (auto* block = std::get_if<ResidualBlock>(&layer.kind)) {
      scale_chain(block->body, factor, nullptr);
    }
  }
}

}  // namespace

ArchitectureSpec scale_channels(const ArchitectureSpec& arch, double factor) {
  if (!(factor > 0)) throw ConfigError("channel scale factor must be positive");
  validate(arch);
  ArchitectureSpec out = arch;
  scale_chain(out.layers, factor, &out.layers[classifier_index(out)]);
  return rewire(std::move(out));
}

void visit_layers(const ArchitectureSpec& arch,
                  const std::function<void(const LayerSpec&, const Shape&, bool)>& fn) {
  std::function<Shape(const std::vector<LayerSpec>&, Shape, bool)> walk =
      [&](const std::vector<LayerSpec>& layers, Shape shape, bool nested) {
        for (const auto& layer : layers) {
          fn(layer, shape, nested);
          if (const auto* block = std::get_if<ResidualBlock>(&layer.kind)) walk(block->body, shape, true);
          shape = layer_output_shape(layer, shape);
        }
        return shape;
      };
  walk(arch.layers, arch.input, false);
}

std::vector<int> conv_channels(const ArchitectureSpec& arch) {
  std::vector<int> out;
  visit_layers(arch, [&](const LayerSpec& l, const Shape&, bool) {
    if (l.is<Conv2d>()) out.push_back(l.as<Conv2d>().out_ch);
  });
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json conv_json(const Conv2d& c) {
  return {{"type", "conv2d"}, {"in", c.in_ch},      {"out", c.out_ch}, {"kernel", {c.kh, c.kw}},
          {"stride", c.stride}, {"pad", c.pad}, {"bias", c.has_bias}};
}

Conv2d conv_from(const json& j) {
  require_known_keys(j, {"type", "in", "out", "kernel", "stride", "pad", "bias"}, "conv2d");
  Conv2d c;
  c.in_ch = get_required<int>(j, "in", "conv2d");
  c.out_ch = get_required<int>(j, "out", "conv2d");
  const auto& k = j.at("kernel");
  if (k.is_array()) {
    if (k.size() != 2) throw ConfigError("conv2d kernel must be [kh, kw]");
    c.kh = k[0].get<int>();
    c.kw = k[1].get<int>();
  } else {
    c.kh = c.kw = k.get<int>();
  }
  c.stride = get_or(j, "stride", 1);
  c.pad = get_or(j, "pad", 0);
  c.has_bias = get_or(j, "bias", true);
  return c;
}

}  // namespace

void to_json(json& j, const LayerSpec& layer) {
  std::visit(
      [&](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv2d>) {
          j = conv_json(l);
        } else if constexpr (std::is_same_v<L, Dense>) {
          j = {{"type", "dense"}, {"in", l.in}, {"out", l.out}, {"bias", l.has_bias}};
        } else if constexpr (std::is_same_v<L, BatchNorm>) {
          j = {{"type", "batchnorm"}, {"channels", l.channels}, {"eps", l.eps}, {"momentum", l.momentum}};
        } else if constexpr (std::is_same_v<L, ReLU>) {
          j = {{"type", "relu"}};
        } else if constexpr (std::is_same_v<L, MaxPool>) {
          j = {{"type", "maxpool"}, {"kernel", l.k}, {"stride", l.stride}};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          j = {{"type", "flatten"}};
        } else {
          j = {{"type", "residual"}, {"body", l.body}};
          if (l.projection) j["projection"] = conv_json(*l.projection);
        }
      },
      layer.kind);
}

void from_json(const json& j, LayerSpec& layer) {
  const auto type = get_required<std::string>(j, "type", "layer");
  if (type == "conv2d") {
    layer.kind = conv_from(j);
  } else if (type == "dense") {
    require_known_keys(j, {"type", "in", "out", "bias"}, "dense");
    layer.kind = Dense{get_required<int>(j, "in", "dense"), get_required<int>(j, "out", "dense"),
                       get_or(j, "bias", true)};
  } else if (type == "batchnorm") {
    require_known_keys(j, {"type", "channels", "eps", "momentum"}, "batchnorm");
    layer.kind = BatchNorm{get_required<int>(j, "channels", "batchnorm"), get_or(j, "eps", 1e-5),
                           get_or(j, "momentum", 0.1)};
  } else if (type == "relu") {
    require_known_keys(j, {"type"}, "relu");
    layer.kind = ReLU{};
  } else if (type == "maxpool") {
    require_known_keys(j, {"type", "kernel", "stride"}, "maxpool");
    int k = get_required<int>(j, "kernel", "maxpool");
    layer.kind = MaxPool{k, get_or(j, "stride", k)};
  } else if (type == "flatten") {
    require_known_keys(j, {"type"}, "flatten");
    layer.kind = Flatten{};
  } else if (type == "residual") {
    require_known_keys(j, {"type", "body", "projection"}, "residual");
    ResidualBlock block;
    block.body = j.at("body").get<std::vector<LayerSpec>>();
    if (j.contains("projection")) block.projection = conv_from(j.at("projection"));
    layer.kind = std::move(block);
  } else {
    throw ConfigError("unknown layer type '" + type + "'");
  }
}

void to_json(json& j, const ArchitectureSpec& arch) {
  j = {{"name", arch.name}, {"input", arch.input}, {"classes", arch.classes}, {"layers", arch.layers}};
}

void from_json(const json& j, ArchitectureSpec& arch) {
  require_known_keys(j, {"name", "input", "classes", "layers"}, "architecture");
  arch.name = get_or<std::string>(j, "name", "");
  arch.input = get_required<Shape>(j, "input", "architecture");
  arch.classes = get_required<int>(j, "classes", "architecture");
  try {
    arch.layers = j.at("layers").get<std::vector<LayerSpec>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture layers: ") + e.what());
  }
}

ArchitectureSpec load_arch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open architecture file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("architecture file " + path + ": " + e.what());
  }
  auto arch = j.get<ArchitectureSpec>();
  validate(arch);
  return arch;
}

void save_arch_file(const ArchitectureSpec& arch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write architecture file " + path);
  out << json(arch).dump(2) << '\n';
}

}  // namespace ptd
