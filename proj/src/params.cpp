#include "ptd/params.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ptd {

std::string_view role_name(ParamRole role) {
  switch (role) {
    case ParamRole::Weight: return "weight";
    case ParamRole::Bias: return "bias";
    case ParamRole::BnScale: return "bn_scale";
    case ParamRole::BnShift: return "bn_shift";
    case ParamRole::BnRunningMean: return "running_mean";
    case ParamRole::BnRunningVar: return "running_var";
  }
  return "weight";
}

ParamRole parse_role(std::string_view name) {
  for (auto role : {ParamRole::Weight, ParamRole::Bias, ParamRole::BnScale, ParamRole::BnShift,
                    ParamRole::BnRunningMean, ParamRole::BnRunningVar}) {
    if (role_name(role) == name) return role;
  }
  throw ConfigError("unknown parameter role '" + std::string(name) + "'");
}

namespace {

struct LayoutBuilder {
  std::vector<ParamInfo> out;
  int conv = 0;
  int proj = 0;
  int bn = 0;
  int dense = 0;
  const LayerSpec* classifier = nullptr;

  void conv_params(const Conv2d& c, const std::string& prefix, const std::string& label) {
    const int fan_in = c.in_ch * c.kh * c.kw;
    out.push_back({prefix + "weight", label, {c.out_ch, c.in_ch, c.kh, c.kw}, ParamRole::Weight, fan_in});
    if (c.has_bias) out.push_back({prefix + "bias", label, {c.out_ch}, ParamRole::Bias, fan_in});
  }

  void chain(const std::vector<LayerSpec>& layers, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& layer = layers[i];
      const std::string p = prefix + std::to_string(i) + ".";
      if (const auto* c = std::get_if<Conv2d>(&layer.kind)) {
        conv_params(*c, p, "conv-" + std::to_string(conv++));
      } else if (const auto* d = std::get_if<Dense>(&layer.kind)) {
        const std::string label = &layer == classifier ? "fc" : "dense-" + std::to_string(dense++);
        out.push_back({p + "weight", label, {d->out, d->in}, ParamRole::Weight, d->in});
        if (d->has_bias) out.push_back({p + "bias", label, {d->out}, ParamRole::Bias, d->in});
      } else if (const auto* b = std::get_if<BatchNorm>(&layer.kind)) {
        const std::string label = "bn-" + std::to_string(bn++);
        out.push_back({p + "bn_scale", label, {b->channels}, ParamRole::BnScale, 0});
        out.push_back({p + "bn_shift", label, {b->channels}, ParamRole::BnShift, 0});
        out.push_back({p + "running_mean", label, {b->channels}, ParamRole::BnRunningMean, 0});
        out.push_back({p + "running_var", label, {b->channels}, ParamRole::BnRunningVar, 0});
      } else if (const auto* r = std::get_if<ResidualBlock>(&layer.kind)) {
        chain(r->body, p + "body.");
        if (r->projection) conv_params(*r->projection, p + "proj.", "proj-" + std::to_string(proj++));
      }
    }
  }
};

}  // namespace

std::vector<ParamInfo> param_layout(const ArchitectureSpec& arch) {
  LayoutBuilder b;
  b.classifier = find_classifier(arch);
  b.chain(arch.layers, "layers.");
  return std::move(b.out);
}

template <class T>
ParamSet<T> ParamSet<T>::zeros(const std::vector<ParamInfo>& layout) {
  std::vector<ParamEntry<T>> entries;
  entries.reserve(layout.size());
  for (const auto& info : layout) entries.push_back({info, Tensor<T>(info.shape)});
  return ParamSet(std::move(entries));
}

template <class T>
std::size_t ParamSet<T>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].info.name == name) return i;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

template <class T>
ParamSet<T> ParamSet<T>::zeros_like() const {
  return zeros(layout());
}

template <class T>
std::vector<ParamInfo> ParamSet<T>::layout() const {
  std::vector<ParamInfo> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.info);
  return out;
}

template <class T>
bool ParamSet<T>::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const auto& e) { return e.value.all_finite(); });
}

template <class T>
ParamSet<T> init_params(const ArchitectureSpec& arch, std::uint64_t seed) {
  validate(arch);
  auto params = ParamSet<T>::zeros(param_layout(arch));
  std::mt19937_64 rng(seed);
  for (auto& e : params) {
    switch (e.info.role) {
      case ParamRole::Weight: {
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / e.info.fan_in));
        for (auto& v : e.value.values()) v = static_cast<T>(normal(rng));
        break;
      }
      case ParamRole::BnScale:
      case ParamRole::BnRunningVar:
        e.value.fill(T{1});
        break;
      default:
        break;
    }
  }
  return params;
}

template class ParamSet<float>;
template class ParamSet<double>;
template ParamSet<float> init_params<float>(const ArchitectureSpec&, std::uint64_t);
template ParamSet<double> init_params<double>(const ArchitectureSpec&, std::uint64_t);

}  // namespace ptd
