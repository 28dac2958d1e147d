#include "ptd/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "ptd/network.hpp"

namespace ptd {

PruneMethod parse_prune_method(const std::string& name) {
  if (name == "lr-rewind" || name == "magnitude_lr_rewind") return PruneMethod::LrRewind;
  if (name == "synflow") return PruneMethod::SynFlow;
  throw ConfigError("unknown pruning method '" + name + "' (expected lr-rewind or synflow)");
}

std::string prune_method_name(PruneMethod method) {
  return method == PruneMethod::SynFlow ? "synflow" : "lr-rewind";
}

void PruneConfig::validate() const {
  if (!(rate_per_iteration > 0 && rate_per_iteration < 1)) throw ConfigError("pruning rate must lie in (0, 1)");
  if (iterations < 0) throw ConfigError("pruning iterations must be non-negative");
  if (synflow_rounds < 1) throw ConfigError("synflow_rounds must be at least 1");
  fine_tune_config(0).validate();
}

TrainConfig PruneConfig::fine_tune_config(std::uint64_t seed) const {
  TrainConfig t;
  t.epochs = post_epochs;
  t.batch_size = post_batch_size;
  t.lr = post_lr;
  t.lr_drops = post_lr_drops;
  t.drop_factor = post_drop_factor;
  t.weight_decay = post_weight_decay;
  t.momentum = momentum;
  t.decay_bn = decay_bn;
  t.augment = augment;
  t.seed = seed;
  return t;
}

void to_json(nlohmann::json& j, const PruneConfig& cfg) {
  j = {{"rate_per_iteration", cfg.rate_per_iteration},
       {"iterations", cfg.iterations},
       {"post_epochs", cfg.post_epochs},
       {"post_batch_size", cfg.post_batch_size},
       {"post_lr", cfg.post_lr},
       {"post_lr_drops", cfg.post_lr_drops},
       {"post_drop_factor", cfg.post_drop_factor},
       {"post_weight_decay", cfg.post_weight_decay},
       {"momentum", cfg.momentum},
       {"method", prune_method_name(cfg.method)},
       {"synflow_rounds", cfg.synflow_rounds},
       {"decay_bn", cfg.decay_bn},
       {"augment", cfg.augment}};
}

double schedule_sparsity(int iterations, double rate) { return 1.0 - std::pow(1.0 - rate, iterations); }

int iterations_for_target(double target, double rate) {
  if (!(target >= 0 && target < 1)) throw ConfigError("target sparsity must lie in [0, 1)");
  if (!(rate > 0 && rate < 1)) throw ConfigError("pruning rate must lie in (0, 1)");
  int k = 0;
  while (schedule_sparsity(k, rate) < target - 1e-9) ++k;
  return k;
}

MaskSet mask_lowest_scores(const std::vector<std::vector<double>>& scores, double target, const MaskSet& existing) {
  if (!(target >= 0 && target < 1)) throw ConfigError("target sparsity must lie in [0, 1)");
  if (scores.size() != existing.layers.size()) throw ConfigError("score/mask layer count mismatch");
  const std::size_t total = existing.total();
  const std::size_t pruned = total - existing.kept();
  const auto goal = static_cast<std::size_t>(std::llround(target * static_cast<double>(total)));
  if (goal < pruned) {
    throw ConfigError("target sparsity " + std::to_string(target) + " is below the current sparsity " +
                      std::to_string(sparsity(existing)));
  }
  struct Candidate {
    double score;
    std::uint32_t layer;
    std::size_t index;
  };
  std::vector<Candidate> kept;
  kept.reserve(total - pruned);
  for (std::size_t l = 0; l < existing.layers.size(); ++l) {
    const auto& keep = existing.layers[l].keep;
    if (scores[l].size() != keep.size()) throw ConfigError("score length mismatch for " + existing.layers[l].name);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i]) kept.push_back({scores[l][i], static_cast<std::uint32_t>(l), i});
    }
  }
  const std::size_t need = goal - pruned;
  MaskSet out = existing;
  if (need == 0) return out;
  auto less = [](const Candidate& a, const Candidate& b) {
    return std::tie(a.score, a.layer, a.index) < std::tie(b.score, b.layer, b.index);
  };
  std::nth_element(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(need - 1), kept.end(), less);
  for (std::size_t i = 0; i < need; ++i) out.layers[kept[i].layer].keep[kept[i].index] = 0;
  return out;
}

template <class T>
MaskSet global_magnitude_mask(const ParamSet<T>& params, double target, const MaskSet& existing) {
  std::vector<std::vector<double>> scores;
  scores.reserve(existing.layers.size());
  for (const auto& m : existing.layers) {
    const auto& w = params.at(m.name).values();
    std::vector<double> s(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) s[i] = std::abs(static_cast<double>(w[i]));
    scores.push_back(std::move(s));
  }
  return mask_lowest_scores(scores, target, existing);
}

template <class T>
PruneResult<T> iterative_prune_lr_rewind(MaskedCheckpoint<T> ckpt, const PruneConfig& cfg, const LabeledDataset& data,
                                         std::uint64_t seed, const PruneCallback& on_iteration) {
  cfg.validate();
  PruneResult<T> result;
  if (ckpt.masks.empty()) ckpt.masks = MaskSet::all_ones(ckpt.params.layout());
  for (int k = 1; k <= cfg.iterations; ++k) {
    PruneIteration it;
    it.iteration = k;
    it.target_sparsity = schedule_sparsity(k, cfg.rate_per_iteration);
    const auto goal = std::llround(it.target_sparsity * static_cast<double>(ckpt.masks.total()));
    if (goal <= static_cast<long long>(ckpt.masks.pruned())) continue;
    ckpt.masks = global_magnitude_mask(ckpt.params, it.target_sparsity, ckpt.masks);
    apply_masks(ckpt.params, ckpt.masks);
    if (cfg.post_epochs > 0) {
      auto tuned = train<T>(ckpt.arch, data, cfg.fine_tune_config(seed + static_cast<std::uint64_t>(k)), ckpt);
      ckpt = std::move(tuned.checkpoint);
      it.fine_tune = std::move(tuned.report);
    }
    it.sparsity = ckpt.sparsity();
    it.masks = ckpt.masks;
    it.masked_zero = masked_weights_zero(ckpt.params, ckpt.masks);
    it.val_acc = data.splits.val.empty() ? 0.0 : evaluate(ckpt, data, SplitName::Val);
    ckpt.meta.metrics["val_acc"] = it.val_acc;
    ckpt.meta.metrics["sparsity"] = it.sparsity;
    if (on_iteration) on_iteration(it);
    result.iterations.push_back(std::move(it));
  }
  result.checkpoint = std::move(ckpt);
  return result;
}

namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

template <class T>
std::vector<std::vector<double>> synflow_scores(const ArchitectureSpec& arch, const ParamSet<T>& params,
                                                const MaskSet& masks) {
  ParamSet<double> linear = params.template cast<double>();
  apply_masks(linear, masks);
  for (auto& e : linear) {
    for (auto& v : e.value.values()) v = std::abs(v);
  }
  Network<double> net(arch);
  Shape shape{1};
  shape.insert(shape.end(), arch.input.begin(), arch.input.end());
  const Tensor<double> ones(shape, 1.0);

  for (int attempt = 0; attempt < 2; ++attempt) {
    bool finite = true;
    ParamSet<double> grads;
    try {
      net.forward(linear, ones, Mode::Linearized);
      grads = net.backward(linear, Tensor<double>({1, arch.classes}, 1.0));
      finite = grads.all_finite();
    } catch (const NumericError&) {
      finite = false;
    }
    if (finite) {
      std::vector<std::vector<double>> scores;
      for (const auto& m : masks.layers) {
        const auto& w = linear.at(m.name).values();
        const auto& g = grads.at(m.name).values();
        std::vector<double> s(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) s[i] = std::abs(w[i] * g[i]);
        scores.push_back(std::move(s));
      }
      return scores;
    }
    // Rescaling each multiplicative factor by its max scales all scores by one common
    // constant, so the ranking is unchanged.
    for (auto& e : linear) {
      if (e.info.role != ParamRole::Weight && e.info.role != ParamRole::BnScale) continue;
      const double m = max_abs(e.value.values());
      if (m > 0) {
        for (auto& v : e.value.values()) v /= m;
      }
    }
  }
  throw NumericError("synflow objective overflows even after per-layer rescaling");
}

template <class T>
MaskSet synflow_prune(const ArchitectureSpec& arch, const ParamSet<T>& params, double target, int rounds) {
  if (rounds < 1) throw ConfigError("synflow rounds must be at least 1");
  if (!(target >= 0 && target < 1)) throw ConfigError("target sparsity must lie in [0, 1)");
  MaskSet masks = MaskSet::all_ones(params.layout());
  if (target == 0) return masks;
  for (int r = 1; r <= rounds; ++r) {
    const double step_target = 1.0 - std::pow(1.0 - target, static_cast<double>(r) / rounds);
    masks = mask_lowest_scores(synflow_scores(arch, params, masks), std::max(step_target, sparsity(masks)), masks);
  }
  return masks;
}

template <class T>
PruneResult<T> prune_synflow(MaskedCheckpoint<T> ckpt, const PruneConfig& cfg, const LabeledDataset& data,
                             std::uint64_t seed, const PruneCallback& on_iteration) {
  cfg.validate();
  PruneResult<T> result;
  PruneIteration it;
  it.iteration = 1;
  it.target_sparsity = schedule_sparsity(cfg.iterations, cfg.rate_per_iteration);
  ckpt.masks = synflow_prune(ckpt.arch, ckpt.params, it.target_sparsity, cfg.synflow_rounds);
  apply_masks(ckpt.params, ckpt.masks);
  if (cfg.post_epochs > 0) {
    auto tuned = train<T>(ckpt.arch, data, cfg.fine_tune_config(seed + 1), ckpt);
    ckpt = std::move(tuned.checkpoint);
    it.fine_tune = std::move(tuned.report);
  }
  it.sparsity = ckpt.sparsity();
  it.masks = ckpt.masks;
  it.masked_zero = masked_weights_zero(ckpt.params, ckpt.masks);
  it.val_acc = data.splits.val.empty() ? 0.0 : evaluate(ckpt, data, SplitName::Val);
  ckpt.meta.metrics["val_acc"] = it.val_acc;
  ckpt.meta.metrics["sparsity"] = it.sparsity;
  if (on_iteration) on_iteration(it);
  result.iterations.push_back(std::move(it));
  result.checkpoint = std::move(ckpt);
  return result;
}

#define PTD_INSTANTIATE(T)                                                                                           \
  template MaskSet global_magnitude_mask<T>(const ParamSet<T>&, double, const MaskSet&);                             \
  template PruneResult<T> iterative_prune_lr_rewind<T>(MaskedCheckpoint<T>, const PruneConfig&, const LabeledDataset&, \
                                                       std::uint64_t, const PruneCallback&);                         \
  template std::vector<std::vector<double>> synflow_scores<T>(const ArchitectureSpec&, const ParamSet<T>&,           \
                                                              const MaskSet&);                                       \
  template MaskSet synflow_prune<T>(const ArchitectureSpec&, const ParamSet<T>&, double, int);                       \
  template PruneResult<T> prune_synflow<T>(MaskedCheckpoint<T>, const PruneConfig&, const LabeledDataset&,           \
                                           std::uint64_t, const PruneCallback&);

PTD_INSTANTIATE(float)
PTD_INSTANTIATE(double)

#undef PTD_INSTANTIATE

}  // namespace ptd
