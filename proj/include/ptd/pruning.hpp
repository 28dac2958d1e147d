#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptd/checkpoint.hpp"
#include "ptd/data.hpp"
#include "ptd/masks.hpp"
#include "ptd/trainer.hpp"

namespace ptd {

enum class PruneMethod { LrRewind, SynFlow };

PruneMethod parse_prune_method(const std::string& name);
std::string prune_method_name(PruneMethod method);

struct PruneConfig {
  double rate_per_iteration = 0.2;
  int iterations = 1;
  int post_epochs = 130;
  int post_batch_size = 128;
  double post_lr = 0.1;
  std::vector<int> post_lr_drops = {39, 84};
  double post_drop_factor = 0.1;
  double post_weight_decay = 2e-4;
  double momentum = 0.9;
  PruneMethod method = PruneMethod::LrRewind;
  int synflow_rounds = 100;
  bool decay_bn = true;
  bool augment = false;

  void validate() const;
  /// The rewound fine-tuning schedule as a TrainConfig.
  TrainConfig fine_tune_config(std::uint64_t seed) const;

  friend bool operator==(const PruneConfig&, const PruneConfig&) = default;
};

void to_json(nlohmann::json& j, const PruneConfig& cfg);

/// 1 - (1 - rate)^k.
double schedule_sparsity(int iterations, double rate);

/// Smallest k with 1 - (1 - rate)^k >= target (to within 1e-9).
int iterations_for_target(double target, double rate = 0.2);

/// Masks the lowest-scored kept coordinates, pooled globally, until round(target * T)
/// coordinates are pruned. Ties resolve by (layer index, flat index) ascending; masks
/// already in `existing` stay masked. `scores` is aligned with existing.layers.
MaskSet mask_lowest_scores(const std::vector<std::vector<double>>& scores, double target, const MaskSet& existing);

/// Global magnitude criterion: score = |w|.
template <class T>
MaskSet global_magnitude_mask(const ParamSet<T>& params, double target, const MaskSet& existing);

struct PruneIteration {
  int iteration = 0;
  double target_sparsity = 0;
  double sparsity = 0;
  double val_acc = 0;
  RunReport fine_tune;
  MaskSet masks;             // after this iteration
  bool masked_zero = false;  // every masked weight exactly 0 after fine-tuning
};

template <class T>
struct PruneResult {
  MaskedCheckpoint<T> checkpoint;
  std::vector<PruneIteration> iterations;
};

using PruneCallback = std::function<void(const PruneIteration&)>;

/// `iterations` rounds of: raise sparsity to 1-(1-rate)^k by global magnitude, then
/// fine-tune the survivors under the rewound LR schedule (weights are kept).
template <class T>
PruneResult<T> iterative_prune_lr_rewind(MaskedCheckpoint<T> ckpt, const PruneConfig& cfg, const LabeledDataset& data,
                                         std::uint64_t seed = 0, const PruneCallback& on_iteration = {});

/// |w * dR/dw| with R the summed logits of the positive-linearized network on an
/// all-ones input. One score vector per prunable tensor, masked weights score 0.
template <class T>
std::vector<std::vector<double>> synflow_scores(const ArchitectureSpec& arch, const ParamSet<T>& params,
                                                const MaskSet& masks);

/// Iterative SynFlow: round r prunes to 1 - (1 - target)^(r / rounds).
template <class T>
MaskSet synflow_prune(const ArchitectureSpec& arch, const ParamSet<T>& params, double target, int rounds = 100);

/// SynFlow to schedule_sparsity(cfg.iterations) followed by one fine-tune when post_epochs > 0.
template <class T>
PruneResult<T> prune_synflow(MaskedCheckpoint<T> ckpt, const PruneConfig& cfg, const LabeledDataset& data,
                             std::uint64_t seed = 0, const PruneCallback& on_iteration = {});

}  // namespace ptd
