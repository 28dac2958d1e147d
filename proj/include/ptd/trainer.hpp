#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptd/checkpoint.hpp"
#include "ptd/data.hpp"
#include "ptd/losses.hpp"

namespace ptd {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double lr = 0.1;
  std::vector<int> lr_drops = {60, 120, 160};
  double drop_factor = 0.2;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  bool decay_bn = true;  // apply weight decay to BN scale/shift too
  bool augment = false;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);

/// lr * drop_factor^(number of drops <= epoch).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// g = grad + wd*w; v = m*v + g; w = w - lr*(g + m*v); masked coordinates of w and v
/// are then forced to exactly zero. Running statistics are never touched.
template <class T>
void sgd_nesterov_step(ParamSet<T>& params, const ParamSet<T>& grads, ParamSet<T>& velocity, double lr,
                       double momentum, double weight_decay, const MaskSet* masks = nullptr, bool decay_bn = true);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
  double lr = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  int best_val_epoch = -1;  // earliest epoch attaining the max val accuracy
  double initial_loss = 0;  // loss of the very first mini-batch
  std::map<std::string, double> final_metrics;
  double wall_seconds = 0;
};

template <class T>
struct TrainResult {
  MaskedCheckpoint<T> checkpoint;
  RunReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch cross-entropy training from `init` (or a fresh He init seeded by cfg.seed).
/// Returns the best-validation snapshot; the init's masks are preserved throughout.
template <class T>
TrainResult<T> train(const ArchitectureSpec& arch, const LabeledDataset& data, const TrainConfig& cfg,
                     std::optional<MaskedCheckpoint<T>> init = std::nullopt, const EpochCallback& on_epoch = {});

/// Same loop as train() with kd_loss against the (masked, eval-mode) teacher's logits.
template <class T>
TrainResult<T> distill(const ArchitectureSpec& student_arch, const MaskedCheckpoint<T>& teacher,
                       const LabeledDataset& data, const DistillConfig& dcfg, const TrainConfig& tcfg,
                       std::optional<MaskedCheckpoint<T>> init = std::nullopt, const EpochCallback& on_epoch = {});

/// Argmax predictions (ties -> lowest class index) on a split.
template <class T>
std::vector<int> predict(const MaskedCheckpoint<T>& ckpt, const LabeledDataset& data, SplitName split);

/// Fraction of split samples whose argmax equals the label.
template <class T>
double evaluate(const MaskedCheckpoint<T>& ckpt, const LabeledDataset& data, SplitName split);

/// Fraction of split samples on which the two models' argmax predictions coincide.
template <class T>
double agreement(const MaskedCheckpoint<T>& student, const MaskedCheckpoint<T>& teacher, const LabeledDataset& data,
                 SplitName split);

/// Index of the largest entry; ties resolve to the lowest index.
template <class T>
std::size_t argmax_row(const T* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

}  // namespace ptd
