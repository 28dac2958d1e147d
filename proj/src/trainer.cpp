#include "ptd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "ptd/network.hpp"

namespace ptd {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(drop_factor > 0)) throw ConfigError("drop_factor must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  for (std::size_t i = 0; i < lr_drops.size(); ++i) {
    if (i > 0 && lr_drops[i] <= lr_drops[i - 1]) throw ConfigError("lr_drops must be strictly increasing");
    if (lr_drops[i] < 0 || (epochs > 0 && lr_drops[i] >= epochs)) {
      throw ConfigError("lr drop epoch " + std::to_string(lr_drops[i]) + " outside [0, epochs)");
    }
  }
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"epochs", cfg.epochs},           {"batch_size", cfg.batch_size},
       {"lr", cfg.lr},                   {"lr_drops", cfg.lr_drops},
       {"drop_factor", cfg.drop_factor}, {"weight_decay", cfg.weight_decay},
       {"momentum", cfg.momentum},       {"decay_bn", cfg.decay_bn},
       {"augment", cfg.augment},         {"seed", cfg.seed}};
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  const auto drops = std::count_if(cfg.lr_drops.begin(), cfg.lr_drops.end(), [&](int d) { return d <= epoch; });
  double lr = cfg.lr;
  for (long i = 0; i < drops; ++i) lr *= cfg.drop_factor;
  return lr;
}

template <class T>
void sgd_nesterov_step(ParamSet<T>& params, const ParamSet<T>& grads, ParamSet<T>& velocity, double lr,
                       double momentum, double weight_decay, const MaskSet* masks, bool decay_bn) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("parameter, gradient and velocity sets differ in size");
  }
  const T lr_t = static_cast<T>(lr), m = static_cast<T>(momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& e = params[i];
    if (!e.info.trainable()) continue;
    const bool is_bn = e.info.role == ParamRole::BnScale || e.info.role == ParamRole::BnShift;
    const T wd = static_cast<T>(is_bn && !decay_bn ? 0.0 : weight_decay);
    auto& w = e.value.values();
    auto& v = velocity[i].value.values();
    const auto& g = grads[i].value.values();
    if (w.size() != g.size() || w.size() != v.size()) throw ShapeError("gradient shape mismatch for " + e.info.name);
    for (std::size_t k = 0; k < w.size(); ++k) {
      const T gk = g[k] + wd * w[k];
      v[k] = m * v[k] + gk;
      w[k] -= lr_t * (gk + m * v[k]);
    }
    if (!e.value.all_finite()) throw NumericError("non-finite update in " + e.info.name);
    if (masks && e.info.prunable()) {
      if (const LayerMask* mask = masks->find(e.info.name)) {
        for (std::size_t k = 0; k < w.size(); ++k) {
          if (!mask->keep[k]) {
            w[k] = T{0};
            v[k] = T{0};
          }
        }
      }
    }
  }
}

namespace {

constexpr std::size_t kEvalBatch = 256;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <class T>
std::vector<int> predict_with(Network<T>& net, const ParamSet<T>& params, const LabeledDataset& data,
                              const std::vector<std::size_t>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  const auto k = static_cast<std::size_t>(net.arch().classes);
  for (std::size_t begin = 0; begin < indices.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(indices.size(), begin + kEvalBatch);
    std::span<const std::size_t> idx(indices.data() + begin, end - begin);
    const auto logits = net.infer(params, gather_images<T>(data, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(static_cast<int>(argmax_row(logits.data() + i * k, k)));
  }
  return out;
}

template <class T>
double accuracy_with(Network<T>& net, const ParamSet<T>& params, const LabeledDataset& data, SplitName split) {
  const auto& indices = data.split(split);
  if (indices.empty()) throw DataError("cannot evaluate on empty " + split_label(split) + " split");
  const auto pred = predict_with(net, params, data, indices);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) correct += pred[i] == data.labels[indices[i]];
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

/// Loss on a batch: (student logits, batch images, labels) -> loss + dLoss/dLogits.
template <class T>
using BatchLoss = std::function<LossWithGrad<T>(const Tensor<T>&, const Tensor<T>&, std::span<const int>)>;

template <class T>
TrainResult<T> fit(const ArchitectureSpec& arch, const LabeledDataset& data, const TrainConfig& cfg,
                   std::optional<MaskedCheckpoint<T>> init, const BatchLoss<T>& loss_fn, const EpochCallback& on_epoch) {
  cfg.validate();
  validate(arch);
  if (data.classes != arch.classes) {
    throw ConfigError("dataset has " + std::to_string(data.classes) + " classes, architecture " +
                      std::to_string(arch.classes));
  }
  if (data.sample_shape() != arch.input) {
    throw ConfigError("dataset sample shape " + shape_string(data.sample_shape()) + " does not match architecture input " +
                      shape_string(arch.input));
  }
  if (data.splits.train.empty()) throw DataError("training split is empty");
  const auto start_clock = std::chrono::steady_clock::now();

  MaskedCheckpoint<T> current = init ? std::move(*init) : MaskedCheckpoint<T>::fresh(arch, cfg.seed);
  if (!(current.arch == arch)) throw ConfigError("initial checkpoint architecture differs from the requested one");
  if (current.masks.empty()) current.masks = MaskSet::all_ones(current.params.layout());
  check_mask_layout(current.masks, current.params.layout());
  apply_masks(current.params, current.masks);

  TrainResult<T> result{current, {}};
  if (cfg.epochs == 0) return result;
  if (data.splits.val.empty()) throw DataError("validation split is empty");

  Network<T> net(arch);
  ParamSet<T> velocity = current.params.zeros_like();
  std::vector<std::size_t> order = data.splits.train;
  std::sort(order.begin(), order.end());
  const std::size_t k = arch.classes;
  double best_val = -1;
  std::mt19937_64 augment_rng(mix(cfg.seed ^ 0xa5a5a5a5ULL));
  bool first_batch = true;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    std::vector<std::size_t> perm = order;
    std::mt19937_64 shuffle_rng(mix(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(epoch)));
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < perm.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(perm.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::span<const std::size_t> idx(perm.data() + begin, end - begin);
      Tensor<T> batch = gather_images<T>(data, idx);
      if (cfg.augment) augment_batch(batch, augment_rng);
      const auto labels = gather_labels(data, idx);
      const auto logits = net.forward(current.params, batch, Mode::Train);
      const auto lg = loss_fn(logits, batch, labels);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(begin / cfg.batch_size));
      }
      if (first_batch) {
        result.report.initial_loss = lg.loss;
        first_batch = false;
      }
      const auto grads = net.backward(current.params, lg.grad);
      sgd_nesterov_step(current.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay, &current.masks,
                        cfg.decay_bn);
      loss_sum += lg.loss * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) correct += argmax_row(logits.data() + i * k, k) == static_cast<std::size_t>(labels[i]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(perm.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(perm.size());
    rec.val_acc = accuracy_with(net, current.params, data, SplitName::Val);
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_acc > best_val) {
      best_val = rec.val_acc;
      result.report.best_val_epoch = epoch;
      result.checkpoint.params = current.params;
      result.checkpoint.meta.epoch = epoch + 1;
    }
  }

  auto& metrics = result.checkpoint.meta.metrics;
  metrics["val_acc"] = best_val;
  metrics["sparsity"] = sparsity(result.checkpoint.masks);
  if (!data.splits.test.empty()) {
    metrics["test_acc"] = accuracy_with(net, result.checkpoint.params, data, SplitName::Test);
  }
  result.report.final_metrics = metrics;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_clock).count();
  return result;
}

}  // namespace

template <class T>
TrainResult<T> train(const ArchitectureSpec& arch, const LabeledDataset& data, const TrainConfig& cfg,
                     std::optional<MaskedCheckpoint<T>> init, const EpochCallback& on_epoch) {
  BatchLoss<T> loss = [](const Tensor<T>& logits, const Tensor<T>&, std::span<const int> labels) {
    return cross_entropy_loss(logits, labels);
  };
  return fit<T>(arch, data, cfg, std::move(init), loss, on_epoch);
}

template <class T>
TrainResult<T> distill(const ArchitectureSpec& student_arch, const MaskedCheckpoint<T>& teacher,
                       const LabeledDataset& data, const DistillConfig& dcfg, const TrainConfig& tcfg,
                       std::optional<MaskedCheckpoint<T>> init, const EpochCallback& on_epoch) {
  dcfg.validate();
  if (teacher.arch.classes != student_arch.classes) {
    throw ConfigError("teacher has " + std::to_string(teacher.arch.classes) + " classes, student " +
                      std::to_string(student_arch.classes));
  }
  if (teacher.arch.input != student_arch.input) throw ConfigError("teacher and student input shapes differ");
  auto teacher_params = teacher.params;
  if (teacher.has_masks()) apply_masks(teacher_params, teacher.masks);
  auto teacher_net = std::make_shared<Network<T>>(teacher.arch);
  BatchLoss<T> loss = [teacher_net, teacher_params = std::move(teacher_params), dcfg](
                          const Tensor<T>& logits, const Tensor<T>& batch, std::span<const int> labels) {
    const auto teacher_logits = teacher_net->infer(teacher_params, batch);
    return kd_loss_with_grad(logits, teacher_logits, labels, dcfg);
  };
  auto result = fit<T>(student_arch, data, tcfg, std::move(init), loss, on_epoch);
  if (!tcfg.epochs) return result;
  const SplitName split = data.splits.test.empty() ? SplitName::Val : SplitName::Test;
  result.report.final_metrics["agreement"] = agreement(result.checkpoint, teacher, data, split);
  result.checkpoint.meta.metrics["agreement"] = result.report.final_metrics["agreement"];
  return result;
}

template <class T>
std::vector<int> predict(const MaskedCheckpoint<T>& ckpt, const LabeledDataset& data, SplitName split) {
  Network<T> net(ckpt.arch);
  auto params = ckpt.params;
  if (ckpt.has_masks()) apply_masks(params, ckpt.masks);
  return predict_with(net, params, data, data.split(split));
}

template <class T>
double evaluate(const MaskedCheckpoint<T>& ckpt, const LabeledDataset& data, SplitName split) {
  if (data.split(split).empty()) throw DataError("cannot evaluate on empty " + split_label(split) + " split");
  const auto pred = predict(ckpt, data, split);
  const auto& indices = data.split(split);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) correct += pred[i] == data.labels[indices[i]];
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

template <class T>
double agreement(const MaskedCheckpoint<T>& student, const MaskedCheckpoint<T>& teacher, const LabeledDataset& data,
                 SplitName split) {
  if (student.arch.classes != teacher.arch.classes) throw ConfigError("agreement needs equal class counts");
  if (data.split(split).empty()) throw DataError("cannot compare on empty " + split_label(split) + " split");
  const auto a = predict(student, data, split);
  const auto b = predict(teacher, data, split);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

#define PTD_INSTANTIATE(T)                                                                                          \
  template void sgd_nesterov_step<T>(ParamSet<T>&, const ParamSet<T>&, ParamSet<T>&, double, double, double,       \
                                     const MaskSet*, bool);                                                        \
  template TrainResult<T> train<T>(const ArchitectureSpec&, const LabeledDataset&, const TrainConfig&,             \
                                   std::optional<MaskedCheckpoint<T>>, const EpochCallback&);                      \
  template TrainResult<T> distill<T>(const ArchitectureSpec&, const MaskedCheckpoint<T>&, const LabeledDataset&,   \
                                     const DistillConfig&, const TrainConfig&, std::optional<MaskedCheckpoint<T>>, \
                                     const EpochCallback&);                                                        \
  template std::vector<int> predict<T>(const MaskedCheckpoint<T>&, const LabeledDataset&, SplitName);              \
  template double evaluate<T>(const MaskedCheckpoint<T>&, const LabeledDataset&, SplitName);                       \
  template double agreement<T>(const MaskedCheckpoint<T>&, const MaskedCheckpoint<T>&, const LabeledDataset&,      \
                               SplitName);

PTD_INSTANTIATE(float)
PTD_INSTANTIATE(double)

#undef PTD_INSTANTIATE

}  // namespace ptd
