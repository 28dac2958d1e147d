#include "ptd/config.hpp"

#include <fstream>

#include "ptd/error.hpp"
#include "ptd/json_util.hpp"
#include "ptd/presets.hpp"

namespace ptd {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string resolve_path(const std::string& p, const fs::path& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void parse_schedule(const json& j, TrainConfig& t) {
  t.epochs = get_or(j, "epochs", t.epochs);
  t.batch_size = get_or(j, "batch_size", t.batch_size);
  t.lr = get_or(j, "lr", t.lr);
  t.lr_drops = get_or(j, "lr_drops", t.lr_drops);
  t.drop_factor = get_or(j, "drop_factor", t.drop_factor);
  t.weight_decay = get_or(j, "weight_decay", t.weight_decay);
  t.momentum = get_or(j, "momentum", t.momentum);
  t.decay_bn = get_or(j, "decay_bn", t.decay_bn);
}

json schedule_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},           {"batch_size", t.batch_size},
          {"lr", t.lr},                   {"lr_drops", t.lr_drops},
          {"drop_factor", t.drop_factor}, {"weight_decay", t.weight_decay},
          {"momentum", t.momentum},       {"decay_bn", t.decay_bn}};
}

ArchConfig parse_arch(const json& j, const fs::path& base) {
  require_known_keys(j, {"preset", "file", "scale"}, "arch");
  ArchConfig a;
  a.preset = get_or<std::string>(j, "preset", "");
  a.file = resolve_path(get_or<std::string>(j, "file", ""), base);
  a.scale = get_or(j, "scale", a.scale);
  if (a.preset.empty() == a.file.empty()) throw ConfigError("arch: exactly one of 'preset' or 'file' is required");
  if (!(a.scale > 0)) throw ConfigError("arch: scale must be positive");
  return a;
}

DataConfig parse_data(const json& j, const fs::path& base) {
  DataConfig d;
  d.kind = get_or<std::string>(j, "kind", d.kind);
  if (d.kind == "synthetic") {
    require_known_keys(j,
                       {"kind", "classes", "channels", "height", "width", "per_class", "noise_std", "seed",
                        "test_fraction", "val_fraction", "split_seed", "mean", "std", "augment"},
                       "data");
    d.blobs.classes = get_or(j, "classes", d.blobs.classes);
    d.blobs.channels = get_or(j, "channels", d.blobs.channels);
    d.blobs.height = get_or(j, "height", d.blobs.height);
    d.blobs.width = get_or(j, "width", d.blobs.width);
    d.blobs.per_class = get_or(j, "per_class", d.blobs.per_class);
    d.blobs.noise_std = get_or(j, "noise_std", d.blobs.noise_std);
    d.blobs.seed = get_or(j, "seed", d.blobs.seed);
    d.test_fraction = get_or(j, "test_fraction", d.test_fraction);
    if (!(d.test_fraction >= 0 && d.test_fraction < 1)) throw ConfigError("data: test_fraction must lie in [0, 1)");
  } else if (d.kind == "idx") {
    require_known_keys(j,
                       {"kind", "train_images", "train_labels", "test_images", "test_labels", "val_fraction",
                        "split_seed", "mean", "std", "augment"},
                       "data");
    d.train_images = resolve_path(get_required<std::string>(j, "train_images", "data"), base);
    d.train_labels = resolve_path(get_required<std::string>(j, "train_labels", "data"), base);
    d.test_images = resolve_path(get_or<std::string>(j, "test_images", ""), base);
    d.test_labels = resolve_path(get_or<std::string>(j, "test_labels", ""), base);
    if (d.test_images.empty() != d.test_labels.empty()) {
      throw ConfigError("data: test_images and test_labels go together");
    }
  } else if (d.kind == "cifar10" || d.kind == "cifar100") {
    require_known_keys(
        j, {"kind", "train_files", "test_files", "label_mode", "val_fraction", "split_seed", "mean", "std", "augment"},
        "data");
    for (auto& f : get_required<std::vector<std::string>>(j, "train_files", "data")) {
      d.train_files.push_back(resolve_path(f, base));
    }
    for (auto& f : get_or<std::vector<std::string>>(j, "test_files", {})) d.test_files.push_back(resolve_path(f, base));
    d.label_mode = get_or(j, "label_mode", d.label_mode);
    if (d.label_mode != "fine" && d.label_mode != "coarse") {
      throw ConfigError("data: label_mode must be 'fine' or 'coarse'");
    }
  } else {
    throw ConfigError("data: unknown kind '" + d.kind + "' (expected synthetic, idx, cifar10 or cifar100)");
  }
  d.val_fraction = get_or(j, "val_fraction", d.val_fraction);
  d.split_seed = get_or(j, "split_seed", d.split_seed);
  d.mean = get_or(j, "mean", d.mean);
  d.stddev = get_or(j, "std", d.stddev);
  d.augment = get_or(j, "augment", d.augment);
  if (!(d.val_fraction > 0 && d.val_fraction < 1)) throw ConfigError("data: val_fraction must lie in (0, 1)");
  if (d.mean.size() != d.stddev.size()) throw ConfigError("data: mean and std must have the same length");
  return d;
}

json data_json(const DataConfig& d) {
  json j = {{"kind", d.kind}};
  if (d.kind == "synthetic") {
    j["classes"] = d.blobs.classes;
    j["channels"] = d.blobs.channels;
    j["height"] = d.blobs.height;
    j["width"] = d.blobs.width;
    j["per_class"] = d.blobs.per_class;
    j["noise_std"] = d.blobs.noise_std;
    j["seed"] = d.blobs.seed;
    j["test_fraction"] = d.test_fraction;
  } else if (d.kind == "idx") {
    j["train_images"] = d.train_images;
    j["train_labels"] = d.train_labels;
    if (!d.test_images.empty()) {
      j["test_images"] = d.test_images;
      j["test_labels"] = d.test_labels;
    }
  } else {
    j["train_files"] = d.train_files;
    j["test_files"] = d.test_files;
    j["label_mode"] = d.label_mode;
  }
  j["val_fraction"] = d.val_fraction;
  j["split_seed"] = d.split_seed;
  j["mean"] = d.mean;
  j["std"] = d.stddev;
  j["augment"] = d.augment;
  return j;
}

PruneConfig parse_prune(const json& j) {
  require_known_keys(j,
                     {"rate_per_iteration", "iterations", "target_sparsity", "post_epochs", "post_batch_size",
                      "post_lr", "post_lr_drops", "post_drop_factor", "post_weight_decay", "momentum", "method",
                      "synflow_rounds", "decay_bn"},
                     "prune");
  PruneConfig p;
  p.rate_per_iteration = get_or(j, "rate_per_iteration", p.rate_per_iteration);
  if (j.contains("iterations") && j.contains("target_sparsity")) {
    throw ConfigError("prune: give either iterations or target_sparsity, not both");
  }
  p.iterations = get_or(j, "iterations", p.iterations);
  if (j.contains("target_sparsity")) {
    p.iterations = iterations_for_target(get_required<double>(j, "target_sparsity", "prune"), p.rate_per_iteration);
  }
  p.post_epochs = get_or(j, "post_epochs", p.post_epochs);
  p.post_batch_size = get_or(j, "post_batch_size", p.post_batch_size);
  p.post_lr = get_or(j, "post_lr", p.post_lr);
  p.post_lr_drops = get_or(j, "post_lr_drops", p.post_lr_drops);
  p.post_drop_factor = get_or(j, "post_drop_factor", p.post_drop_factor);
  p.post_weight_decay = get_or(j, "post_weight_decay", p.post_weight_decay);
  p.momentum = get_or(j, "momentum", p.momentum);
  p.method = parse_prune_method(get_or<std::string>(j, "method", prune_method_name(p.method)));
  p.synflow_rounds = get_or(j, "synflow_rounds", p.synflow_rounds);
  p.decay_bn = get_or(j, "decay_bn", p.decay_bn);
  return p;
}

}  // namespace

PipelineConfig parse_config(const json& j, const fs::path& base) {
  require_known_keys(j, {"provenance", "seed", "arch", "data", "train", "prune", "distill", "student", "report"},
                     "config");
  PipelineConfig cfg;
  cfg.provenance = get_or<std::string>(j, "provenance", "");
  cfg.seed = get_or(j, "seed", cfg.seed);
  cfg.arch = parse_arch(get_required<json>(j, "arch", "config"), base);
  cfg.data = parse_data(get_or(j, "data", json::object()), base);

  const json train = get_or(j, "train", json::object());
  require_known_keys(train,
                     {"epochs", "batch_size", "lr", "lr_drops", "drop_factor", "weight_decay", "momentum", "decay_bn"},
                     "train");
  parse_schedule(train, cfg.train);

  cfg.prune = parse_prune(get_or(j, "prune", json::object()));

  const json distill = get_or(j, "distill", json::object());
  require_known_keys(distill,
                     {"alpha", "tau", "tau_sq_scaling", "epochs", "batch_size", "lr", "lr_drops", "drop_factor",
                      "weight_decay", "momentum", "decay_bn"},
                     "distill");
  cfg.distill.loss.alpha = get_or(distill, "alpha", cfg.distill.loss.alpha);
  cfg.distill.loss.tau = get_or(distill, "tau", cfg.distill.loss.tau);
  cfg.distill.loss.tau_sq_scaling = get_or(distill, "tau_sq_scaling", cfg.distill.loss.tau_sq_scaling);
  parse_schedule(distill, cfg.distill.schedule);

  const json student = get_or(j, "student", json::object());
  require_known_keys(student, {"arch_file"}, "student");
  cfg.student.arch_file = resolve_path(get_or<std::string>(student, "arch_file", ""), base);

  const json report = get_or(j, "report", json::object());
  require_known_keys(report, {"seeds"}, "report");
  cfg.report.seeds = get_or(report, "seeds", cfg.report.seeds);
  if (cfg.report.seeds.empty()) throw ConfigError("report: seeds must not be empty");

  cfg.train.augment = cfg.data.augment;
  cfg.distill.schedule.augment = cfg.data.augment;
  cfg.prune.augment = cfg.data.augment;
  cfg.train.validate();
  cfg.prune.validate();
  cfg.distill.loss.validate();
  cfg.distill.schedule.validate();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, fs::path(path).parent_path());
}

json config_to_json(const PipelineConfig& cfg) {
  json arch = {{"scale", cfg.arch.scale}};
  if (!cfg.arch.preset.empty()) arch["preset"] = cfg.arch.preset;
  if (!cfg.arch.file.empty()) arch["file"] = cfg.arch.file;

  json prune;
  to_json(prune, cfg.prune);
  prune.erase("augment");

  json distill = schedule_json(cfg.distill.schedule);
  distill["alpha"] = cfg.distill.loss.alpha;
  distill["tau"] = cfg.distill.loss.tau;
  distill["tau_sq_scaling"] = cfg.distill.loss.tau_sq_scaling;

  json student = json::object();
  if (!cfg.student.arch_file.empty()) student["arch_file"] = cfg.student.arch_file;

  return {{"provenance", cfg.provenance},
          {"seed", cfg.seed},
          {"arch", arch},
          {"data", data_json(cfg.data)},
          {"train", schedule_json(cfg.train)},
          {"prune", prune},
          {"distill", distill},
          {"student", student},
          {"report", {{"seeds", cfg.report.seeds}}}};
}

LabeledDataset load_data(const DataConfig& cfg) {
  LabeledDataset ds;
  std::vector<double> mean = cfg.mean, stddev = cfg.stddev;
  if (cfg.kind == "synthetic") {
    ds = synthetic_blobs(cfg.blobs);
    if (cfg.test_fraction > 0) ds = hold_out_test(std::move(ds), cfg.test_fraction, cfg.split_seed);
    if (mean.empty()) {
      mean.assign(static_cast<std::size_t>(cfg.blobs.channels), 0.5);
      stddev.assign(static_cast<std::size_t>(cfg.blobs.channels), 0.5);
    }
  } else if (cfg.kind == "idx") {
    ds = load_idx(cfg.train_images, cfg.train_labels);
    if (!cfg.test_images.empty()) ds = with_test_set(std::move(ds), load_idx(cfg.test_images, cfg.test_labels));
  } else {
    const auto format = cfg.kind == "cifar10" ? CifarFormat::Cifar10 : CifarFormat::Cifar100;
    const auto mode = cfg.label_mode == "coarse" ? LabelMode::Coarse : LabelMode::Fine;
    ds = load_cifar_binary(cfg.train_files, format, mode);
    if (!cfg.test_files.empty()) ds = with_test_set(std::move(ds), load_cifar_binary(cfg.test_files, format, mode));
  }
  ds = split_train_val(std::move(ds), cfg.val_fraction, cfg.split_seed);
  if (!mean.empty()) ds = normalize(std::move(ds), mean, stddev);
  ds.validate();
  return ds;
}

ArchitectureSpec resolve_arch(const ArchConfig& cfg, const Shape& input, int classes) {
  ArchitectureSpec arch = cfg.file.empty() ? presets::by_name(cfg.preset, classes, input) : load_arch_file(cfg.file);
  if (cfg.scale != 1.0) arch = scale_channels(arch, cfg.scale);
  if (arch.input != input) {
    throw ConfigError("architecture '" + arch.name + "' expects input " + shape_string(arch.input) +
                      " but the data provides " + shape_string(input));
  }
  if (arch.classes != classes) {
    throw ConfigError("architecture '" + arch.name + "' has " + std::to_string(arch.classes) +
                      " classes but the data has " + std::to_string(classes));
  }
  validate(arch);
  return arch;
}

}  // namespace ptd
