#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ptd/arch.hpp"
#include "ptd/data.hpp"
#include "ptd/losses.hpp"
#include "ptd/pruning.hpp"
#include "ptd/trainer.hpp"

namespace ptd {

struct ArchConfig {
  std::string preset;  // a presets:: name, or
  std::string file;    // an architecture JSON file
  double scale = 1.0;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct DataConfig {
  std::string kind = "synthetic";  // synthetic | idx | cifar10 | cifar100
  BlobSpec blobs;
  double test_fraction = 0.2;  // synthetic only: held-out test share
  std::string train_images, train_labels, test_images, test_labels;
  std::vector<std::string> train_files, test_files;
  std::string label_mode = "fine";
  double val_fraction = 0.1;
  std::uint64_t split_seed = 0;
  std::vector<double> mean, stddev;  // empty: synthetic gets 0.5 / 0.5, others stay raw
  bool augment = false;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct DistillSection {
  DistillConfig loss;
  TrainConfig schedule;

  friend bool operator==(const DistillSection&, const DistillSection&) = default;
};

struct StudentConfig {
  std::string arch_file;  // optional fixed student; otherwise solved from the pruned teacher

  friend bool operator==(const StudentConfig&, const StudentConfig&) = default;
};

struct ReportConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  friend bool operator==(const ReportConfig&, const ReportConfig&) = default;
};

struct PipelineConfig {
  std::string provenance;
  std::uint64_t seed = 0;
  ArchConfig arch;
  DataConfig data;
  TrainConfig train;
  PruneConfig prune;
  DistillSection distill;
  StudentConfig student;
  ReportConfig report;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Strict parse: unknown keys anywhere are a ConfigError. Relative paths resolve
/// against `base_dir`.
PipelineConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::string& path);

/// Fully resolved form; parse_config(to_json(cfg)) == cfg.
nlohmann::json config_to_json(const PipelineConfig& cfg);

/// Loads or generates the dataset, applies the splits and normalization.
LabeledDataset load_data(const DataConfig& cfg);

/// Teacher architecture; presets take their input shape and class count from the data.
ArchitectureSpec resolve_arch(const ArchConfig& cfg, const Shape& input, int classes);

}  // namespace ptd
