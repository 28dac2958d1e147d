#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ptd/tensor.hpp"

namespace ptd {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

enum class SplitName { Train, Val, Test };

SplitName parse_split(const std::string& name);
std::string split_label(SplitName split);

/// Images N x C x H x W (float storage), labels in [0, classes), disjoint splits.
struct LabeledDataset {
  Tensor<float> images;
  std::vector<int> labels;
  int classes = 0;
  Splits splits;
  std::vector<double> mean;  // per-channel normalization applied, empty when raw
  std::vector<double> stddev;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  const std::vector<std::size_t>& split(SplitName which) const;

  /// Labels in range, images finite, splits disjoint and in range.
  void validate() const;
};

/// IDX pair (images magic 0x00000803, labels magic 0x00000801, big-endian dims).
/// Pixels scaled to [0,1]; all samples land in the train split.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

enum class CifarFormat { Cifar10, Cifar100 };
enum class LabelMode { Fine, Coarse };

/// Concatenates CIFAR binary batches. Pixels scaled to [0,1], channels R,G,B.
LabeledDataset load_cifar_binary(const std::vector<std::string>& paths, CifarFormat format,
                                 LabelMode mode = LabelMode::Fine);

struct BlobSpec {
  int classes = 10;
  int channels = 3;
  int height = 16;
  int width = 16;
  int per_class = 100;
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  friend bool operator==(const BlobSpec&, const BlobSpec&) = default;
};

/// Class k = fixed smooth low-frequency template + N(0, noise_std) noise, all in the train split.
LabeledDataset synthetic_blobs(const BlobSpec& spec);

/// Seeded permutation of the train split; the first (1-f) part stays train, the rest becomes val.
LabeledDataset split_train_val(LabeledDataset ds, double val_fraction, std::uint64_t seed);

/// Moves a seeded `fraction` of the train split into the test split.
LabeledDataset hold_out_test(LabeledDataset ds, double fraction, std::uint64_t seed);

/// Appends `test`'s samples to `train` as its test split.
LabeledDataset with_test_set(LabeledDataset train, const LabeledDataset& test);

/// x' = (x - mean) / std per channel.
LabeledDataset normalize(LabeledDataset ds, const std::vector<double>& mean, const std::vector<double>& stddev);
LabeledDataset denormalize(LabeledDataset ds);

template <class T>
Tensor<T> gather_images(const LabeledDataset& ds, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const LabeledDataset& ds, std::span<const std::size_t> indices);

/// Pad-4 random crop plus random horizontal flip, per sample.
template <class T>
void augment_batch(Tensor<T>& batch, std::mt19937_64& rng);

}  // namespace ptd
