#include "ptd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

namespace ptd {

SplitName parse_split(const std::string& name) {
  if (name == "train") return SplitName::Train;
  if (name == "val") return SplitName::Val;
  if (name == "test") return SplitName::Test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::string split_label(SplitName split) {
  switch (split) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::Test: return "test";
  }
  return "train";
}

Shape LabeledDataset::sample_shape() const {
  return Shape(images.shape().begin() + 1, images.shape().end());
}

const std::vector<std::size_t>& LabeledDataset::split(SplitName which) const {
  switch (which) {
    case SplitName::Train: return splits.train;
    case SplitName::Val: return splits.val;
    case SplitName::Test: return splits.test;
  }
  return splits.train;
}

void LabeledDataset::validate() const {
  if (images.rank() != 4) throw DataError("dataset images must be N x C x H x W");
  if (static_cast<std::size_t>(images.dim(0)) != labels.size()) throw DataError("image and label counts differ");
  if (classes <= 0) throw DataError("dataset has no classes");
  for (int y : labels) {
    if (y < 0 || y >= classes) throw DataError("label " + std::to_string(y) + " outside class range");
  }
  if (!images.all_finite()) throw DataError("dataset contains non-finite pixels");
  std::vector<unsigned char> seen(labels.size(), 0);
  for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
    for (std::size_t i : *part) {
      if (i >= labels.size()) throw DataError("split index out of range");
      if (seen[i]++) throw DataError("sample " + std::to_string(i) + " appears in two splits");
    }
  }
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t at, const std::string& path) {
  if (bytes.size() < at + 4) {
    throw TruncatedError(path + ": truncated IDX header, expected at least " + std::to_string(at + 4) +
                         " bytes, found " + std::to_string(bytes.size()));
  }
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  const auto img_magic = read_be32(img, 0, images_path);
  if (img_magic != 0x00000803) {
    throw BadMagicError(images_path + ": bad IDX image magic " + std::to_string(img_magic) + " (expected 2051)");
  }
  const auto lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801) {
    throw BadMagicError(labels_path + ": bad IDX label magic " + std::to_string(lab_magic) + " (expected 2049)");
  }
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  const std::size_t img_expected = 16 + n * rows * cols;
  if (img.size() < img_expected) {
    throw TruncatedError(images_path + ": truncated, expected " + std::to_string(img_expected) + " bytes, found " +
                         std::to_string(img.size()));
  }
  if (lab.size() < 8 + n_labels) {
    throw TruncatedError(labels_path + ": truncated, expected " + std::to_string(8 + n_labels) + " bytes, found " +
                         std::to_string(lab.size()));
  }
  if (n != n_labels) {
    throw CountMismatchError("IDX image count " + std::to_string(n) + " does not match label count " +
                             std::to_string(n_labels));
  }
  if (n == 0 || rows == 0 || cols == 0) throw DataError(images_path + ": empty IDX file");
  LabeledDataset ds;
  ds.images = Tensor<float>({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
  for (std::size_t i = 0; i < n * rows * cols; ++i) ds.images[i] = img[16 + i] / 255.0f;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lab[8 + i];
  ds.classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.splits.train = iota(n);
  return ds;
}

LabeledDataset load_cifar_binary(const std::vector<std::string>& paths, CifarFormat format, LabelMode mode) {
  if (paths.empty()) throw DataError("no CIFAR files given");
  constexpr std::size_t pixels = 3 * 32 * 32;
  const std::size_t label_bytes = format == CifarFormat::Cifar100 ? 2 : 1;
  const std::size_t record = label_bytes + pixels;
  std::vector<float> images;
  std::vector<int> labels;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % record != 0) {
      throw DataError(path + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(record) + "-byte record size");
    }
    for (std::size_t off = 0; off < bytes.size(); off += record) {
      int label;
      if (format == CifarFormat::Cifar100) {
        label = mode == LabelMode::Coarse ? bytes[off] : bytes[off + 1];
      } else {
        label = bytes[off];
      }
      labels.push_back(label);
      for (std::size_t p = 0; p < pixels; ++p) images.push_back(bytes[off + label_bytes + p] / 255.0f);
    }
  }
  LabeledDataset ds;
  const int n = static_cast<int>(labels.size());
  ds.images = Tensor<float>({n, 3, 32, 32}, std::move(images));
  ds.labels = std::move(labels);
  ds.classes = format == CifarFormat::Cifar10 ? 10 : (mode == LabelMode::Coarse ? 20 : 100);
  ds.splits.train = iota(ds.labels.size());
  ds.validate();
  return ds;
}

LabeledDataset synthetic_blobs(const BlobSpec& spec) {
  if (spec.classes <= 0 || spec.channels <= 0 || spec.height <= 0 || spec.width <= 0 || spec.per_class <= 0) {
    throw ConfigError("synthetic_blobs needs positive counts");
  }
  if (spec.noise_std < 0) throw ConfigError("synthetic_blobs noise_std must be non-negative");
  constexpr int kWaves = 3;
  std::mt19937_64 template_rng(spec.seed);
  std::uniform_real_distribution<double> freq(0.25, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  const std::size_t plane = static_cast<std::size_t>(spec.height) * spec.width;
  const std::size_t sample = plane * spec.channels;
  std::vector<double> templates(sample * spec.classes, 0.0);
  for (int k = 0; k < spec.classes; ++k) {
    for (int c = 0; c < spec.channels; ++c) {
      double* t = templates.data() + k * sample + c * plane;
      for (int w = 0; w < kWaves; ++w) {
        const double fx = freq(template_rng), fy = freq(template_rng), ph = phase(template_rng);
        const double a = amp(template_rng);
        for (int y = 0; y < spec.height; ++y) {
          for (int x = 0; x < spec.width; ++x) {
            t[y * spec.width + x] += a / kWaves *
                                     std::sin(2 * std::numbers::pi * (fx * x / spec.width + fy * y / spec.height) + ph);
          }
        }
      }
      for (std::size_t i = 0; i < plane; ++i) t[i] = 0.5 + 0.5 * t[i];
    }
  }
  std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int n = spec.classes * spec.per_class;
  LabeledDataset ds;
  ds.images = Tensor<float>({n, spec.channels, spec.height, spec.width});
  ds.labels.resize(n);
  ds.classes = spec.classes;
  for (int i = 0; i < n; ++i) {
    const int k = i % spec.classes;
    ds.labels[i] = k;
    const double* t = templates.data() + k * sample;
    float* out = ds.images.data() + static_cast<std::size_t>(i) * sample;
    for (std::size_t p = 0; p < sample; ++p) {
      const double eps = noise(noise_rng);
      out[p] = static_cast<float>(t[p] + spec.noise_std * eps);
    }
  }
  ds.splits.train = iota(ds.labels.size());
  return ds;
}

namespace {

void move_fraction(std::vector<std::size_t>& from, std::vector<std::size_t>& to, double fraction,
                   std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  std::vector<std::size_t> order = from;
  std::sort(order.begin(), order.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto keep = static_cast<std::size_t>(std::llround((1.0 - fraction) * order.size()));
  to.insert(to.end(), order.begin() + keep, order.end());
  order.resize(keep);
  from = std::move(order);
}

}  // namespace

LabeledDataset split_train_val(LabeledDataset ds, double val_fraction, std::uint64_t seed) {
  // Re-splitting folds any existing val samples back into train first.
  ds.splits.train.insert(ds.splits.train.end(), ds.splits.val.begin(), ds.splits.val.end());
  ds.splits.val.clear();
  move_fraction(ds.splits.train, ds.splits.val, val_fraction, seed);
  return ds;
}

LabeledDataset hold_out_test(LabeledDataset ds, double fraction, std::uint64_t seed) {
  move_fraction(ds.splits.train, ds.splits.test, fraction, seed ^ 0x5bd1e995ULL);
  return ds;
}

LabeledDataset with_test_set(LabeledDataset train, const LabeledDataset& test) {
  if (train.sample_shape() != test.sample_shape()) throw DataError("train and test image shapes differ");
  const std::size_t base = train.size();
  std::vector<float> images = std::move(train.images.values());
  images.insert(images.end(), test.images.values().begin(), test.images.values().end());
  Shape shape = train.images.shape();
  shape[0] = static_cast<int>(base + test.size());
  train.images = Tensor<float>(shape, std::move(images));
  train.labels.insert(train.labels.end(), test.labels.begin(), test.labels.end());
  train.classes = std::max(train.classes, test.classes);
  for (std::size_t i = 0; i < test.size(); ++i) train.splits.test.push_back(base + i);
  train.validate();
  return train;
}

LabeledDataset normalize(LabeledDataset ds, const std::vector<double>& mean, const std::vector<double>& stddev) {
  const int c = ds.images.dim(1);
  if (mean.size() != static_cast<std::size_t>(c) || stddev.size() != static_cast<std::size_t>(c)) {
    throw ConfigError("normalization needs one mean/std per channel (" + std::to_string(c) + ")");
  }
  for (double s : stddev) {
    if (!(s > 0)) throw ConfigError("normalization std must be positive");
  }
  if (!ds.mean.empty()) ds = denormalize(std::move(ds));
  const std::size_t plane = ds.images.size() / ds.images.dim(0) / c;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    ds.images[i] = static_cast<float>((ds.images[i] - mean[ch]) / stddev[ch]);
  }
  ds.mean = mean;
  ds.stddev = stddev;
  return ds;
}

LabeledDataset denormalize(LabeledDataset ds) {
  if (ds.mean.empty()) return ds;
  const int c = ds.images.dim(1);
  const std::size_t plane = ds.images.size() / ds.images.dim(0) / c;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const std::size_t ch = (i / plane) % c;
    ds.images[i] = static_cast<float>(ds.images[i] * ds.stddev[ch] + ds.mean[ch]);
  }
  ds.mean.clear();
  ds.stddev.clear();
  return ds;
}

template <class T>
Tensor<T> gather_images(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  Shape shape = ds.images.shape();
  const std::size_t sample = ds.images.size() / shape[0];
  shape[0] = static_cast<int>(indices.size());
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const float* src = ds.images.data() + indices[i] * sample;
    std::copy(src, src + sample, out.data() + i * sample);
  }
  return out;
}

std::vector<int> gather_labels(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = ds.labels[indices[i]];
  return out;
}

template <class T>
void augment_batch(Tensor<T>& batch, std::mt19937_64& rng) {
  constexpr int kPad = 4;
  const int n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  std::uniform_int_distribution<int> shift(-kPad, kPad);
  std::bernoulli_distribution flip(0.5);
  std::vector<T> plane(static_cast<std::size_t>(h) * w);
  for (int s = 0; s < n; ++s) {
    const int dy = shift(rng), dx = shift(rng);
    const bool mirror = flip(rng);
    for (int ch = 0; ch < c; ++ch) {
      T* p = batch.data() + (static_cast<std::size_t>(s) * c + ch) * h * w;
      std::copy(p, p + plane.size(), plane.begin());
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int sy = y + dy;
          const int sx0 = x + dx;
          const int sx = mirror ? w - 1 - sx0 : sx0;
          const bool inside = sy >= 0 && sy < h && sx0 >= 0 && sx0 < w;
          p[y * w + x] = inside ? plane[static_cast<std::size_t>(sy) * w + sx] : T{0};
        }
      }
    }
  }
}

template Tensor<float> gather_images<float>(const LabeledDataset&, std::span<const std::size_t>);
template Tensor<double> gather_images<double>(const LabeledDataset&, std::span<const std::size_t>);
template void augment_batch<float>(Tensor<float>&, std::mt19937_64&);
template void augment_batch<double>(Tensor<double>&, std::mt19937_64&);

}  // namespace ptd
