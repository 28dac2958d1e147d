#include "ptd/smoothness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "ptd/losses.hpp"
#include "ptd/network.hpp"

namespace ptd {

namespace {

template <class T>
std::vector<double> true_label_probs(const MaskedCheckpoint<T>& ckpt, const LabeledDataset& data,
                                     const std::vector<std::size_t>& indices) {
  Network<T> net(ckpt.arch);
  auto params = ckpt.params;
  if (ckpt.has_masks()) apply_masks(params, ckpt.masks);
  std::vector<double> out;
  out.reserve(indices.size());
  const std::size_t k = ckpt.arch.classes;
  constexpr std::size_t kBatch = 256;
  for (std::size_t begin = 0; begin < indices.size(); begin += kBatch) {
    const std::size_t end = std::min(indices.size(), begin + kBatch);
    std::span<const std::size_t> idx(indices.data() + begin, end - begin);
    const auto logits = net.infer(params, gather_images<T>(data, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<double> row(logits.data() + i * k, logits.data() + (i + 1) * k);
      out.push_back(softmax(row, 1.0)[data.labels[idx[i]]]);
    }
  }
  return out;
}

}  // namespace

template <class T>
SmoothnessReport smoothness_report(const MaskedCheckpoint<T>& teacher_a, const MaskedCheckpoint<T>& teacher_b,
                                   const LabeledDataset& data, SplitName split) {
  if (teacher_a.arch.classes != teacher_b.arch.classes) throw ConfigError("smoothness needs equal class counts");
  const auto& indices = data.split(split);
  if (indices.empty()) throw DataError("smoothness report on empty " + split_label(split) + " split");
  const auto pa = true_label_probs(teacher_a, data, indices);
  const auto pb = true_label_probs(teacher_b, data, indices);
  SmoothnessReport report;
  double sum = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    SmoothnessSample s;
    s.sample_index = indices[i];
    s.true_label = data.labels[indices[i]];
    s.prob_a = pa[i];
    s.prob_b = pb[i];
    s.log_ratio = std::log(std::max(pa[i], kProbFloor)) - std::log(std::max(pb[i], kProbFloor));
    sum += s.log_ratio;
    report.per_sample.push_back(s);
  }
  report.mean_log_ratio = sum / static_cast<double>(indices.size());
  return report;
}

template SmoothnessReport smoothness_report<float>(const MaskedCheckpoint<float>&, const MaskedCheckpoint<float>&,
                                                   const LabeledDataset&, SplitName);
template SmoothnessReport smoothness_report<double>(const MaskedCheckpoint<double>&, const MaskedCheckpoint<double>&,
                                                    const LabeledDataset&, SplitName);

void write_smoothness_csv(const SmoothnessReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "sample_index,true_label,prob_a,prob_b,log_ratio\n" << std::setprecision(17);
  for (const auto& s : report.per_sample) {
    out << s.sample_index << ',' << s.true_label << ',' << s.prob_a << ',' << s.prob_b << ',' << s.log_ratio << '\n';
  }
}

}  // namespace ptd
