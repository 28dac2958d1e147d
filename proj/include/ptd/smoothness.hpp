#pragma once

#include <string>
#include <vector>

#include "ptd/checkpoint.hpp"
#include "ptd/data.hpp"

namespace ptd {

struct SmoothnessSample {
  std::size_t sample_index = 0;
  int true_label = 0;
  double prob_a = 0;
  double prob_b = 0;
  double log_ratio = 0;  // ln prob_a - ln prob_b
};

struct SmoothnessReport {
  double mean_log_ratio = 0;
  std::vector<SmoothnessSample> per_sample;
};

/// (1/N) sum_i ln(f_a(x_i)[y_i] / f_b(x_i)[y_i]) over a split, eval mode, probabilities
/// clamped at 1e-12. Positive when model b puts less weight on the true label.
template <class T>
SmoothnessReport smoothness_report(const MaskedCheckpoint<T>& teacher_a, const MaskedCheckpoint<T>& teacher_b,
                                   const LabeledDataset& data, SplitName split = SplitName::Test);

/// Columns: sample_index,true_label,prob_a,prob_b,log_ratio.
void write_smoothness_csv(const SmoothnessReport& report, const std::string& path);

}  // namespace ptd
