#pragma once

#include <string>
#include <vector>

#include "ptd/arch.hpp"
#include "ptd/checkpoint.hpp"

namespace ptd {

enum class CensusKind { Conv, Projection, HiddenDense, Classifier };

struct CensusEntry {
  std::string label;  // conv-0, proj-0, dense-0, fc
  std::string param;  // parameter name of the weight tensor
  CensusKind kind = CensusKind::Conv;
  long long kernel_area = 1;  // kh * kw (1 for dense)
  int in_ch = 0;              // teacher input channels / features
  int out_ch = 0;             // teacher output channels / features
  long long nonzero = 0;
  long long capacity = 0;  // dense weight count of the teacher layer
};

/// Per-layer nonzero counts of a pruned network, in forward order.
struct LayerCensus {
  std::vector<CensusEntry> layers;

  long long total_nonzero() const;
};

/// Census of every prunable tensor from the checkpoint's masks.
template <class T>
LayerCensus census(const MaskedCheckpoint<T>& ckpt);

/// Census built from explicit counts aligned with the architecture's prunable tensors.
LayerCensus census_from_counts(const ArchitectureSpec& arch, const std::vector<long long>& nonzero);

struct LayerCount {
  std::string label;
  std::string kind;  // conv, proj, dense, fc, bn, relu, maxpool, add
  long long weights = 0;
  long long biases = 0;
  long long bn_params = 0;
  long long macs = 0;
  long long aux_ops = 0;  // elementwise work of BN/ReLU/pool/add, outside the MAC headline
};

struct ModelCount {
  std::vector<LayerCount> layers;
  long long total_weights = 0;  // conv + dense weights only (headline)
  long long total_biases = 0;
  long long total_bn = 0;
  long long total_macs = 0;  // conv + dense multiply-accumulates (headline)
  long long total_aux_ops = 0;

  /// Rows for weight-carrying layers only (conv, proj, dense, fc).
  std::vector<LayerCount> weight_layers() const;
};

/// conv = A * c_in * c_out weights, dense = in * out; biases and BN reported separately.
ModelCount count_params(const ArchitectureSpec& arch);

/// conv = A * c_in * c_out * H_out * W_out, dense = in * out; input shape {C,H,W}.
ModelCount count_macs(const ArchitectureSpec& arch, const Shape& input);
ModelCount count_macs(const ArchitectureSpec& arch);

struct StudentPlanRow {
  std::string label;
  long long kernel_area = 1;
  long long nonzero = 0;
  int channels = 0;
  long long student_params = 0;
  long long teacher_capacity = 0;
};

struct StudentPlan {
  std::vector<int> channels;  // c_0 (input) then every solved main-path width
  ArchitectureSpec arch;
  std::vector<StudentPlanRow> rows;
  long long total_weights = 0;
};

/// c_i = max(1, round(n_i / (A_i * c_{i-1}))), rounding half away from zero. The
/// classifier is not solved; its input width follows from the last conv.
StudentPlan solve_student_channels(const ArchitectureSpec& teacher, const LayerCensus& census);

}  // namespace ptd
