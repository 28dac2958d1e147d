#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "ptd/config.hpp"
#include "ptd/student.hpp"

namespace ptd {

using LogFn = std::function<void(const std::string&)>;

/// Everything one seed of the full pipeline produces, in memory.
template <class T>
struct SeedRun {
  std::uint64_t seed = 0;
  MaskedCheckpoint<T> teacher;
  MaskedCheckpoint<T> pruned;
  StudentPlan plan;
  MaskedCheckpoint<T> scratch;
  MaskedCheckpoint<T> kd_pruned;
  MaskedCheckpoint<T> kd_unpruned;
  std::map<std::string, double> metrics;
};

/// Teacher -> pruned teacher -> solved student, then the three student arms (trained from
/// scratch, distilled from the pruned teacher, distilled from the unpruned one) plus the
/// smoothness log-ratio of the (unpruned, pruned) teacher pair. Artifacts go under
/// `out_dir` when it is non-empty.
template <class T>
SeedRun<T> run_seed(const PipelineConfig& cfg, const LabeledDataset& data, std::uint64_t seed,
                    const std::string& out_dir = {}, const LogFn& log = {});

}  // namespace ptd
