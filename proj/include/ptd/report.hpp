#pragma once

#include <map>
#include <string>
#include <vector>

#include "ptd/pruning.hpp"
#include "ptd/student.hpp"
#include "ptd/trainer.hpp"

namespace ptd {

/// Shortest text that parses back to the same double.
std::string format_real(double x);

/// Columns: epoch,train_loss,train_acc,val_acc,lr.
std::string run_report_csv(const RunReport& report);
/// Columns: iteration,target_sparsity,sparsity,val_acc,fine_tune_epochs.
std::string prune_log_csv(const std::vector<PruneIteration>& iterations);
/// Columns: layer,A,n_i,c_i,student_params,teacher_params,ratio (student / teacher weights).
std::string census_csv(const StudentPlan& plan);
/// Columns: metric,value.
std::string metrics_csv(const std::map<std::string, double>& metrics);

struct SeedTable {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<double>> metrics;  // one value per seed

  double mean(const std::string& metric) const;
  /// Sample standard deviation (n - 1); 0 for a single seed.
  double stddev(const std::string& metric) const;
};

/// Columns: metric,seed_<s>...,mean,std.
std::string seed_summary_csv(const SeedTable& table);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace ptd
