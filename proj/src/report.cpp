#include "ptd/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ptd/error.hpp"

namespace ptd {

std::string format_real(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string run_report_csv(const RunReport& report) {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,val_acc,lr\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << format_real(e.train_loss) << ',' << format_real(e.train_acc) << ','
        << format_real(e.val_acc) << ',' << format_real(e.lr) << '\n';
  }
  return out.str();
}

std::string prune_log_csv(const std::vector<PruneIteration>& iterations) {
  std::ostringstream out;
  out << "iteration,target_sparsity,sparsity,val_acc,fine_tune_epochs\n";
  for (const auto& it : iterations) {
    out << it.iteration << ',' << format_real(it.target_sparsity) << ',' << format_real(it.sparsity) << ','
        << format_real(it.val_acc) << ',' << it.fine_tune.epochs.size() << '\n';
  }
  return out.str();
}

std::string census_csv(const StudentPlan& plan) {
  std::ostringstream out;
  out << "layer,A,n_i,c_i,student_params,teacher_params,ratio\n";
  for (const auto& r : plan.rows) {
    const double ratio = r.teacher_capacity > 0
                             ? static_cast<double>(r.student_params) / static_cast<double>(r.teacher_capacity)
                             : 0.0;
    out << r.label << ',' << r.kernel_area << ',' << r.nonzero << ',' << r.channels << ',' << r.student_params << ','
        << r.teacher_capacity << ',' << format_real(ratio) << '\n';
  }
  return out.str();
}

std::string metrics_csv(const std::map<std::string, double>& metrics) {
  std::ostringstream out;
  out << "metric,value\n";
  for (const auto& [k, v] : metrics) out << k << ',' << format_real(v) << '\n';
  return out.str();
}

double SeedTable::mean(const std::string& metric) const {
  const auto& v = metrics.at(metric);
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double SeedTable::stddev(const std::string& metric) const {
  const auto& v = metrics.at(metric);
  if (v.size() < 2) return 0.0;
  const double m = mean(metric);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string seed_summary_csv(const SeedTable& table) {
  std::ostringstream out;
  out << "metric";
  for (auto s : table.seeds) out << ",seed_" << s;
  out << ",mean,std\n";
  for (const auto& [name, values] : table.metrics) {
    out << name;
    for (double v : values) out << ',' << format_real(v);
    out << ',' << format_real(table.mean(name)) << ',' << format_real(table.stddev(name)) << '\n';
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace ptd
