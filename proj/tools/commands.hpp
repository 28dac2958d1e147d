#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ptd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitVerify = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string teacher;
  std::string student;
  std::string checkpoint;
  std::optional<double> target_sparsity;
  std::string method;
  std::string out = ".";
  bool deterministic = false;
  std::string precision = "f32";
  std::vector<std::string> smooth_pairs;  // "dense.ptdl,pruned.ptdl"
  bool quiet = false;
};

int cmd_train(const Options& opt);
int cmd_prune(const Options& opt);
int cmd_make_student(const Options& opt);
int cmd_distill(const Options& opt);
int cmd_eval(const Options& opt);
int cmd_verify(const Options& opt);
int cmd_report(const Options& opt);

/// Runs `fn`, mapping the error hierarchy to exit codes and printing the message.
int guarded(int (*fn)(const Options&), const Options& opt);

}  // namespace ptd::cli
