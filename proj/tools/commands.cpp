#include "commands.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ptd/config.hpp"
#include "ptd/error.hpp"
#include "ptd/parallel.hpp"
#include "ptd/pipeline.hpp"
#include "ptd/report.hpp"
#include "ptd/smoothness.hpp"
#include "ptd/student.hpp"
#include "ptd/verify.hpp"

namespace ptd::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Context {
  const Options& opt;

  void log(const std::string& msg) const {
    if (!opt.quiet) std::cerr << msg << '\n';
  }
  std::string path(const std::string& name) const { return (fs::path(opt.out) / name).string(); }
};

Context begin(const Options& opt) {
  parallel::set_deterministic(opt.deterministic);
  parse_precision(opt.precision);
  fs::create_directories(opt.out);
  return Context{opt};
}

PipelineConfig load_cfg(const Options& opt) {
  auto cfg = load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

void write_config(const Context& ctx, const PipelineConfig& cfg) {
  write_text_file(ctx.path("config.json"), config_to_json(cfg).dump(2) + "\n");
}

template <class T>
void save_ckpt(MaskedCheckpoint<T> ckpt, const PipelineConfig* cfg, const std::string& path) {
  if (cfg) ckpt.meta.config = config_to_json(*cfg);
  if constexpr (std::is_same_v<T, float>) {
    save_checkpoint(ckpt, path);
  } else {
    save_checkpoint(ckpt.template cast<float>(), path);
  }
}

template <class T>
MaskedCheckpoint<T> load_ckpt(const std::string& path) {
  auto ckpt = load_checkpoint(path);
  if constexpr (std::is_same_v<T, float>) {
    return ckpt;
  } else {
    return ckpt.template cast<T>();
  }
}

SplitName eval_split(const LabeledDataset& data) {
  return data.splits.test.empty() ? SplitName::Val : SplitName::Test;
}

void check_compatible(const ArchitectureSpec& arch, const LabeledDataset& data, const std::string& what) {
  if (arch.classes != data.classes) {
    throw ConfigError(what + " has " + std::to_string(arch.classes) + " classes but the data has " +
                      std::to_string(data.classes));
  }
  if (arch.input != data.sample_shape()) {
    throw ConfigError(what + " expects input " + shape_string(arch.input) + " but the data provides " +
                      shape_string(data.sample_shape()));
  }
}

EpochCallback epoch_logger(const Context& ctx, const std::string& tag) {
  return [&ctx, tag](const EpochRecord& e) {
    std::ostringstream s;
    s << tag << " epoch " << e.epoch << " loss " << std::setprecision(4) << e.train_loss << " train_acc "
      << e.train_acc << " val_acc " << e.val_acc << " lr " << e.lr;
    ctx.log(s.str());
  };
}

template <class T>
int train_impl(const Options& opt) {
  const auto ctx = begin(opt);
  const auto cfg = load_cfg(opt);
  const auto data = load_data(cfg.data);
  const auto arch = resolve_arch(cfg.arch, data.sample_shape(), data.classes);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  auto result = train<T>(arch, data, tcfg, std::nullopt, epoch_logger(ctx, "train"));
  auto& metrics = result.checkpoint.meta.metrics;
  metrics["test_acc"] = evaluate(result.checkpoint, data, eval_split(data));
  save_ckpt(result.checkpoint, &cfg, ctx.path("checkpoint.ptdl"));
  write_text_file(ctx.path("report.csv"), run_report_csv(result.report));
  write_text_file(ctx.path("metrics.csv"), metrics_csv(metrics));
  write_config(ctx, cfg);
  std::cout << "test_acc " << format_real(metrics["test_acc"]) << "\n";
  return kExitOk;
}

template <class T>
int prune_impl(const Options& opt) {
  const auto ctx = begin(opt);
  auto cfg = load_cfg(opt);
  if (opt.target_sparsity) cfg.prune.iterations = iterations_for_target(*opt.target_sparsity, cfg.prune.rate_per_iteration);
  if (!opt.method.empty()) cfg.prune.method = parse_prune_method(opt.method);
  auto teacher = load_ckpt<T>(opt.teacher);
  const double target = schedule_sparsity(cfg.prune.iterations, cfg.prune.rate_per_iteration);
  if (teacher.has_masks()) {
    const double slack = 1.0 / static_cast<double>(teacher.masks.total());
    if (target + slack < teacher.sparsity()) {
      throw ConfigError("target sparsity " + format_real(target) + " is below the checkpoint's current sparsity " +
                        format_real(teacher.sparsity()));
    }
  }
  const auto data = load_data(cfg.data);
  check_compatible(teacher.arch, data, "checkpoint '" + opt.teacher + "'");
  const auto on_iter = [&](const PruneIteration& it) {
    ctx.log("prune iteration " + std::to_string(it.iteration) + " sparsity " + format_real(it.sparsity) +
            " val_acc " + format_real(it.val_acc));
  };
  auto result = cfg.prune.method == PruneMethod::SynFlow
                    ? prune_synflow(std::move(teacher), cfg.prune, data, cfg.seed, on_iter)
                    : iterative_prune_lr_rewind(std::move(teacher), cfg.prune, data, cfg.seed, on_iter);
  auto& metrics = result.checkpoint.meta.metrics;
  metrics["test_acc"] = evaluate(result.checkpoint, data, eval_split(data));
  metrics["sparsity"] = result.checkpoint.sparsity();
  save_ckpt(result.checkpoint, &cfg, ctx.path("checkpoint.ptdl"));
  write_text_file(ctx.path("report.csv"), prune_log_csv(result.iterations));
  for (const auto& it : result.iterations) {
    if (it.fine_tune.epochs.empty()) continue;
    write_text_file(ctx.path("fine_tune_" + std::to_string(it.iteration) + ".csv"), run_report_csv(it.fine_tune));
  }
  write_text_file(ctx.path("metrics.csv"), metrics_csv(metrics));
  write_config(ctx, cfg);
  std::cout << "sparsity " << format_real(metrics["sparsity"]) << " test_acc " << format_real(metrics["test_acc"])
            << "\n";
  return kExitOk;
}

template <class T>
int distill_impl(const Options& opt) {
  const auto ctx = begin(opt);
  auto cfg = load_cfg(opt);
  const auto teacher = load_ckpt<T>(opt.teacher);
  const std::string student_file = !opt.student.empty() ? opt.student : cfg.student.arch_file;
  const ArchitectureSpec student = student_file.empty() ? teacher.arch : load_arch_file(student_file);
  validate(student);
  if (student.classes != teacher.arch.classes) {
    throw ConfigError("student has " + std::to_string(student.classes) + " classes but the teacher has " +
                      std::to_string(teacher.arch.classes));
  }
  const auto data = load_data(cfg.data);
  check_compatible(teacher.arch, data, "teacher");
  check_compatible(student, data, "student");
  TrainConfig tcfg = cfg.distill.schedule;
  tcfg.seed = cfg.seed;
  auto result = distill<T>(student, teacher, data, cfg.distill.loss, tcfg, std::nullopt, epoch_logger(ctx, "distill"));
  auto& metrics = result.checkpoint.meta.metrics;
  const auto split = eval_split(data);
  metrics["test_acc"] = evaluate(result.checkpoint, data, split);
  metrics["agreement"] = agreement(result.checkpoint, teacher, data, split);
  save_ckpt(result.checkpoint, &cfg, ctx.path("checkpoint.ptdl"));
  write_text_file(ctx.path("report.csv"), run_report_csv(result.report));
  write_text_file(ctx.path("metrics.csv"), metrics_csv(metrics));
  write_config(ctx, cfg);
  std::cout << "test_acc " << format_real(metrics["test_acc"]) << " agreement " << format_real(metrics["agreement"])
            << "\n";
  return kExitOk;
}

template <class T>
int eval_impl(const Options& opt) {
  const auto ctx = begin(opt);
  const auto cfg = load_cfg(opt);
  const auto ckpt = load_ckpt<T>(opt.checkpoint);
  const auto data = load_data(cfg.data);
  check_compatible(ckpt.arch, data, "checkpoint");
  std::map<std::string, double> metrics;
  metrics["test_acc"] = evaluate(ckpt, data, eval_split(data));
  metrics["val_acc"] = evaluate(ckpt, data, SplitName::Val);
  metrics["sparsity"] = ckpt.sparsity();
  if (!opt.teacher.empty()) {
    const auto teacher = load_ckpt<T>(opt.teacher);
    metrics["agreement"] = agreement(ckpt, teacher, data, eval_split(data));
  }
  write_text_file(ctx.path("eval.csv"), metrics_csv(metrics));
  write_config(ctx, cfg);
  for (const auto& [k, v] : metrics) std::cout << k << ' ' << format_real(v) << '\n';
  return kExitOk;
}

template <class T>
int report_impl(const Options& opt) {
  const auto ctx = begin(opt);
  auto cfg = load_cfg(opt);
  if (!opt.seeds.empty()) cfg.report.seeds = opt.seeds;
  const auto data = load_data(cfg.data);
  write_config(ctx, cfg);
  SeedTable table;
  table.seeds = cfg.report.seeds;
  for (auto seed : cfg.report.seeds) {
    const auto run = run_seed<T>(cfg, data, seed, ctx.path("seed_" + std::to_string(seed)),
                                 [&](const std::string& m) { ctx.log(m); });
    for (const auto& [k, v] : run.metrics) table.metrics[k].push_back(v);
  }
  const auto summary = seed_summary_csv(table);
  write_text_file(ctx.path("summary.csv"), summary);
  std::cout << summary;
  return kExitOk;
}

template <class F>
int dispatch(const Options& opt, F&& f32, F&& f64) {
  return parse_precision(opt.precision) == Precision::F64 ? f64(opt) : f32(opt);
}

}  // namespace

int cmd_train(const Options& opt) { return dispatch(opt, train_impl<float>, train_impl<double>); }
int cmd_prune(const Options& opt) { return dispatch(opt, prune_impl<float>, prune_impl<double>); }
int cmd_distill(const Options& opt) { return dispatch(opt, distill_impl<float>, distill_impl<double>); }
int cmd_eval(const Options& opt) { return dispatch(opt, eval_impl<float>, eval_impl<double>); }
int cmd_report(const Options& opt) { return dispatch(opt, report_impl<float>, report_impl<double>); }

int cmd_make_student(const Options& opt) {
  const auto ctx = begin(opt);
  const auto ckpt = load_checkpoint(opt.teacher);
  if (!ckpt.has_masks()) throw ConfigError("checkpoint '" + opt.teacher + "' carries no masks");
  const auto plan = solve_student_channels(ckpt.arch, census(ckpt));
  save_arch_file(plan.arch, ctx.path("student_arch.json"));
  const auto csv = census_csv(plan);
  write_text_file(ctx.path("census.csv"), csv);
  // No config of its own: carry forward the one the checkpoint was produced under.
  if (!ckpt.meta.config.empty()) write_text_file(ctx.path("config.json"), ckpt.meta.config.dump(2) + "\n");
  std::cout << csv << "total_student_weights " << plan.total_weights << "\n";
  return kExitOk;
}

int cmd_verify(const Options& opt) {
  const auto ctx = begin(opt);
  const std::uint64_t seed = opt.seed.value_or(0);
  std::vector<CheckResult> checks;
  const auto run = [&](CheckResult c) {
    ctx.log((c.passed ? "PASS " : "FAIL ") + c.name + " value " + format_real(c.value) + " (" + c.detail + ")");
    checks.push_back(std::move(c));
  };
  run(check_gradients(LossKind::CrossEntropy, seed));
  run(check_gradients(LossKind::Distill, seed));
  run(check_kd_lsr(1000, seed));
  run(check_pruning(seed));
  for (auto& c : check_golden_counts()) run(std::move(c));
  if (!opt.smooth_pairs.empty()) {
    if (opt.config.empty()) throw ConfigError("--smooth-pair needs --config for the evaluation data");
    const auto cfg = load_cfg(opt);
    write_config(ctx, cfg);
    const auto data = load_data(cfg.data);
    for (const auto& pair : opt.smooth_pairs) {
      const auto comma = pair.find(',');
      if (comma == std::string::npos) throw ConfigError("--smooth-pair expects DENSE,PRUNED, got '" + pair + "'");
      const auto dense = load_checkpoint(pair.substr(0, comma));
      const auto pruned = load_checkpoint(pair.substr(comma + 1));
      check_compatible(dense.arch, data, "dense checkpoint");
      auto c = check_smoothness(dense, pruned, data);
      c.detail += ", pair " + pair;
      run(std::move(c));
    }
  }
  write_text_file(ctx.path("verify.csv"), checks_csv(checks));
  bool ok = true;
  for (const auto& c : checks) ok = ok && c.passed;
  std::cout << (ok ? "all checks passed" : "verification FAILED") << "\n";
  return ok ? kExitOk : kExitVerify;
}

int guarded(int (*fn)(const Options&), const Options& opt) {
  try {
    return fn(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace ptd::cli
