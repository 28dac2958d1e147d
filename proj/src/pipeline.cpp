#include "ptd/pipeline.hpp"

#include <filesystem>

#include "ptd/report.hpp"
#include "ptd/smoothness.hpp"

namespace ptd {

namespace {

template <class T>
void save_as_f32(const MaskedCheckpoint<T>& ckpt, const std::string& path) {
  if constexpr (std::is_same_v<T, float>) {
    save_checkpoint(ckpt, path);
  } else {
    save_checkpoint(ckpt.template cast<float>(), path);
  }
}

}  // namespace

template <class T>
SeedRun<T> run_seed(const PipelineConfig& cfg, const LabeledDataset& data, std::uint64_t seed,
                    const std::string& out_dir, const LogFn& log) {
  namespace fs = std::filesystem;
  const auto say = [&](const std::string& msg) {
    if (log) log("[seed " + std::to_string(seed) + "] " + msg);
  };
  const auto file = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
  const bool keep = !out_dir.empty();
  if (keep) fs::create_directories(out_dir);
  const auto test_split = data.splits.test.empty() ? SplitName::Val : SplitName::Test;

  SeedRun<T> run;
  run.seed = seed;
  auto& m = run.metrics;

  const ArchitectureSpec arch = resolve_arch(cfg.arch, data.sample_shape(), data.classes);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;
  say("training teacher " + arch.name);
  auto teacher = train<T>(arch, data, tcfg);
  run.teacher = std::move(teacher.checkpoint);
  m["teacher_acc"] = evaluate(run.teacher, data, test_split);
  if (keep) {
    save_as_f32(run.teacher, file("teacher.ptdl"));
    write_text_file(file("teacher_train.csv"), run_report_csv(teacher.report));
  }

  say("pruning (" + std::to_string(cfg.prune.iterations) + " iterations, " + prune_method_name(cfg.prune.method) +
      ")");
  const auto on_iter = [&](const PruneIteration& it) {
    say("  iteration " + std::to_string(it.iteration) + " sparsity " + format_real(it.sparsity));
  };
  auto pruned = cfg.prune.method == PruneMethod::SynFlow ? prune_synflow(run.teacher, cfg.prune, data, seed, on_iter)
                                                         : iterative_prune_lr_rewind(run.teacher, cfg.prune, data,
                                                                                     seed, on_iter);
  run.pruned = std::move(pruned.checkpoint);
  m["pruned_acc"] = evaluate(run.pruned, data, test_split);
  m["pruned_sparsity"] = run.pruned.sparsity();
  if (keep) {
    save_as_f32(run.pruned, file("pruned.ptdl"));
    write_text_file(file("prune_log.csv"), prune_log_csv(pruned.iterations));
  }

  run.plan = solve_student_channels(arch, census(run.pruned));
  ArchitectureSpec student = cfg.student.arch_file.empty() ? run.plan.arch : load_arch_file(cfg.student.arch_file);
  validate(student);
  m["teacher_weights"] = static_cast<double>(count_params(arch).total_weights);
  m["pruned_nonzero"] = static_cast<double>(census(run.pruned).total_nonzero());
  m["student_weights"] = static_cast<double>(count_params(student).total_weights);
  if (keep) {
    save_arch_file(student, file("student_arch.json"));
    write_text_file(file("census.csv"), census_csv(run.plan));
  }

  say("training student " + student.name + " from scratch");
  auto scratch = train<T>(student, data, tcfg);
  run.scratch = std::move(scratch.checkpoint);
  m["scratch_acc"] = evaluate(run.scratch, data, test_split);

  TrainConfig dcfg = cfg.distill.schedule;
  dcfg.seed = seed;
  say("distilling pruned teacher into student");
  auto kd_p = distill<T>(student, run.pruned, data, cfg.distill.loss, dcfg);
  run.kd_pruned = std::move(kd_p.checkpoint);
  m["kd_pruned_acc"] = evaluate(run.kd_pruned, data, test_split);
  m["kd_pruned_agreement"] = agreement(run.kd_pruned, run.pruned, data, test_split);

  say("distilling unpruned teacher into student");
  auto kd_u = distill<T>(student, run.teacher, data, cfg.distill.loss, dcfg);
  run.kd_unpruned = std::move(kd_u.checkpoint);
  m["kd_unpruned_acc"] = evaluate(run.kd_unpruned, data, test_split);
  m["kd_unpruned_agreement"] = agreement(run.kd_unpruned, run.teacher, data, test_split);

  const auto smooth = smoothness_report(run.teacher, run.pruned, data, test_split);
  m["smoothness_log_ratio"] = smooth.mean_log_ratio;

  if (keep) {
    save_as_f32(run.scratch, file("scratch.ptdl"));
    save_as_f32(run.kd_pruned, file("kd_pruned.ptdl"));
    save_as_f32(run.kd_unpruned, file("kd_unpruned.ptdl"));
    write_text_file(file("scratch_train.csv"), run_report_csv(scratch.report));
    write_text_file(file("kd_pruned_train.csv"), run_report_csv(kd_p.report));
    write_text_file(file("kd_unpruned_train.csv"), run_report_csv(kd_u.report));
    write_smoothness_csv(smooth, file("smoothness.csv"));
    write_text_file(file("metrics.csv"), metrics_csv(m));
  }
  say("done: scratch " + format_real(m["scratch_acc"]) + ", kd(pruned) " + format_real(m["kd_pruned_acc"]) +
      ", kd(unpruned) " + format_real(m["kd_unpruned_acc"]));
  return run;
}

template SeedRun<float> run_seed(const PipelineConfig&, const LabeledDataset&, std::uint64_t, const std::string&,
                                 const LogFn&);
template SeedRun<double> run_seed(const PipelineConfig&, const LabeledDataset&, std::uint64_t, const std::string&,
                                  const LogFn&);

}  // namespace ptd
