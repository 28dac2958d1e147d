#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace ptd::cli;
  CLI::App app{"ptd: prune a trained network, then distill it into a narrower dense student"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_flag("--deterministic", opt.deterministic, "Single-threaded, bit-reproducible execution");
    sub->add_option("--precision", opt.precision, "Compute precision")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
    sub->add_flag("--quiet", opt.quiet, "Suppress progress output");
  };

  auto* train = app.add_subcommand("train", "Train a network from scratch");
  train->add_option("--config", opt.config, "Pipeline config JSON")->required();
  train->add_option("--seed", opt.seed, "Seed (overrides the config)");
  add_common(train);

  auto* prune = app.add_subcommand("prune", "Iteratively prune a trained checkpoint");
  prune->add_option("--config", opt.config, "Pipeline config JSON")->required();
  prune->add_option("--teacher", opt.teacher, "Checkpoint to prune")->required();
  prune->add_option("--target-sparsity", opt.target_sparsity, "Target sparsity (mapped to iterations at the rate)");
  prune->add_option("--method", opt.method, "Pruning method")->check(CLI::IsMember({"lr-rewind", "synflow"}));
  prune->add_option("--seed", opt.seed, "Seed (overrides the config)");
  add_common(prune);

  auto* make_student = app.add_subcommand("make-student", "Solve a dense student from a pruned checkpoint");
  make_student->add_option("--teacher", opt.teacher, "Pruned checkpoint")->required();
  add_common(make_student);

  auto* distill = app.add_subcommand("distill", "Distill a teacher checkpoint into a student architecture");
  distill->add_option("--config", opt.config, "Pipeline config JSON")->required();
  distill->add_option("--teacher", opt.teacher, "Teacher checkpoint")->required();
  distill->add_option("--student", opt.student, "Student architecture JSON (default: config, then teacher arch)");
  distill->add_option("--seed", opt.seed, "Seed (overrides the config)");
  add_common(distill);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--config", opt.config, "Pipeline config JSON (data section)")->required();
  eval->add_option("--checkpoint", opt.checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--teacher", opt.teacher, "Optional teacher checkpoint for agreement");
  add_common(eval);

  auto* verify = app.add_subcommand("verify", "Run the verification suite");
  verify->add_option("--config", opt.config, "Pipeline config JSON (data for smoothness pairs)");
  verify->add_option("--smooth-pair", opt.smooth_pairs, "DENSE,PRUNED checkpoint pair for the smoothness check");
  verify->add_option("--seed", opt.seed, "Seed for randomized checks");
  add_common(verify);

  auto* report = app.add_subcommand("report", "Full pipeline over several seeds with a mean/std summary");
  report->add_option("--config", opt.config, "Pipeline config JSON")->required();
  report->add_option("--seeds", opt.seeds, "Comma-separated seeds (overrides the config)")->delimiter(',');
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*train) return guarded(cmd_train, opt);
  if (*prune) return guarded(cmd_prune, opt);
  if (*make_student) return guarded(cmd_make_student, opt);
  if (*distill) return guarded(cmd_distill, opt);
  if (*eval) return guarded(cmd_eval, opt);
  if (*verify) return guarded(cmd_verify, opt);
  if (*report) return guarded(cmd_report, opt);
  return kExitConfig;
}
