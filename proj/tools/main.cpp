#include "commands.hpp"

#include "raest/error.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace raest::cli;

namespace {

void add_sampling_flags(CLI::App* cmd, SamplingOptions& s) {
  auto* samples = cmd->add_option("--samples", s.samples, "Fixed number of samples K");
  auto* poc = cmd->add_flag("--poc", s.poc, "Sample until the point of convergence");
  samples->excludes(poc);
  cmd->add_option("--threshold", s.threshold, "PoC tolerance, relative to the ground truth")
      ->capture_default_str();
  cmd->add_option("--max-samples", s.max_samples, "Sample cap in PoC mode")->capture_default_str();
  cmd->add_option("--harden", s.harden, "none, all, or the FF type lowered to the hardened FIT rate")
      ->capture_default_str();
  cmd->add_option("--uf", s.uf, "Utilization factor: one or actual")->capture_default_str();
  cmd->add_option("--truth", s.truth, "Ground-truth RA for PoC detection");
  cmd->add_option("--archive", s.archive, "Accuracy archive written by `oracle`")->check(CLI::ExistingFile);
  cmd->add_option("--bp-profile", s.bp_profile,
                  "Profile the IS-B bit model with this many injections per bit class (0 keeps the default)")
      ->capture_default_str();
  cmd->add_option("--max-inferences", s.max_inferences, "Guard for the exhaustive ground truth")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Resiliency accuracy estimation for DNN accelerators under single transient faults"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config file");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  MakeToyOptions toy;
  auto* make_toy = app.add_subcommand("make-toy", "Write a seeded toy network, evalset and config");
  make_toy->add_option("--preset", toy.preset, "conv or mlp")->capture_default_str();
  make_toy->add_option("--format", toy.format, "fp32, fp16 or int8")->capture_default_str();
  make_toy->add_option("--evalset-size", toy.evalset_size, "Evaluation inputs")->capture_default_str();
  make_toy->add_option("--min-margin", toy.min_margin, "Minimum top-2 logit gap of kept inputs")
      ->capture_default_str();

  auto* profile = app.add_subcommand("profile", "Per-layer MAC and variable counts");

  ProbsOptions probs;
  auto* probs_cmd = app.add_subcommand("probs", "Fault probability of every site class");
  probs_cmd->add_option("--harden", probs.harden, "none, all, or an FF type")->capture_default_str();

  OracleCmdOptions oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "Exhaustive RA over every fault site");
  oracle_cmd->add_option("--max-inferences", oracle.max_inferences, "Scale guard")->capture_default_str();

  EstimateCmdOptions estimate;
  auto* estimate_cmd = app.add_subcommand("estimate", "Monte Carlo RA estimate with one strategy");
  estimate_cmd->add_option("--strategy", estimate.strategy, "uniform, mac, is or is-b")->capture_default_str();
  add_sampling_flags(estimate_cmd, estimate.sampling);

  CompareOptions compare;
  auto* compare_cmd = app.add_subcommand("compare", "Convergence runs for several strategies and seeds");
  compare_cmd->add_option("--strategies", compare.strategies, "Strategies to run (default: all)")->delimiter(',');
  compare_cmd->add_option("--seeds", compare.seeds, "Explicit seed list")->delimiter(',');
  compare_cmd->add_option("--runs", compare.runs, "Seeds --seed, --seed+1, ... when --seeds is absent")
      ->capture_default_str();
  add_sampling_flags(compare_cmd, compare.sampling);

  GridsimOptions grid;
  auto* grid_cmd = app.add_subcommand("gridsim", "Drop pins on the cycle x FF grid");
  grid_cmd->add_option("--pins", grid.pins, "Number of pins")->capture_default_str();
  grid_cmd->add_option("--columns", grid.columns, "Grid width in cycles (0: automatic)")->capture_default_str();

  StudyOptions study;
  auto* study_cmd = app.add_subcommand("study", "Comparative studies");
  study_cmd->add_option("study", study.study, "methods, harden or fitrate")->required();
  study_cmd->add_option("--uf", study.uf, "Utilization factor: one or actual")->capture_default_str();
  study_cmd->add_option("--archive", study.archive, "Accuracy archive written by `oracle`")
      ->check(CLI::ExistingFile);
  study_cmd->add_option("--max-inferences", study.max_inferences, "Guard for the exhaustive oracle")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*make_toy) return run_make_toy(g, toy, std::cout);
    if (*profile) return run_profile(g, std::cout);
    if (*probs_cmd) return run_probs(g, probs, std::cout);
    if (*oracle_cmd) return run_oracle(g, oracle, std::cout);
    if (*estimate_cmd) return run_estimate(g, estimate, std::cout);
    if (*compare_cmd) return run_compare(g, compare, std::cout);
    if (*grid_cmd) return run_gridsim(g, grid, std::cout);
    if (*study_cmd) return run_study(g, study, std::cout);
  } catch (const raest::ScaleGuardError& e) {
    std::cerr << "raest: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "raest: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
