#include <atomic>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "sigsched/commands.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

}  // namespace

int main(int argc, char** argv) {
  using namespace sigsched::cli;

  CLI::App app{"Adaptive traffic-signal scheduling: optimizer, simulator and detection pipeline"};
  app.set_version_flag("--version", SIGSCHED_VERSION);
  app.require_subcommand(1);

  CommonFlags common;
  for (int i = 0; i < argc; ++i) common.argv.emplace_back(argv[i]);
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "RNG seed override");
  };

  OptimizeFlags opt;
  std::string policy;
  auto* optimize = app.add_subcommand("optimize", "Optimize one signal cycle for a queue snapshot");
  optimize->add_option("--config", opt.config, "Intersection config JSON")->required()->check(CLI::ExistingFile);
  optimize->add_option("--queue", opt.queue, "QueueState JSON")->required()->check(CLI::ExistingFile);
  optimize->add_option("--policy", policy, "Operating-point policy")
      ->check(CLI::IsMember({"knee", "weighted", "min_f1", "min_f2"}));
  add_common(optimize);

  SimulateFlags simf;
  auto* simulate = app.add_subcommand("simulate", "Simulate controllers on a scenario");
  simulate->add_option("--scenario", simf.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_flag("--compare", simf.compare, "Paired comparison of all controllers over the scenario seeds");
  add_common(simulate);

  PipelineFlags pipef;
  std::size_t cycles = 0;
  auto* pipe = app.add_subcommand("pipeline", "Run the detection-to-signal pipeline");
  pipe->add_option("--config", pipef.config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  pipe->add_option("--cycles", cycles, "Stop after this many emitted plans");
  pipe->add_flag("--report", pipef.report, "Write the latency summary table");
  add_common(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kValidation;
  }

  common.out_dir = out_dir;
  if (app.get_subcommands().front()->count("--seed") > 0) common.seed = seed;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  if (*optimize) {
    if (!policy.empty()) opt.policy = policy;
    return cmd_optimize(opt, common);
  }
  if (*simulate) return cmd_simulate(simf, common);
  if (pipe->count("--cycles") > 0) pipef.cycles = cycles;
  pipef.interrupted = &g_interrupted;
  return cmd_pipeline(pipef, common);
}
