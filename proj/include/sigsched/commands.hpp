#pragma once

// Command implementations behind the `sigsched` executable. Each command
// writes only inside its output directory, finishing with a manifest.json
// that records the resolved inputs needed to repeat the run.
//
// Exit codes: 0 success, 1 validation/parse failure, 2 runtime failure,
// 3 interrupted.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sigsched/core.hpp"
#include "sigsched/nsga2.hpp"
#include "sigsched/pipeline.hpp"
#include "sigsched/scenario.hpp"
#include "sigsched/simulator.hpp"

#ifndef SIGSCHED_VERSION
#define SIGSCHED_VERSION "0.0.0"
#endif

namespace sigsched::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kInterrupted = 3 };

struct CommonFlags {
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> argv;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Manifest {
 public:
  Manifest(std::string command, const CommonFlags& flags) : flags_(flags) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = SIGSCHED_VERSION;
    doc_["argv"] = flags.argv;
    doc_["started_at"] = utc_timestamp();
    doc_["artifacts"] = json::array();
  }

  void set(const std::string& key, json value) { doc_[key] = std::move(value); }
  void artifact(const std::string& name) { doc_["artifacts"].push_back(name); }

  std::filesystem::path path(const std::string& name) const { return flags_.out_dir / name; }

  void write() {
    doc_["finished_at"] = utc_timestamp();
    std::ofstream out(path("manifest.json"));
    out << doc_.dump(2) << '\n';
  }

 private:
  CommonFlags flags_;
  json doc_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

// Runs `body`, mapping exceptions onto exit codes with a diagnostic.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kValidation;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const json::exception& e) {
    err << "parse error: " << e.what() << '\n';
    return kValidation;
  } catch (const sim::SimulationError& e) {
    err << "simulation error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

// ---------------------------------------------------------------------------
// optimize

struct OptimizeFlags {
  std::filesystem::path config;
  std::filesystem::path queue;
  std::optional<std::string> policy;
};

inline int cmd_optimize(const OptimizeFlags& f, const CommonFlags& common, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const json raw = read_json_file(f.config);
    const IntersectionConfig cfg = parse_intersection_config(raw);
    const QueueState queue = load_queue_state(f.queue, cfg.num_links);
    auto params = detail::parsing("optimizer", [&] {
      return raw.value("optimizer", json::object()).get<nsga2::OptimizerParams>();
    });
    if (common.seed) params.rng_seed = *common.seed;
    json sel = json::object();
    if (raw.contains("policy")) sel["policy"] = raw.at("policy");
    if (raw.contains("weights")) sel["weights"] = raw.at("weights");
    if (f.policy) sel["policy"] = *f.policy;
    const auto policy = detail::parse_selection(sel);
    nsga2::validate(params);

    std::filesystem::create_directories(common.out_dir);
    Manifest manifest("optimize", common);

    const auto front = nsga2::run(queue, cfg, params);
    const std::size_t pick = nsga2::select_index(front, policy);
    const SignalPlan plan = nsga2::to_plan(front[pick].genome, cfg, params.guidance_pad_s);
    if (auto v = validate_plan(plan, cfg); !v.empty())
      throw std::runtime_error("optimizer produced an invalid plan: " + join_violations(v));

    write_text(manifest.path("front.json"), json(front).dump(2) + "\n");
    manifest.artifact("front.json");
    json plan_doc{{"plan", plan}, {"objectives", front[pick].objectives}, {"policy", nsga2::policy_name(policy)}};
    write_text(manifest.path("plan.json"), plan_doc.dump(2) + "\n");
    manifest.artifact("plan.json");

    manifest.set("config_snapshot", raw);
    manifest.set("queue_snapshot", queue);
    manifest.set("optimizer", params);
    manifest.set("policy", nsga2::policy_name(policy));
    manifest.set("seeds", json::array({params.rng_seed}));
    manifest.write();

    out << "front: " << front.size() << " members\n";
    out << "selected (" << nsga2::policy_name(policy) << "): f1=" << front[pick].objectives.f1
        << " f2=" << front[pick].objectives.f2 << " greens=" << json(front[pick].genome.greens).dump() << '\n';
    return int{kOk};
  });
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateFlags {
  std::filesystem::path scenario;
  bool compare = false;
};

inline std::string per_link_report(const IntersectionConfig& cfg, const std::string& name, const sim::SimMetrics& m) {
  std::ostringstream os;
  os << "controller: " << name << "\n";
  os << std::left << std::setw(6) << "link" << std::setw(24) << "name" << std::right << std::setw(12) << "max_waiting"
     << std::setw(14) << "avg_waiting" << "\n";
  os << std::fixed << std::setprecision(3);
  for (std::size_t i = 0; i < cfg.num_links; ++i)
    os << std::left << std::setw(6) << i << std::setw(24) << cfg.link_names[i] << std::right << std::setw(12)
       << m.max_waiting_per_link[i] << std::setw(14) << m.avg_waiting_per_link[i] << "\n";
  os << "overall_max=" << m.overall_max << " overall_avg=" << m.overall_avg << " throughput=" << m.throughput_total
     << " cycles=" << m.cycles_completed << "\n";
  return os.str();
}

inline std::string safe_name(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return s;
}

inline int cmd_simulate(const SimulateFlags& f, const CommonFlags& common, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    Scenario sc = load_scenario(f.scenario);
    if (common.seed) sc.seeds = {*common.seed};
    std::filesystem::create_directories(common.out_dir);
    Manifest manifest(f.compare ? "simulate --compare" : "simulate", common);
    manifest.set("config_snapshot", sc.snapshot);
    manifest.set("seeds", sc.seeds);

    json metrics_doc{{"seed", sc.seeds.front()}, {"controllers", json::array()}};
    std::string report;
    sim::ArrivalModel demand = sc.demand;
    demand.rng_seed = sc.seeds.front();
    for (const auto& spec : sc.controllers) {
      auto ctrl = make_controller(spec, sc.intersection);
      const auto r = sim::simulate(sc.intersection, demand, *ctrl, sc.horizon_s, sc.options);
      metrics_doc["controllers"].push_back({{"name", spec.name}, {"metrics", r.metrics}});
      const std::string csv = "timeseries_" + safe_name(spec.name) + ".csv";
      std::ofstream ts(manifest.path(csv));
      sim::write_timeseries_csv(ts, r, sc.intersection.num_links);
      manifest.artifact(csv);
      report += per_link_report(sc.intersection, spec.name, r.metrics) + "\n";
    }
    write_text(manifest.path("metrics.json"), metrics_doc.dump(2) + "\n");
    manifest.artifact("metrics.json");
    write_text(manifest.path("report.txt"), report);
    manifest.artifact("report.txt");
    out << report;

    if (f.compare) {
      const auto rep = sim::compare_controllers(sc.intersection, sc.demand, named_controllers(sc), sc.horizon_s,
                                                sc.seeds, sc.options);
      write_text(manifest.path("comparison.json"), json(rep).dump(2) + "\n");
      manifest.artifact("comparison.json");
      std::ostringstream os;
      os << std::fixed << std::setprecision(3);
      os << "paired comparison over " << rep.seeds.size() << " seeds (deltas vs " << rep.names[0] << ")\n";
      for (std::size_t c = 0; c < rep.names.size(); ++c)
        os << "  " << rep.names[c] << ": overall_avg=" << rep.mean_metrics[c].overall_avg
           << " overall_max=" << rep.mean_metrics[c].overall_max << " delta_avg=" << rep.delta_avg_pct[c]
           << "% delta_max=" << rep.delta_max_pct[c] << "%\n";
      write_text(manifest.path("comparison.txt"), os.str());
      manifest.artifact("comparison.txt");
      out << os.str();
    }
    manifest.write();
    return int{kOk};
  });
}

// ---------------------------------------------------------------------------
// pipeline

struct PipelineFlags {
  std::filesystem::path config;
  std::optional<std::size_t> cycles;
  bool report = false;
  const std::atomic<bool>* interrupted = nullptr;
};

inline int cmd_pipeline(const PipelineFlags& f, const CommonFlags& common, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  return guarded(err, [&]() -> int {
    PipelineConfig pc = load_pipeline_config(f.config);
    if (common.seed) pc.options.optimizer.rng_seed = *common.seed;
    if (f.cycles && *f.cycles == 0) throw ValidationError("--cycles must be >= 1");
    std::filesystem::create_directories(common.out_dir);
    Manifest manifest("pipeline", common);
    manifest.set("config_snapshot", pc.snapshot);
    manifest.set("seeds", json::array({pc.options.optimizer.rng_seed}));

    std::ofstream plans(manifest.path("plans.jsonl"));
    std::ofstream ledger_out(manifest.path("latency.jsonl"));
    manifest.artifact("plans.jsonl");
    manifest.artifact("latency.jsonl");

    pipeline::Pipeline pipe(pc.options, make_sources(pc), make_detector_factory(pc));
    pipe.start();

    int code = kOk;
    std::size_t emitted = 0, idle = 0;
    while (!f.cycles || emitted < *f.cycles) {
      if (f.interrupted && f.interrupted->load()) {
        code = kInterrupted;
        break;
      }
      auto outcome = pipe.run_cycle();
      if (!outcome.output) {
        err << "cycle skipped: " << outcome.skip_reason << '\n';
        if (outcome.sources_exhausted || ++idle >= pc.max_idle_cycles) {
          err << "no detections from any source; giving up\n";
          code = kRuntime;
          break;
        }
        continue;
      }
      idle = 0;
      ++emitted;
      const auto& c = *outcome.output;
      json queue{{"motorized", c.queue.motorized}, {"non_motorized", c.queue.non_motorized}};
      json rec{{"cycle_id", c.cycle_id}, {"plan", c.plan},   {"objectives", c.objectives},
               {"queue", queue},         {"stale", c.stale}, {"front_size", c.front_size}};
      plans << rec.dump() << '\n' << std::flush;
      ledger_out << json(c.latency).dump() << '\n' << std::flush;
      out << "cycle " << c.cycle_id << ": f1=" << c.objectives.f1 << " f2=" << c.objectives.f2
          << " T_latency_ms=" << c.latency.latency_ms << '\n';
    }
    pipe.stop();

    if (f.report) {
      std::ostringstream os;
      pipe.ledger().write_summary(os);
      write_text(manifest.path("latency_summary.txt"), os.str());
      manifest.artifact("latency_summary.txt");
      json summary{{"cycles", pipe.ledger().size()}, {"T_latency_ms", pipe.ledger().run_latency_ms()}};
      write_text(manifest.path("latency_summary.json"), summary.dump(2) + "\n");
      manifest.artifact("latency_summary.json");
      out << os.str();
    }
    manifest.set("cycles_emitted", emitted);
    manifest.set("exit_code", code);
    manifest.write();
    return code;
  });
}

}  // namespace sigsched::cli
