#pragma once

// File formats for simulation scenarios and pipeline runs. Relative paths
// inside a file resolve against that file's directory.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sigsched/core.hpp"
#include "sigsched/nsga2.hpp"
#include "sigsched/pipeline.hpp"
#include "sigsched/simulator.hpp"

namespace sigsched {

namespace detail {

inline IntersectionConfig resolve_intersection(const json& j, const std::filesystem::path& base_dir) {
  if (j.contains("intersection")) return parse_intersection_config(j.at("intersection"));
  if (j.contains("intersection_file"))
    return load_intersection_config(base_dir / j.at("intersection_file").get<std::string>());
  throw ParseError("missing 'intersection' or 'intersection_file'");
}

inline nsga2::SelectionPolicy parse_selection(const json& j) {
  double w1 = 0.5, w2 = 0.5;
  if (j.contains("weights")) {
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != 2) throw ValidationError("weights must have two entries");
    w1 = w[0];
    w2 = w[1];
  }
  return nsga2::parse_policy(j.value("policy", std::string("knee")), w1, w2);
}

// Wraps json type errors as ParseError with a location prefix.
template <typename F>
auto parsing(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace detail

struct ControllerSpec {
  std::string name;
  std::string type;  // "fixed_time" or "adaptive"
  std::vector<Seconds> greens;
  std::vector<std::size_t> order;
  nsga2::OptimizerParams optimizer;
  nsga2::SelectionPolicy selection;
};

struct Scenario {
  IntersectionConfig intersection;
  sim::ArrivalModel demand;
  std::vector<ControllerSpec> controllers;
  Seconds horizon_s = 3600;
  std::vector<std::uint64_t> seeds{1};
  sim::SimOptions options;
  json snapshot;  // the scenario with the intersection resolved inline
};

inline std::unique_ptr<sim::Controller> make_controller(const ControllerSpec& spec, const IntersectionConfig& cfg) {
  if (spec.type == "fixed_time") return std::make_unique<sim::FixedTimeController>(cfg, spec.greens, spec.order);
  return std::make_unique<sim::AdaptiveController>(cfg, spec.optimizer, spec.selection);
}

inline std::vector<sim::NamedController> named_controllers(const Scenario& sc) {
  std::vector<sim::NamedController> out;
  for (const auto& spec : sc.controllers)
    out.push_back({spec.name, [spec, cfg = sc.intersection] { return make_controller(spec, cfg); }});
  return out;
}

inline Scenario parse_scenario(const json& j, const std::filesystem::path& base_dir) {
  Scenario sc;
  sc.intersection = detail::resolve_intersection(j, base_dir);
  const std::size_t L = sc.intersection.num_links;
  detail::parsing("scenario", [&] {
    const auto& d = j.at("demand");
    sc.demand.motorized_rate = d.at("motorized").get<std::vector<double>>();
    sc.demand.non_motorized_rate = d.at("non_motorized").get<std::vector<double>>();
    sim::validate(sc.demand, L);

    sc.horizon_s = j.value("horizon_s", sc.horizon_s);
    if (j.contains("seeds")) sc.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (sc.seeds.empty()) throw ValidationError("seeds must not be empty");
    sc.demand.rng_seed = sc.seeds.front();

    const json opts = j.value("options", json::object());
    const std::string mode = opts.value("mode", std::string("automatic"));
    if (mode != "automatic" && mode != "field_guidance") throw ValidationError("unknown mode '" + mode + "'");
    sc.options.guidance_pad_s = opts.value("guidance_pad_s", mode == "field_guidance" ? kFieldGuidancePadS : Seconds{0});
    sc.options.sensing_latency_s = opts.value("sensing_latency_s", sc.options.sensing_latency_s);
    sc.options.detection_prob = opts.value("detection_prob", sc.options.detection_prob);
    if (opts.contains("emergencies")) sc.options.emergencies = opts.at("emergencies").get<std::vector<sim::EmergencyEvent>>();
    if (opts.contains("blackouts")) sc.options.blackouts = opts.at("blackouts").get<std::vector<sim::Blackout>>();
    if (j.contains("initial_queue")) sc.options.initial_queue = j.at("initial_queue").get<QueueState>();
    sim::validate(sc.options, L);

    for (const auto& c : j.at("controllers")) {
      ControllerSpec spec;
      spec.type = c.at("type").get<std::string>();
      spec.name = c.value("name", spec.type);
      if (spec.type == "fixed_time") {
        spec.greens = c.at("greens").get<std::vector<Seconds>>();
        spec.order = c.value("order", std::vector<std::size_t>{});
        sim::FixedTimeController probe(sc.intersection, spec.greens, spec.order);
        if (auto v = validate_plan(probe.next_plan(QueueState::zeros(L)), sc.intersection); !v.empty())
          throw ValidationError("controller '" + spec.name + "': " + join_violations(v));
      } else if (spec.type == "adaptive") {
        spec.optimizer = c.value("optimizer", json::object()).get<nsga2::OptimizerParams>();
        spec.optimizer.guidance_pad_s = sc.options.guidance_pad_s;
        nsga2::validate(spec.optimizer);
        spec.selection = detail::parse_selection(c);
      } else {
        throw ValidationError("unknown controller type '" + spec.type + "'");
      }
      sc.controllers.push_back(std::move(spec));
    }
    if (sc.controllers.empty()) throw ValidationError("scenario needs at least one controller");
    return 0;
  });
  if (sc.horizon_s <= 0) throw ValidationError("horizon_s must be > 0");

  sc.snapshot = j;
  sc.snapshot.erase("intersection_file");
  sc.snapshot["intersection"] = sc.intersection;
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_json_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Pipeline runs

struct CameraSpec {
  std::string source = "synthetic";  // "synthetic" or "replay"
  pipeline::SyntheticSource::Options synthetic;
  std::filesystem::path log;
  double replay_speed = 1.0;
};

struct DetectorSpec {
  std::string type = "synthetic";  // "synthetic" or "replay"
  pipeline::SyntheticDetector::Options synthetic;
};

struct PipelineConfig {
  pipeline::PipelineOptions options;
  std::vector<CameraSpec> cameras;
  DetectorSpec detector;
  std::size_t max_idle_cycles = 3;
  json snapshot;
};

inline PipelineConfig parse_pipeline_config(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig pc;
  pc.options.intersection = detail::resolve_intersection(j, base_dir);
  const std::size_t L = pc.options.intersection.num_links;
  detail::parsing("pipeline config", [&] {
    auto& o = pc.options;
    o.window = std::chrono::milliseconds(j.value("window_ms", static_cast<std::int64_t>(o.window.count())));
    if (o.window.count() <= 0) throw ValidationError("window_ms must be > 0");
    const std::string stale = j.value("stale_policy", std::string("reuse"));
    if (stale != "reuse" && stale != "zero") throw ValidationError("stale_policy must be 'reuse' or 'zero'");
    o.stale_policy = stale == "reuse" ? pipeline::StalePolicy::ReuseThenZero : pipeline::StalePolicy::Zero;
    o.reuse_windows = j.value("reuse_windows", o.reuse_windows);
    o.inference_workers = j.value("inference_workers", o.inference_workers);
    o.optimizer = j.value("optimizer", json::object()).get<nsga2::OptimizerParams>();
    nsga2::validate(o.optimizer);
    o.selection = detail::parse_selection(j);
    pc.max_idle_cycles = j.value("max_idle_cycles", pc.max_idle_cycles);

    const json defaults = j.value("camera_defaults", json::object());
    const json cams = j.value("cameras", json::array());
    if (cams.size() != L)
      throw ValidationError("pipeline config lists " + std::to_string(cams.size()) + " cameras for " +
                            std::to_string(L) + " links");
    for (std::size_t i = 0; i < L; ++i) {
      json c = defaults;
      c.update(cams[i]);
      CameraSpec spec;
      spec.source = c.value("source", spec.source);
      auto& s = spec.synthetic;
      if (spec.source == "synthetic") {
        s.fps = c.value("fps", s.fps);
        s.decode_ms = c.value("decode_ms", s.decode_ms);
        s.jitter_ms = c.value("jitter_ms", s.jitter_ms);
        s.vary_scene = c.value("vary_scene", s.vary_scene);
        s.seed = c.value("seed", s.seed);
        if (c.contains("max_frames")) s.max_frames = c.at("max_frames").get<std::uint64_t>();
        const json scene = c.value("scene", json::object());
        s.scene.motorized_in = scene.value("motorized_in", Count{0});
        s.scene.motorized_out = scene.value("motorized_out", Count{0});
        s.scene.non_motorized_in = scene.value("non_motorized_in", Count{0});
        s.scene.non_motorized_out = scene.value("non_motorized_out", Count{0});
        if (s.scene.motorized_in < 0 || s.scene.motorized_out < 0 || s.scene.non_motorized_in < 0 ||
            s.scene.non_motorized_out < 0)
          throw ValidationError("scene counts must be >= 0");
        if (!(s.fps > 0.0) || s.decode_ms < 0.0 || s.jitter_ms < 0.0)
          throw ValidationError("camera " + std::to_string(i) + ": fps must be > 0, decode/jitter >= 0");
      } else if (spec.source == "replay") {
        spec.log = base_dir / c.at("log").get<std::string>();
        spec.replay_speed = c.value("speed", spec.replay_speed);
      } else {
        throw ValidationError("unknown camera source '" + spec.source + "'");
      }
      pc.cameras.push_back(std::move(spec));
    }

    const json d = j.value("detector", json::object());
    pc.detector.type = d.value("type", pc.detector.type);
    if (pc.detector.type != "synthetic" && pc.detector.type != "replay")
      throw ValidationError("unknown detector type '" + pc.detector.type + "'");
    pc.detector.synthetic.delay_ms = d.value("delay_ms", 0.0);
    pc.detector.synthetic.miss_rate = d.value("miss_rate", 0.0);
    pc.detector.synthetic.false_rate = d.value("false_rate", 0.0);
    pc.detector.synthetic.seed = d.value("seed", std::uint64_t{1});
    pipeline::SyntheticDetector probe(pc.detector.synthetic);
    return 0;
  });

  pc.snapshot = j;
  pc.snapshot.erase("intersection_file");
  pc.snapshot["intersection"] = pc.options.intersection;
  return pc;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_json_file(path), path.parent_path());
}

inline std::vector<std::unique_ptr<pipeline::FrameSource>> make_sources(const PipelineConfig& pc) {
  std::vector<std::unique_ptr<pipeline::FrameSource>> out;
  for (std::size_t i = 0; i < pc.cameras.size(); ++i) {
    const auto& c = pc.cameras[i];
    if (c.source == "replay")
      out.push_back(std::make_unique<pipeline::ReplaySource>(LinkId{i}, pipeline::load_detection_log(c.log),
                                                              c.replay_speed));
    else
      out.push_back(std::make_unique<pipeline::SyntheticSource>(LinkId{i}, c.synthetic));
  }
  return out;
}

inline pipeline::DetectorFactory make_detector_factory(const PipelineConfig& pc) {
  const DetectorSpec spec = pc.detector;
  return [spec]() -> std::unique_ptr<pipeline::Detector> {
    if (spec.type == "replay") return std::make_unique<pipeline::ReplayDetector>();
    return std::make_unique<pipeline::SyntheticDetector>(spec.synthetic);
  };
}

}  // namespace sigsched
