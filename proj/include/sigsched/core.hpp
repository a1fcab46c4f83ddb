#pragma once

// Domain model shared by the optimizer, the pipeline and the simulator:
// intersection configuration, queue snapshots, signal plans and detection
// records, together with their JSON schemas.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace sigsched {

using Count = std::int64_t;    // vehicles
using Seconds = std::int64_t;  // whole seconds
using MonoMillis = std::int64_t;

struct LinkId {
  std::size_t index = 0;
  auto operator<=>(const LinkId&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IntersectionConfig {
  std::size_t num_links = 2;
  std::vector<std::string> link_names;
  Seconds min_green_s = 10;
  Seconds max_green_s = 60;
  // Greens are restricted to min_green_s + k * green_step_s.
  Seconds green_step_s = 1;
  Seconds inter_green_s = 3;
  double sat_flow_motorized = 1.0;      // veh/s
  double sat_flow_non_motorized = 0.5;  // veh/s

  bool operator==(const IntersectionConfig&) const = default;

  std::size_t green_levels() const {
    return static_cast<std::size_t>((max_green_s - min_green_s) / green_step_s) + 1;
  }
  Seconds green_level(std::size_t k) const {
    return min_green_s + static_cast<Seconds>(k) * green_step_s;
  }
  bool on_green_grid(Seconds g) const {
    return g >= min_green_s && g <= max_green_s && (g - min_green_s) % green_step_s == 0;
  }
};

struct QueueState {
  std::vector<Count> motorized;
  std::vector<Count> non_motorized;
  MonoMillis timestamp_ms = 0;

  bool operator==(const QueueState&) const = default;

  std::size_t size() const { return motorized.size(); }
  Count total(std::size_t link) const { return motorized[link] + non_motorized[link]; }
  Count total() const {
    Count sum = 0;
    for (std::size_t i = 0; i < size(); ++i) sum += total(i);
    return sum;
  }

  static QueueState zeros(std::size_t num_links) {
    return {std::vector<Count>(num_links, 0), std::vector<Count>(num_links, 0), 0};
  }
};

struct Phase {
  LinkId link;
  Seconds green_s = 0;
  bool operator==(const Phase&) const = default;
};

struct SignalPlan {
  std::vector<Phase> phases;
  Seconds inter_green_s = 0;
  Seconds guidance_pad_s = 0;

  bool operator==(const SignalPlan&) const = default;

  // Time a phase holds right of way: pad + green + pad.
  Seconds service_time(const Phase& p) const { return p.green_s + 2 * guidance_pad_s; }

  Seconds cycle_length() const {
    Seconds total = 0;
    for (const auto& p : phases) total += service_time(p) + inter_green_s;
    return total;
  }

  // Position of `link` in the phase order, or phases.size() if unserved.
  std::size_t position_of(LinkId link) const {
    auto it = std::find_if(phases.begin(), phases.end(),
                           [&](const Phase& p) { return p.link == link; });
    return static_cast<std::size_t>(it - phases.begin());
  }
};

// Field-guidance mode splits the 8 s manual-guidance allowance into 4 s on
// each side of the green.
inline constexpr Seconds kFieldGuidancePadS = 4;

// Four NHT-1071 detection classes for one camera frame.
struct DetectionRecord {
  LinkId camera_id;
  MonoMillis frame_ts_ms = 0;
  Count motorized_in = 0;
  Count motorized_out = 0;
  Count non_motorized_in = 0;
  Count non_motorized_out = 0;

  bool operator==(const DetectionRecord&) const = default;
};

struct ObjectiveVector {
  std::int64_t f1 = 0;  // vehicles still queued after the cycle
  std::int64_t f2 = 0;  // summed red seconds
  auto operator<=>(const ObjectiveVector&) const = default;
};

// Vehicles a queue can release in `seconds` of green at `rate` veh/s. The
// epsilon absorbs binary rounding of decimal rates (0.29 * 100 -> 28.999...).
inline Count discharge_capacity(double rate, Seconds seconds) {
  if (seconds <= 0) return 0;
  return static_cast<Count>(std::floor(rate * static_cast<double>(seconds) + 1e-9));
}

// ---------------------------------------------------------------------------
// Validation

inline void validate(const IntersectionConfig& cfg) {
  auto fail = [](const std::string& what) { throw ValidationError(what); };
  if (cfg.num_links < 2) fail("num_links must be >= 2");
  if (cfg.link_names.size() != cfg.num_links)
    fail("link_names has " + std::to_string(cfg.link_names.size()) + " entries, expected " +
         std::to_string(cfg.num_links));
  if (cfg.min_green_s < 1) fail("min_green_s must be >= 1");
  if (cfg.max_green_s < cfg.min_green_s) fail("min_green_s must be <= max_green_s");
  if (cfg.green_step_s < 1) fail("green_step_s must be >= 1");
  if ((cfg.max_green_s - cfg.min_green_s) % cfg.green_step_s != 0)
    fail("max_green_s - min_green_s must be a multiple of green_step_s");
  if (cfg.inter_green_s < 0) fail("inter_green_s must be >= 0");
  if (!(cfg.sat_flow_motorized > 0.0) || !std::isfinite(cfg.sat_flow_motorized))
    fail("sat_flow_motorized must be > 0");
  if (!(cfg.sat_flow_non_motorized > 0.0) || !std::isfinite(cfg.sat_flow_non_motorized))
    fail("sat_flow_non_motorized must be > 0");
}

inline void validate(const QueueState& q, std::size_t num_links) {
  if (q.motorized.size() != num_links || q.non_motorized.size() != num_links)
    throw ValidationError("queue has " + std::to_string(q.motorized.size()) + "/" +
                          std::to_string(q.non_motorized.size()) + " links, expected " +
                          std::to_string(num_links));
  for (std::size_t i = 0; i < num_links; ++i)
    if (q.motorized[i] < 0 || q.non_motorized[i] < 0)
      throw ValidationError("queue count for link " + std::to_string(i) + " is negative");
}

struct PlanViolation {
  enum class Kind { UnservedLink, DuplicateLink, UnknownLink, GreenBound, GreenGrid, NegativeTiming };
  Kind kind;
  std::string message;
};

// Every violated plan invariant, in a stable order. Empty means the plan is ok.
inline std::vector<PlanViolation> validate_plan(const SignalPlan& plan, const IntersectionConfig& cfg) {
  using K = PlanViolation::Kind;
  std::vector<PlanViolation> out;
  std::vector<int> served(cfg.num_links, 0);
  for (const auto& p : plan.phases) {
    if (p.link.index >= cfg.num_links) {
      out.push_back({K::UnknownLink, "link " + std::to_string(p.link.index) + " out of range"});
      continue;
    }
    ++served[p.link.index];
    if (p.green_s < cfg.min_green_s || p.green_s > cfg.max_green_s) {
      out.push_back({K::GreenBound, "green bound: link " + std::to_string(p.link.index) + " has " +
                                        std::to_string(p.green_s) + " s outside [" +
                                        std::to_string(cfg.min_green_s) + ", " +
                                        std::to_string(cfg.max_green_s) + "]"});
    } else if (!cfg.on_green_grid(p.green_s)) {
      out.push_back({K::GreenGrid, "green grid: link " + std::to_string(p.link.index) + " has " +
                                       std::to_string(p.green_s) + " s off the " +
                                       std::to_string(cfg.green_step_s) + " s step"});
    }
  }
  for (std::size_t i = 0; i < cfg.num_links; ++i) {
    if (served[i] == 0) out.push_back({K::UnservedLink, "link " + std::to_string(i) + " unserved"});
    if (served[i] > 1)
      out.push_back({K::DuplicateLink, "link " + std::to_string(i) + " served " +
                                           std::to_string(served[i]) + " times"});
  }
  if (plan.inter_green_s < 0 || plan.guidance_pad_s < 0)
    out.push_back({K::NegativeTiming, "inter_green_s and guidance_pad_s must be >= 0"});
  return out;
}

inline std::string join_violations(const std::vector<PlanViolation>& v) {
  std::string s;
  for (const auto& x : v) {
    if (!s.empty()) s += "; ";
    s += x.message;
  }
  return s;
}

// ---------------------------------------------------------------------------
// JSON

using nlohmann::json;

inline void to_json(json& j, const LinkId& l) { j = l.index; }
inline void from_json(const json& j, LinkId& l) { l.index = j.get<std::size_t>(); }

inline void to_json(json& j, const IntersectionConfig& c) {
  j = json{{"num_links", c.num_links},
           {"link_names", c.link_names},
           {"min_green_s", c.min_green_s},
           {"max_green_s", c.max_green_s},
           {"green_step_s", c.green_step_s},
           {"inter_green_s", c.inter_green_s},
           {"sat_flow_motorized", c.sat_flow_motorized},
           {"sat_flow_non_motorized", c.sat_flow_non_motorized}};
}

inline void from_json(const json& j, IntersectionConfig& c) {
  IntersectionConfig d;
  c.num_links = j.at("num_links").get<std::size_t>();
  if (j.contains("link_names")) {
    c.link_names = j.at("link_names").get<std::vector<std::string>>();
  } else {
    c.link_names.clear();
    for (std::size_t i = 0; i < c.num_links; ++i) c.link_names.push_back("link" + std::to_string(i));
  }
  c.min_green_s = j.value("min_green_s", d.min_green_s);
  c.max_green_s = j.value("max_green_s", d.max_green_s);
  c.green_step_s = j.value("green_step_s", d.green_step_s);
  c.inter_green_s = j.value("inter_green_s", d.inter_green_s);
  c.sat_flow_motorized = j.value("sat_flow_motorized", d.sat_flow_motorized);
  c.sat_flow_non_motorized = j.value("sat_flow_non_motorized", d.sat_flow_non_motorized);
}

inline void to_json(json& j, const QueueState& q) {
  j = json{{"motorized", q.motorized}, {"non_motorized", q.non_motorized}, {"timestamp_ms", q.timestamp_ms}};
}
inline void from_json(const json& j, QueueState& q) {
  q.motorized = j.at("motorized").get<std::vector<Count>>();
  q.non_motorized = j.at("non_motorized").get<std::vector<Count>>();
  q.timestamp_ms = j.value("timestamp_ms", MonoMillis{0});
}

inline void to_json(json& j, const Phase& p) { j = json{{"link", p.link}, {"green_s", p.green_s}}; }
inline void from_json(const json& j, Phase& p) {
  p.link = j.at("link").get<LinkId>();
  p.green_s = j.at("green_s").get<Seconds>();
}

inline void to_json(json& j, const SignalPlan& s) {
  j = json{{"phases", s.phases}, {"inter_green_s", s.inter_green_s}, {"guidance_pad_s", s.guidance_pad_s},
           {"cycle_length_s", s.cycle_length()}};
}
inline void from_json(const json& j, SignalPlan& s) {
  s.phases = j.at("phases").get<std::vector<Phase>>();
  s.inter_green_s = j.at("inter_green_s").get<Seconds>();
  s.guidance_pad_s = j.value("guidance_pad_s", Seconds{0});
}

inline void to_json(json& j, const DetectionRecord& r) {
  j = json{{"camera_id", r.camera_id},
           {"frame_ts_ms", r.frame_ts_ms},
           {"motorized_in", r.motorized_in},
           {"motorized_out", r.motorized_out},
           {"non_motorized_in", r.non_motorized_in},
           {"non_motorized_out", r.non_motorized_out}};
}
inline void from_json(const json& j, DetectionRecord& r) {
  r.camera_id = j.at("camera_id").get<LinkId>();
  r.frame_ts_ms = j.at("frame_ts_ms").get<MonoMillis>();
  r.motorized_in = j.at("motorized_in").get<Count>();
  r.motorized_out = j.at("motorized_out").get<Count>();
  r.non_motorized_in = j.at("non_motorized_in").get<Count>();
  r.non_motorized_out = j.at("non_motorized_out").get<Count>();
  if (r.motorized_in < 0 || r.motorized_out < 0 || r.non_motorized_in < 0 || r.non_motorized_out < 0)
    throw ValidationError("detection counts must be >= 0");
}

inline void to_json(json& j, const ObjectiveVector& o) { j = json{{"f1", o.f1}, {"f2", o.f2}}; }
inline void from_json(const json& j, ObjectiveVector& o) {
  o.f1 = j.at("f1").get<std::int64_t>();
  o.f2 = j.at("f2").get<std::int64_t>();
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline IntersectionConfig parse_intersection_config(const json& j) {
  IntersectionConfig cfg;
  try {
    cfg = j.get<IntersectionConfig>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("intersection config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

inline IntersectionConfig load_intersection_config(const std::filesystem::path& path) {
  return parse_intersection_config(read_json_file(path));
}

inline QueueState load_queue_state(const std::filesystem::path& path, std::size_t num_links) {
  QueueState q;
  try {
    q = read_json_file(path).get<QueueState>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  validate(q, num_links);
  return q;
}

// Line-delimited JSON; blank lines are skipped.
template <typename T>
std::vector<T> read_jsonl(std::istream& in, const std::string& source = "<stream>") {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      throw ParseError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
void write_jsonl(std::ostream& out, const T& value) {
  out << json(value).dump() << '\n';
}

}  // namespace sigsched
