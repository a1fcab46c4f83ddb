#pragma once

// Second-by-second queue simulator for a single intersection.
//
// Each simulated second: emergency events due at t reorder the running plan,
// Poisson arrivals join every link, and the link in its green interval
// discharges at the class saturation rates. Guidance pads and inter-green
// hold or clear the right of way without discharging. The controller is
// asked for a new plan at every cycle boundary and sees the queue as it was
// sensing_latency_s seconds earlier, optionally thinned by detector misses.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigsched/core.hpp"
#include "sigsched/nsga2.hpp"
#include "sigsched/objectives.hpp"

namespace sigsched::sim {

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

struct ArrivalModel {
  std::vector<double> motorized_rate;      // veh/s per link
  std::vector<double> non_motorized_rate;  // veh/s per link
  std::uint64_t rng_seed = 1;
};

inline void validate(const ArrivalModel& d, std::size_t num_links) {
  if (d.motorized_rate.size() != num_links || d.non_motorized_rate.size() != num_links)
    throw ValidationError("demand rates must have one entry per link");
  for (std::size_t i = 0; i < num_links; ++i)
    if (!(d.motorized_rate[i] >= 0.0) || !(d.non_motorized_rate[i] >= 0.0))
      throw ValidationError("demand rates must be >= 0");
}

class Controller {
 public:
  virtual ~Controller() = default;
  virtual SignalPlan next_plan(const QueueState& observed) = 0;
};

class FixedTimeController : public Controller {
 public:
  // Greens indexed by link; phases run in `order` (default: link order).
  FixedTimeController(const IntersectionConfig& cfg, std::vector<Seconds> greens, std::vector<std::size_t> order = {}) {
    if (greens.size() != cfg.num_links) throw ValidationError("fixed-time greens must have one entry per link");
    if (order.empty())
      for (std::size_t i = 0; i < cfg.num_links; ++i) order.push_back(i);
    plan_.inter_green_s = cfg.inter_green_s;
    for (std::size_t i : order) {
      if (i >= greens.size()) throw ValidationError("fixed-time order references unknown link");
      plan_.phases.push_back({LinkId{i}, greens[i]});
    }
  }

  SignalPlan next_plan(const QueueState&) override { return plan_; }

 private:
  SignalPlan plan_;
};

class AdaptiveController : public Controller {
 public:
  AdaptiveController(IntersectionConfig cfg, nsga2::OptimizerParams params, nsga2::SelectionPolicy policy)
      : cfg_(std::move(cfg)), params_(params), policy_(policy) {
    nsga2::validate(params_);
  }

  SignalPlan next_plan(const QueueState& observed) override {
    const auto front = nsga2::run(observed, cfg_, params_);
    return nsga2::select_operating_point(front, policy_, cfg_, params_.guidance_pad_s);
  }

 private:
  IntersectionConfig cfg_;
  nsga2::OptimizerParams params_;
  nsga2::SelectionPolicy policy_;
};

struct EmergencyEvent {
  Seconds time_s = 0;
  LinkId link;
};

// Moves the phase serving event.link right behind the active phase. With no
// active phase (before the cycle starts) the link moves to the front.
// Durations are untouched and every link is still served once.
inline SignalPlan apply_emergency_reorder(SignalPlan plan, const EmergencyEvent& event,
                                          std::optional<std::size_t> active) {
  const std::size_t pos = plan.position_of(event.link);
  if (pos >= plan.phases.size() || plan.phases.size() <= 1) return plan;
  std::size_t target = 0;
  if (active) {
    if (pos == *active || pos == *active + 1) return plan;
    target = pos < *active ? *active : *active + 1;
  } else if (pos == 0) {
    return plan;
  }
  const Phase moved = plan.phases[pos];
  plan.phases.erase(plan.phases.begin() + static_cast<std::ptrdiff_t>(pos));
  plan.phases.insert(plan.phases.begin() + static_cast<std::ptrdiff_t>(target), moved);
  return plan;
}

struct Blackout {
  Seconds start_s = 0;
  Seconds end_s = 0;  // exclusive
};

struct SimOptions {
  double detection_prob = 1.0;  // per-vehicle probability a waiting vehicle is observed
  Seconds guidance_pad_s = 0;
  Seconds sensing_latency_s = 2;
  std::vector<EmergencyEvent> emergencies;
  std::vector<Blackout> blackouts;
  std::optional<QueueState> initial_queue;
};

inline void validate(const SimOptions& o, std::size_t num_links) {
  if (o.detection_prob < 0.0 || o.detection_prob > 1.0) throw ValidationError("detection_prob must be in [0, 1]");
  if (o.guidance_pad_s < 0) throw ValidationError("guidance_pad_s must be >= 0");
  if (o.sensing_latency_s < 0 || o.sensing_latency_s > 30) throw ValidationError("sensing_latency_s must be in [0, 30]");
  for (const auto& e : o.emergencies)
    if (e.link.index >= num_links || e.time_s < 0) throw ValidationError("emergency event out of range");
  for (const auto& b : o.blackouts)
    if (b.end_s < b.start_s) throw ValidationError("blackout end precedes start");
  if (o.initial_queue) validate(*o.initial_queue, num_links);
}

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::vector<PlanViolation> v)
      : std::runtime_error(what), violations(std::move(v)) {}
  std::vector<PlanViolation> violations;
};

enum class PhaseState { Green, Pad, InterGreen };

inline const char* to_string(PhaseState s) {
  switch (s) {
    case PhaseState::Green: return "green";
    case PhaseState::Pad: return "pad";
    case PhaseState::InterGreen: return "intergreen";
  }
  return "?";
}

struct SecondRecord {
  Seconds t = 0;
  std::vector<Count> queue_motorized;  // after second t
  std::vector<Count> queue_non_motorized;
  std::vector<Count> arrivals_motorized;
  std::vector<Count> arrivals_non_motorized;
  std::vector<Count> discharged_motorized;
  std::vector<Count> discharged_non_motorized;
  std::optional<LinkId> active;  // link holding right of way, none during inter-green
  PhaseState state = PhaseState::Green;
  bool blackout = false;
  std::uint64_t cycle = 0;
};

struct PhaseStart {
  Seconds t = 0;
  LinkId link;
  std::uint64_t cycle = 0;
};

struct SimMetrics {
  std::vector<Count> max_waiting_per_link;
  std::vector<double> avg_waiting_per_link;
  Count overall_max = 0;
  double overall_avg = 0.0;
  Count throughput_total = 0;
  Count arrivals_total = 0;
  Count initial_total = 0;
  std::uint64_t cycles_completed = 0;
  Seconds time_horizon_s = 0;
};

struct SimResult {
  SimMetrics metrics;
  std::vector<SecondRecord> series;
  std::vector<PhaseStart> phase_starts;
  std::vector<SignalPlan> executed_plans;  // as handed out by the controller, with pads applied
};

namespace detail {

enum class Segment { PrePad, Green, PostPad, InterGreen, Done };

inline Seconds segment_length(const SignalPlan& plan, std::size_t phase, Segment s) {
  switch (s) {
    case Segment::PrePad:
    case Segment::PostPad: return plan.guidance_pad_s;
    case Segment::Green: return plan.phases[phase].green_s;
    case Segment::InterGreen: return plan.inter_green_s;
    case Segment::Done: return 0;
  }
  return 0;
}

inline Segment next_segment(Segment s) {
  switch (s) {
    case Segment::PrePad: return Segment::Green;
    case Segment::Green: return Segment::PostPad;
    case Segment::PostPad: return Segment::InterGreen;
    default: return Segment::Done;
  }
}

}  // namespace detail

inline SimResult simulate(const IntersectionConfig& cfg, const ArrivalModel& demand, Controller& controller,
                          Seconds horizon_s, const SimOptions& options = {}) {
  using detail::Segment;
  validate(cfg);
  validate(demand, cfg.num_links);
  validate(options, cfg.num_links);
  if (horizon_s <= 0) throw ValidationError("horizon_s must be > 0");

  const std::size_t L = cfg.num_links;
  std::vector<std::mt19937_64> arrival_rng;
  for (std::size_t i = 0; i < L; ++i) {
    arrival_rng.emplace_back(stream_seed(demand.rng_seed, i, 0));
    arrival_rng.emplace_back(stream_seed(demand.rng_seed, i, 1));
  }
  std::mt19937_64 observe_rng(stream_seed(demand.rng_seed, 0x0b5e, 0x0b5e));

  QueueState q = options.initial_queue.value_or(QueueState::zeros(L));
  SimResult res;
  res.metrics.time_horizon_s = horizon_s;
  res.metrics.initial_total = q.total();
  res.metrics.max_waiting_per_link.assign(L, 0);
  std::vector<double> waiting_sum(L, 0.0);
  res.series.reserve(static_cast<std::size_t>(horizon_s));

  std::vector<QueueState> history;  // queue at the start of each second
  history.reserve(static_cast<std::size_t>(horizon_s));

  SignalPlan plan;
  std::size_t phase = 0;
  Segment seg = Segment::Done;
  Seconds seg_elapsed = 0;
  Seconds green_elapsed = 0;
  std::uint64_t cycle = 0;
  bool need_plan = true;
  // Phase to run after the current one when it is not simply phase + 1.
  std::optional<std::size_t> next_override;

  auto skip_empty = [&] {
    while (seg != Segment::Done && detail::segment_length(plan, phase, seg) == 0) seg = detail::next_segment(seg);
    seg_elapsed = 0;
    if (seg == Segment::Green) green_elapsed = 0;
  };
  auto start_phase = [&](std::size_t p, Seconds t) {
    phase = p;
    seg = Segment::PrePad;
    skip_empty();
    res.phase_starts.push_back({t, plan.phases[phase].link, cycle});
  };

  auto observe = [&](Seconds t) {
    const Seconds seen_at = std::max<Seconds>(0, t - options.sensing_latency_s);
    QueueState obs = history[static_cast<std::size_t>(seen_at)];
    obs.timestamp_ms = seen_at * 1000;
    if (options.detection_prob < 1.0) {
      for (auto* counts : {&obs.motorized, &obs.non_motorized})
        for (auto& c : *counts)
          if (c > 0) c = std::binomial_distribution<Count>(c, options.detection_prob)(observe_rng);
    }
    return obs;
  };

  for (Seconds t = 0; t < horizon_s; ++t) {
    history.push_back(q);

    if (need_plan) {
      plan = controller.next_plan(observe(t));
      plan.guidance_pad_s = options.guidance_pad_s;
      if (auto v = validate_plan(plan, cfg); !v.empty())
        throw SimulationError("controller returned an invalid plan: " + join_violations(v), v);
      if (t == 0 && horizon_s < plan.cycle_length())
        throw ValidationError("horizon_s is shorter than one signal cycle");
      res.executed_plans.push_back(plan);
      need_plan = false;
      next_override.reset();
      start_phase(0, t);
    }

    for (const auto& ev : options.emergencies) {
      if (ev.time_s != t) continue;
      const LinkId current = plan.phases[phase].link;
      if (current == ev.link) {
        // Still holding the right of way: nothing to do. Just released it:
        // serve it again after the clearance interval.
        if (seg == Segment::InterGreen) next_override = phase;
        continue;
      }
      plan = apply_emergency_reorder(plan, ev, phase);
      phase = plan.position_of(current);
      next_override.reset();
    }

    SecondRecord rec;
    rec.t = t;
    rec.cycle = cycle;
    rec.arrivals_motorized.assign(L, 0);
    rec.arrivals_non_motorized.assign(L, 0);
    rec.discharged_motorized.assign(L, 0);
    rec.discharged_non_motorized.assign(L, 0);
    for (std::size_t i = 0; i < L; ++i) {
      if (demand.motorized_rate[i] > 0.0)
        rec.arrivals_motorized[i] = std::poisson_distribution<Count>(demand.motorized_rate[i])(arrival_rng[2 * i]);
      if (demand.non_motorized_rate[i] > 0.0)
        rec.arrivals_non_motorized[i] =
            std::poisson_distribution<Count>(demand.non_motorized_rate[i])(arrival_rng[2 * i + 1]);
    }

    rec.blackout = std::any_of(options.blackouts.begin(), options.blackouts.end(),
                               [&](const Blackout& b) { return t >= b.start_s && t < b.end_s; });
    rec.state = seg == Segment::Green        ? PhaseState::Green
                : seg == Segment::InterGreen ? PhaseState::InterGreen
                                             : PhaseState::Pad;
    if (seg != Segment::InterGreen) rec.active = plan.phases[phase].link;

    if (seg == Segment::Green) {
      ++green_elapsed;
      if (!rec.blackout) {
        const std::size_t i = plan.phases[phase].link.index;
        const Count cap_m = discharge_capacity(cfg.sat_flow_motorized, green_elapsed) -
                            discharge_capacity(cfg.sat_flow_motorized, green_elapsed - 1);
        const Count cap_nm = discharge_capacity(cfg.sat_flow_non_motorized, green_elapsed) -
                             discharge_capacity(cfg.sat_flow_non_motorized, green_elapsed - 1);
        rec.discharged_motorized[i] = std::min(cap_m, q.motorized[i] + rec.arrivals_motorized[i]);
        rec.discharged_non_motorized[i] = std::min(cap_nm, q.non_motorized[i] + rec.arrivals_non_motorized[i]);
      }
    }

    for (std::size_t i = 0; i < L; ++i) {
      q.motorized[i] += rec.arrivals_motorized[i] - rec.discharged_motorized[i];
      q.non_motorized[i] += rec.arrivals_non_motorized[i] - rec.discharged_non_motorized[i];
      res.metrics.arrivals_total += rec.arrivals_motorized[i] + rec.arrivals_non_motorized[i];
      res.metrics.throughput_total += rec.discharged_motorized[i] + rec.discharged_non_motorized[i];
      const Count waiting = q.total(i);
      waiting_sum[i] += static_cast<double>(waiting);
      res.metrics.max_waiting_per_link[i] = std::max(res.metrics.max_waiting_per_link[i], waiting);
    }
    rec.queue_motorized = q.motorized;
    rec.queue_non_motorized = q.non_motorized;
    res.series.push_back(std::move(rec));

    // Advance the schedule by one second.
    if (++seg_elapsed >= detail::segment_length(plan, phase, seg)) {
      seg = detail::next_segment(seg);
      skip_empty();
      if (seg == Segment::Done) {
        const std::size_t next = next_override.value_or(phase + 1);
        next_override.reset();
        if (next < plan.phases.size()) {
          start_phase(next, t + 1);
        } else {
          ++cycle;
          ++res.metrics.cycles_completed;
          need_plan = true;
        }
      }
    }
  }

  res.metrics.avg_waiting_per_link.resize(L);
  double avg_sum = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    res.metrics.avg_waiting_per_link[i] = waiting_sum[i] / static_cast<double>(horizon_s);
    avg_sum += res.metrics.avg_waiting_per_link[i];
    res.metrics.overall_max = std::max(res.metrics.overall_max, res.metrics.max_waiting_per_link[i]);
  }
  res.metrics.overall_avg = avg_sum / static_cast<double>(L);
  return res;
}

// ---------------------------------------------------------------------------
// Paired comparison

struct NamedController {
  std::string name;
  std::function<std::unique_ptr<Controller>()> make;
};

struct ComparisonReport {
  std::vector<std::string> names;
  std::vector<std::uint64_t> seeds;
  std::vector<SimMetrics> mean_metrics;                // per controller, averaged over seeds
  std::vector<std::vector<double>> overall_avg;        // [controller][seed]
  std::vector<std::vector<Count>> overall_max;         // [controller][seed]
  std::vector<double> delta_avg_pct;                   // vs controller 0
  std::vector<double> delta_max_pct;                   // vs controller 0
};

inline double percent_delta(double value, double baseline) {
  if (baseline == 0.0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (value - baseline) / baseline * 100.0;
}

// Runs every controller on the same arrival sequence per seed. Deltas are
// relative to the first controller.
inline ComparisonReport compare_controllers(const IntersectionConfig& cfg, ArrivalModel demand,
                                            const std::vector<NamedController>& controllers, Seconds horizon_s,
                                            const std::vector<std::uint64_t>& seeds, const SimOptions& options = {}) {
  if (controllers.size() < 2) throw ValidationError("compare_controllers needs at least two controllers");
  if (seeds.empty()) throw ValidationError("compare_controllers needs at least one seed");
  const std::size_t L = cfg.num_links;
  const double n_seeds = static_cast<double>(seeds.size());

  ComparisonReport rep;
  rep.seeds = seeds;
  for (const auto& c : controllers) {
    rep.names.push_back(c.name);
    SimMetrics mean;
    mean.max_waiting_per_link.assign(L, 0);
    mean.avg_waiting_per_link.assign(L, 0.0);
    mean.time_horizon_s = horizon_s;
    std::vector<double> max_sum(L, 0.0);
    double overall_max_sum = 0.0, throughput_sum = 0.0, arrivals_sum = 0.0, cycles_sum = 0.0;
    std::vector<double> avgs;
    std::vector<Count> maxes;
    for (std::uint64_t seed : seeds) {
      demand.rng_seed = seed;
      auto ctrl = c.make();
      const auto r = simulate(cfg, demand, *ctrl, horizon_s, options);
      for (std::size_t i = 0; i < L; ++i) {
        mean.avg_waiting_per_link[i] += r.metrics.avg_waiting_per_link[i] / n_seeds;
        max_sum[i] += static_cast<double>(r.metrics.max_waiting_per_link[i]);
      }
      mean.overall_avg += r.metrics.overall_avg / n_seeds;
      overall_max_sum += static_cast<double>(r.metrics.overall_max);
      throughput_sum += static_cast<double>(r.metrics.throughput_total);
      arrivals_sum += static_cast<double>(r.metrics.arrivals_total);
      cycles_sum += static_cast<double>(r.metrics.cycles_completed);
      mean.initial_total = r.metrics.initial_total;
      avgs.push_back(r.metrics.overall_avg);
      maxes.push_back(r.metrics.overall_max);
    }
    for (std::size_t i = 0; i < L; ++i) mean.max_waiting_per_link[i] = std::llround(max_sum[i] / n_seeds);
    mean.overall_max = std::llround(overall_max_sum / n_seeds);
    mean.throughput_total = std::llround(throughput_sum / n_seeds);
    mean.arrivals_total = std::llround(arrivals_sum / n_seeds);
    mean.cycles_completed = static_cast<std::uint64_t>(std::llround(cycles_sum / n_seeds));
    rep.mean_metrics.push_back(std::move(mean));
    rep.overall_avg.push_back(std::move(avgs));
    rep.overall_max.push_back(std::move(maxes));
  }

  auto mean_of = [](const auto& v) {
    double s = 0.0;
    for (auto x : v) s += static_cast<double>(x);
    return s / static_cast<double>(v.size());
  };
  const double base_avg = mean_of(rep.overall_avg[0]);
  const double base_max = mean_of(rep.overall_max[0]);
  for (std::size_t c = 0; c < controllers.size(); ++c) {
    rep.delta_avg_pct.push_back(percent_delta(mean_of(rep.overall_avg[c]), base_avg));
    rep.delta_max_pct.push_back(percent_delta(mean_of(rep.overall_max[c]), base_max));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline void write_timeseries_csv(std::ostream& out, const SimResult& r, std::size_t num_links) {
  out << "t";
  for (std::size_t i = 0; i < num_links; ++i) out << ",q_" << i;
  out << ",active,phase\n";
  for (const auto& rec : r.series) {
    out << rec.t;
    for (std::size_t i = 0; i < num_links; ++i) out << ',' << rec.queue_motorized[i] + rec.queue_non_motorized[i];
    out << ',' << (rec.active ? static_cast<long long>(rec.active->index) : -1LL) << ','
        << (rec.blackout && rec.state != PhaseState::InterGreen ? "blackout" : to_string(rec.state)) << '\n';
  }
}

inline void to_json(json& j, const SimMetrics& m) {
  j = json{{"max_waiting_per_link", m.max_waiting_per_link},
           {"avg_waiting_per_link", m.avg_waiting_per_link},
           {"overall_max", m.overall_max},
           {"overall_avg", m.overall_avg},
           {"throughput_total", m.throughput_total},
           {"arrivals_total", m.arrivals_total},
           {"initial_total", m.initial_total},
           {"cycles_completed", m.cycles_completed},
           {"time_horizon_s", m.time_horizon_s}};
}

inline void to_json(json& j, const ComparisonReport& r) {
  j = json::object();
  j["seeds"] = r.seeds;
  j["controllers"] = json::array();
  for (std::size_t c = 0; c < r.names.size(); ++c) {
    j["controllers"].push_back({{"name", r.names[c]},
                                {"mean_metrics", r.mean_metrics[c]},
                                {"overall_avg_per_seed", r.overall_avg[c]},
                                {"overall_max_per_seed", r.overall_max[c]},
                                {"delta_overall_avg_pct", r.delta_avg_pct[c]},
                                {"delta_overall_max_pct", r.delta_max_pct[c]}});
  }
}

inline void to_json(json& j, const EmergencyEvent& e) { j = json{{"time_s", e.time_s}, {"link", e.link}}; }
inline void from_json(const json& j, EmergencyEvent& e) {
  e.time_s = j.at("time_s").get<Seconds>();
  e.link = j.at("link").get<LinkId>();
}

inline void to_json(json& j, const Blackout& b) { j = json{{"start_s", b.start_s}, {"end_s", b.end_s}}; }
inline void from_json(const json& j, Blackout& b) {
  b.start_s = j.at("start_s").get<Seconds>();
  b.end_s = j.at("end_s").get<Seconds>();
}

}  // namespace sigsched::sim
