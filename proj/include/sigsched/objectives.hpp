#pragma once

// Discharge model and the two minimized objectives: residual congestion
// (vehicles left after every link has used its green) and summed red time.

#include <stdexcept>
#include <vector>

#include "sigsched/core.hpp"

namespace sigsched {

struct ObjectiveOptions {
  // Count inter-green clearance as red for every link.
  bool include_inter_green = true;
  // Weight each link's red time by its queued vehicles before the cycle.
  bool queue_weighted_red = false;
};

using RedTimeVector = std::vector<Seconds>;

// Linear saturation-flow drain, floored and clamped at zero. Arrivals during
// the cycle are not modelled here.
inline QueueState discharge(const QueueState& queue, const SignalPlan& plan, const IntersectionConfig& cfg) {
  if (queue.motorized.size() != cfg.num_links || queue.non_motorized.size() != cfg.num_links)
    throw ValidationError("discharge: queue has " + std::to_string(queue.motorized.size()) +
                          " links, config has " + std::to_string(cfg.num_links));
  QueueState out = queue;
  for (const auto& phase : plan.phases) {
    const std::size_t i = phase.link.index;
    if (i >= cfg.num_links) throw ValidationError("discharge: link out of range");
    out.motorized[i] = std::max<Count>(0, out.motorized[i] - discharge_capacity(cfg.sat_flow_motorized, phase.green_s));
    out.non_motorized[i] =
        std::max<Count>(0, out.non_motorized[i] - discharge_capacity(cfg.sat_flow_non_motorized, phase.green_s));
  }
  return out;
}

inline std::int64_t f1(const QueueState& updated) { return updated.total(); }

// Red time of each link, indexed by the link id (not by phase position).
inline RedTimeVector red_times(const SignalPlan& plan, const ObjectiveOptions& opts = {}) {
  std::size_t num_links = 0;
  for (const auto& p : plan.phases) num_links = std::max(num_links, p.link.index + 1);
  RedTimeVector red(num_links, 0);
  const Seconds cycle = plan.cycle_length();
  const Seconds clearance = static_cast<Seconds>(plan.phases.size()) * plan.inter_green_s;
  for (const auto& p : plan.phases) {
    Seconds r = cycle - plan.service_time(p);
    if (!opts.include_inter_green) r -= clearance;
    red[p.link.index] = r;
  }
  return red;
}

inline std::int64_t f2(const SignalPlan& plan, const ObjectiveOptions& opts = {}) {
  std::int64_t sum = 0;
  for (Seconds r : red_times(plan, opts)) sum += r;
  return sum;
}

// Queue-weighted red time: seconds x vehicles waiting before the cycle.
inline std::int64_t f2_weighted(const SignalPlan& plan, const QueueState& queue, const ObjectiveOptions& opts = {}) {
  const auto red = red_times(plan, opts);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < red.size() && i < queue.size(); ++i) sum += red[i] * queue.total(i);
  return sum;
}

inline ObjectiveVector evaluate(const SignalPlan& plan, const QueueState& queue, const IntersectionConfig& cfg,
                                const ObjectiveOptions& opts = {}) {
  ObjectiveVector v;
  v.f1 = f1(discharge(queue, plan, cfg));
  v.f2 = opts.queue_weighted_red ? f2_weighted(plan, queue, opts) : f2(plan, opts);
  return v;
}

}  // namespace sigsched
