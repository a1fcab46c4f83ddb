#pragma once

// End-to-end latency accounting. Per cycle i, with n_f frames consumed:
//
//   T_extraction_i = mean of D_extraction_j
//   T_inference_i  = mean of D_inference_j
//   T_latency_i    = T_extraction_i + T_inference_i + T_optimization_i
//
// and the run-level T_latency is the mean of T_latency_i over the N cycles.
// All values are milliseconds.

#include <cstdint>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace sigsched {

inline double mean_ms(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  return std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
}

struct CycleLatency {
  std::uint64_t cycle_id = 0;
  std::vector<double> extraction_samples_ms;
  std::vector<double> inference_samples_ms;
  double optimization_ms = 0.0;
  double extraction_ms = 0.0;  // T_extraction_i
  double inference_ms = 0.0;   // T_inference_i
  double latency_ms = 0.0;     // T_latency_i
};

class LatencyLedger {
 public:
  const CycleLatency& record_cycle(std::uint64_t cycle_id, std::vector<double> extraction_samples_ms,
                                   std::vector<double> inference_samples_ms, double optimization_ms) {
    if (extraction_samples_ms.size() != inference_samples_ms.size())
      throw std::invalid_argument("extraction and inference sample counts differ");
    CycleLatency c;
    c.cycle_id = cycle_id;
    c.extraction_ms = mean_ms(extraction_samples_ms);
    c.inference_ms = mean_ms(inference_samples_ms);
    c.optimization_ms = optimization_ms;
    c.latency_ms = c.extraction_ms + c.inference_ms + c.optimization_ms;
    c.extraction_samples_ms = std::move(extraction_samples_ms);
    c.inference_samples_ms = std::move(inference_samples_ms);
    cycles_.push_back(std::move(c));
    return cycles_.back();
  }

  const std::vector<CycleLatency>& cycles() const { return cycles_; }
  std::size_t size() const { return cycles_.size(); }

  // T_latency
  double run_latency_ms() const {
    if (cycles_.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& c : cycles_) sum += c.latency_ms;
    return sum / static_cast<double>(cycles_.size());
  }

  void write_summary(std::ostream& out) const {
    out << std::fixed << std::setprecision(3);
    out << "cycle  n_f  T_extraction_ms  T_inference_ms  T_optimization_ms  T_latency_ms\n";
    for (const auto& c : cycles_) {
      out << std::setw(5) << c.cycle_id << "  " << std::setw(3) << c.extraction_samples_ms.size() << "  "
          << std::setw(15) << c.extraction_ms << "  " << std::setw(14) << c.inference_ms << "  " << std::setw(17)
          << c.optimization_ms << "  " << std::setw(12) << c.latency_ms << "\n";
    }
    out << "N = " << cycles_.size() << "  T_latency_ms = " << run_latency_ms() << "\n";
    out.unsetf(std::ios::floatfield);
  }

 private:
  std::vector<CycleLatency> cycles_;
};

inline void to_json(nlohmann::json& j, const CycleLatency& c) {
  j = nlohmann::json{{"cycle_id", c.cycle_id},
                     {"extraction_samples_ms", c.extraction_samples_ms},
                     {"inference_samples_ms", c.inference_samples_ms},
                     {"T_extraction_ms", c.extraction_ms},
                     {"T_inference_ms", c.inference_ms},
                     {"T_optimization_ms", c.optimization_ms},
                     {"T_latency_ms", c.latency_ms}};
}

inline void from_json(const nlohmann::json& j, CycleLatency& c) {
  c.cycle_id = j.at("cycle_id").get<std::uint64_t>();
  c.extraction_samples_ms = j.at("extraction_samples_ms").get<std::vector<double>>();
  c.inference_samples_ms = j.at("inference_samples_ms").get<std::vector<double>>();
  c.extraction_ms = j.at("T_extraction_ms").get<double>();
  c.inference_ms = j.at("T_inference_ms").get<double>();
  c.optimization_ms = j.at("T_optimization_ms").get<double>();
  c.latency_ms = j.at("T_latency_ms").get<double>();
}

}  // namespace sigsched
