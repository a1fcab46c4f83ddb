#pragma once

// Stream-processing pipeline: one extraction worker per camera feeds a
// latest-only slot, inference workers turn the newest frame into a
// DetectionRecord, and a single orchestrator aggregates the records of a
// time window into a QueueState, runs the optimizer and logs latency.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sigsched/core.hpp"
#include "sigsched/frame_slot.hpp"
#include "sigsched/latency.hpp"
#include "sigsched/nsga2.hpp"

namespace sigsched::pipeline {

using SteadyClock = std::chrono::steady_clock;

inline double elapsed_ms(SteadyClock::time_point from, SteadyClock::time_point to) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

// Monotonic milliseconds since the first call in this process.
inline MonoMillis mono_now_ms() {
  static const auto epoch = SteadyClock::now();
  return std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - epoch).count();
}

// Sleeps until `deadline` unless stop is requested first. Returns false on stop.
inline bool sleep_until(SteadyClock::time_point deadline, std::stop_token stop) {
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lk(mu);
  return !cv.wait_until(lk, stop, deadline, [] { return false; }) && !stop.stop_requested();
}

// Mixes a seed with stream coordinates into an independent 64-bit seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

struct Packet {
  std::uint64_t seq = 0;  // per camera, starts at 0, +1 per packet
  DetectionRecord truth;  // ground truth carried by synthetic / replayed frames
};

struct Frame {
  LinkId camera;
  std::uint64_t seq = 0;
  MonoMillis arrival_ms = 0;
  double extraction_ms = 0.0;  // D_extraction_j
  DetectionRecord truth;
};

class SourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DetectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A camera stream. next_packet() blocks until the next packet arrives and
// returns nullopt at end of stream or on stop; it throws SourceError when
// the stream breaks. decode() turns a packet into a frame.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual LinkId camera() const = 0;
  virtual std::optional<Packet> next_packet(std::stop_token stop) = 0;
  virtual void decode(const Packet&) {}
};

struct SceneCounts {
  Count motorized_in = 0;
  Count motorized_out = 0;
  Count non_motorized_in = 0;
  Count non_motorized_out = 0;
};

// Emits a fixed scene at `fps`, optionally with Poisson variation of the
// counts, and spends `decode_ms` (+ uniform jitter) decoding each frame.
class SyntheticSource : public FrameSource {
 public:
  struct Options {
    double fps = 10.0;
    double decode_ms = 25.0;
    double jitter_ms = 0.0;
    SceneCounts scene;
    bool vary_scene = false;
    std::optional<std::uint64_t> max_frames;
    std::uint64_t seed = 1;
  };

  SyntheticSource(LinkId camera, Options opts)
      : camera_(camera), opts_(opts), rng_(mix_seed(opts.seed, camera.index, 0x5ce)) {
    if (!(opts_.fps > 0.0)) throw ValidationError("fps must be > 0");
  }

  LinkId camera() const override { return camera_; }

  std::optional<Packet> next_packet(std::stop_token stop) override {
    if (opts_.max_frames && seq_ >= *opts_.max_frames) return std::nullopt;
    const auto period = std::chrono::duration<double>(1.0 / opts_.fps);
    if (seq_ == 0) {
      next_due_ = SteadyClock::now();
    } else {
      next_due_ += std::chrono::duration_cast<SteadyClock::duration>(period);
      if (!sleep_until(next_due_, stop)) return std::nullopt;
    }
    if (stop.stop_requested()) return std::nullopt;
    Packet p;
    p.seq = seq_++;
    p.truth.camera_id = camera_;
    p.truth.frame_ts_ms = mono_now_ms();
    p.truth.motorized_in = vary(opts_.scene.motorized_in);
    p.truth.motorized_out = vary(opts_.scene.motorized_out);
    p.truth.non_motorized_in = vary(opts_.scene.non_motorized_in);
    p.truth.non_motorized_out = vary(opts_.scene.non_motorized_out);
    return p;
  }

  void decode(const Packet&) override {
    double ms = opts_.decode_ms;
    if (opts_.jitter_ms > 0.0) ms += std::uniform_real_distribution<double>(0.0, opts_.jitter_ms)(rng_);
    if (ms > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
  }

 private:
  Count vary(Count mean) {
    if (!opts_.vary_scene || mean <= 0) return mean;
    return std::poisson_distribution<Count>(static_cast<double>(mean))(rng_);
  }

  LinkId camera_;
  Options opts_;
  std::mt19937_64 rng_;
  std::uint64_t seq_ = 0;
  SteadyClock::time_point next_due_{};
};

// Replays one camera's records from a detection log, paced by the gaps
// between their frame_ts_ms divided by `speed` (speed <= 0: no pacing).
class ReplaySource : public FrameSource {
 public:
  ReplaySource(LinkId camera, std::vector<DetectionRecord> records, double speed = 1.0)
      : camera_(camera), speed_(speed) {
    for (auto& r : records)
      if (r.camera_id == camera) records_.push_back(r);
  }

  LinkId camera() const override { return camera_; }

  std::optional<Packet> next_packet(std::stop_token stop) override {
    if (next_ >= records_.size() || stop.stop_requested()) return std::nullopt;
    if (next_ == 0) {
      start_ = SteadyClock::now();
    } else if (speed_ > 0.0) {
      const double offset_ms = static_cast<double>(records_[next_].frame_ts_ms - records_[0].frame_ts_ms) / speed_;
      const auto due = start_ + std::chrono::duration_cast<SteadyClock::duration>(
                                    std::chrono::duration<double, std::milli>(offset_ms));
      if (!sleep_until(due, stop)) return std::nullopt;
    }
    Packet p;
    p.seq = next_;
    p.truth = records_[next_++];
    return p;
  }

 private:
  LinkId camera_;
  double speed_;
  std::vector<DetectionRecord> records_;
  std::size_t next_ = 0;
  SteadyClock::time_point start_{};
};

inline std::vector<DetectionRecord> load_detection_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_jsonl<DetectionRecord>(in, path.string());
}

class Detector {
 public:
  virtual ~Detector() = default;
  // Exactly one record per frame, or DetectorError.
  virtual DetectionRecord detect(const Frame& frame) = 0;
};

// Returns the frame's carried record unchanged.
class ReplayDetector : public Detector {
 public:
  DetectionRecord detect(const Frame& frame) override {
    DetectionRecord r = frame.truth;
    r.camera_id = frame.camera;
    return r;
  }
};

// Sleeps `delay_ms` per frame, then reports the ground truth with each
// vehicle missed with probability miss_rate and a Binomial(n, false_rate)
// number of phantom detections added per class. The noise stream of a frame
// depends only on (seed, camera, frame seq).
class SyntheticDetector : public Detector {
 public:
  struct Options {
    double delay_ms = 0.0;
    double miss_rate = 0.0;
    double false_rate = 0.0;
    std::uint64_t seed = 1;
  };

  explicit SyntheticDetector(Options opts) : opts_(opts) {
    if (opts_.delay_ms < 0.0) throw ValidationError("detector delay_ms must be >= 0");
    if (opts_.miss_rate < 0.0 || opts_.miss_rate > 1.0 || opts_.false_rate < 0.0 || opts_.false_rate > 1.0)
      throw ValidationError("detector miss_rate/false_rate must be in [0, 1]");
  }

  DetectionRecord detect(const Frame& frame) override {
    if (opts_.delay_ms > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(opts_.delay_ms));
    DetectionRecord r = frame.truth;
    r.camera_id = frame.camera;
    if (opts_.miss_rate == 0.0 && opts_.false_rate == 0.0) return r;
    std::mt19937_64 rng(mix_seed(opts_.seed, frame.camera.index, frame.seq));
    auto perturb = [&](Count n) {
      if (n <= 0) return n;
      Count kept = std::binomial_distribution<Count>(n, 1.0 - opts_.miss_rate)(rng);
      Count phantom = std::binomial_distribution<Count>(n, opts_.false_rate)(rng);
      return kept + phantom;
    };
    r.motorized_in = perturb(r.motorized_in);
    r.motorized_out = perturb(r.motorized_out);
    r.non_motorized_in = perturb(r.non_motorized_in);
    r.non_motorized_out = perturb(r.non_motorized_out);
    return r;
  }

 private:
  Options opts_;
};

struct InferenceResult {
  DetectionRecord record;
  std::uint64_t frame_seq = 0;
  std::uint64_t puts_at_take = 0;  // slot puts when the frame was taken
  double extraction_ms = 0.0;      // D_extraction_j
  double inference_ms = 0.0;       // D_inference_j
};

// Thread-safe hand-off from inference workers to the orchestrator.
class ResultQueue {
 public:
  void push(InferenceResult r) {
    {
      std::lock_guard lk(mu_);
      items_.push_back(std::move(r));
    }
    cv_.notify_all();
  }

  // Waits until at least one result is queued or `deadline` passes, then
  // drains everything queued.
  std::vector<InferenceResult> drain_until(SteadyClock::time_point deadline) {
    std::unique_lock lk(mu_);
    cv_.wait_until(lk, deadline, [&] { return !items_.empty() || woken_; });
    woken_ = false;
    std::vector<InferenceResult> out(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
    items_.clear();
    return out;
  }

  void wake() {
    {
      std::lock_guard lk(mu_);
      woken_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<InferenceResult> items_;
  bool woken_ = false;
};

struct ExtractionStats {
  std::vector<double> extraction_samples_ms;
  std::uint64_t frames = 0;
  std::uint64_t drops = 0;
  bool failed = false;
  std::string error;
};

// Pulls packets until end of stream, stop, or SourceError. Each decoded
// frame is offered to the slot in order.
inline void run_extraction_worker(FrameSource& source, FrameSlot<Frame>& slot, ExtractionStats& stats,
                                  std::stop_token stop) {
  try {
    while (!stop.stop_requested()) {
      auto packet = source.next_packet(stop);
      if (!packet) break;
      const auto arrival = SteadyClock::now();
      const MonoMillis arrival_ms = mono_now_ms();
      source.decode(*packet);
      Frame f;
      f.camera = source.camera();
      f.seq = packet->seq;
      f.arrival_ms = arrival_ms;
      f.truth = packet->truth;
      f.extraction_ms = elapsed_ms(arrival, SteadyClock::now());
      stats.extraction_samples_ms.push_back(f.extraction_ms);
      ++stats.frames;
      if (slot.put(std::move(f))) ++stats.drops;
    }
  } catch (const std::exception& e) {
    stats.failed = true;
    stats.error = e.what();
  }
}

struct InferenceStats {
  std::vector<double> inference_samples_ms;
  std::uint64_t records = 0;
  std::uint64_t errors = 0;
  std::uint64_t stale_takes = 0;  // taken frame older than the newest put
};

// Serves one or more slots round-robin. Every taken frame yields exactly one
// result or one counted error.
inline void run_inference_worker(std::vector<FrameSlot<Frame>*> slots, Doorbell& bell, Detector& detector,
                                 ResultQueue& sink, InferenceStats& stats, std::stop_token stop,
                                 std::chrono::milliseconds idle_wait = std::chrono::milliseconds(20)) {
  std::size_t cursor = 0;
  std::uint64_t seen = bell.ticks();
  while (!stop.stop_requested()) {
    bool worked = false;
    for (std::size_t k = 0; k < slots.size() && !stop.stop_requested(); ++k) {
      FrameSlot<Frame>* slot = slots[(cursor + k) % slots.size()];
      auto taken = slot->take_stamped();
      if (!taken) continue;
      worked = true;
      cursor = (cursor + k + 1) % slots.size();
      if (taken->value.seq + 1 != taken->puts_at_take) ++stats.stale_takes;
      const auto t0 = SteadyClock::now();
      try {
        DetectionRecord rec = detector.detect(taken->value);
        const double d = elapsed_ms(t0, SteadyClock::now());
        stats.inference_samples_ms.push_back(d);
        ++stats.records;
        sink.push({rec, taken->value.seq, taken->puts_at_take, taken->value.extraction_ms, d});
      } catch (const std::exception&) {
        ++stats.errors;
      }
      break;
    }
    if (!worked) seen = bell.wait_past(seen, idle_wait);
  }
}

// ---------------------------------------------------------------------------
// Aggregation

enum class StalePolicy { ReuseThenZero, Zero };

struct AggregateResult {
  QueueState state;
  std::vector<bool> stale;  // per link
  bool all_stale = false;   // no camera reported in the window
};

// Turns the records of one window into a QueueState. Link i takes the
// incoming counts of camera i's latest record; a silent camera reuses its
// last known counts for up to `reuse_windows` windows, then reads zero.
class Aggregator {
 public:
  Aggregator(std::size_t num_links, StalePolicy policy = StalePolicy::ReuseThenZero, std::size_t reuse_windows = 2)
      : policy_(policy), reuse_windows_(reuse_windows), last_(num_links), silent_windows_(num_links, 0) {}

  AggregateResult aggregate(std::span<const DetectionRecord> window, MonoMillis now_ms) {
    const std::size_t n = last_.size();
    std::vector<std::optional<DetectionRecord>> fresh(n);
    for (const auto& r : window) {
      if (r.camera_id.index >= n) throw ValidationError("camera id " + std::to_string(r.camera_id.index) + " out of range");
      auto& slot = fresh[r.camera_id.index];
      if (!slot || r.frame_ts_ms >= slot->frame_ts_ms) slot = r;
    }
    AggregateResult out;
    out.state = QueueState::zeros(n);
    out.state.timestamp_ms = now_ms;
    out.stale.assign(n, false);
    out.all_stale = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (fresh[i]) {
        out.all_stale = false;
        last_[i] = fresh[i];
        silent_windows_[i] = 0;
        out.state.motorized[i] = fresh[i]->motorized_in;
        out.state.non_motorized[i] = fresh[i]->non_motorized_in;
        continue;
      }
      out.stale[i] = true;
      ++silent_windows_[i];
      if (policy_ == StalePolicy::ReuseThenZero && last_[i] && silent_windows_[i] <= reuse_windows_) {
        out.state.motorized[i] = last_[i]->motorized_in;
        out.state.non_motorized[i] = last_[i]->non_motorized_in;
      }
    }
    return out;
  }

  // Seeds the last-known counts of a camera without a window.
  void remember(const DetectionRecord& r) { last_.at(r.camera_id.index) = r; }

 private:
  StalePolicy policy_;
  std::size_t reuse_windows_;
  std::vector<std::optional<DetectionRecord>> last_;
  std::vector<std::size_t> silent_windows_;
};

// ---------------------------------------------------------------------------
// Orchestration

struct PipelineOptions {
  IntersectionConfig intersection;
  std::chrono::milliseconds window{4000};
  StalePolicy stale_policy = StalePolicy::ReuseThenZero;
  std::size_t reuse_windows = 2;
  std::size_t inference_workers = 0;  // 0: one per camera
  nsga2::OptimizerParams optimizer;
  nsga2::SelectionPolicy selection;
};

struct CycleOutput {
  std::uint64_t cycle_id = 0;
  SignalPlan plan;
  ObjectiveVector objectives;
  std::size_t front_size = 0;
  QueueState queue;
  std::vector<bool> stale;
  CycleLatency latency;
};

struct CycleOutcome {
  std::optional<CycleOutput> output;
  std::string skip_reason;   // set when no plan was emitted
  bool sources_exhausted = false;
};

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

class Pipeline {
 public:
  // One source per camera; sources[i].camera() must be link i.
  Pipeline(PipelineOptions opts, std::vector<std::unique_ptr<FrameSource>> sources, DetectorFactory make_detector)
      : opts_(std::move(opts)), sources_(std::move(sources)), aggregator_(opts_.intersection.num_links,
                                                                        opts_.stale_policy, opts_.reuse_windows) {
    const std::size_t n = sources_.size();
    if (n != opts_.intersection.num_links)
      throw ValidationError("pipeline has " + std::to_string(n) + " cameras for " +
                            std::to_string(opts_.intersection.num_links) + " links");
    for (std::size_t i = 0; i < n; ++i)
      if (sources_[i]->camera().index != i) throw ValidationError("camera sources must be ordered by link");
    const std::size_t workers = opts_.inference_workers == 0 ? n : std::min(opts_.inference_workers, n);
    for (std::size_t w = 0; w < workers; ++w) {
      bells_.push_back(std::make_shared<Doorbell>());
      detectors_.push_back(make_detector());
    }
    for (std::size_t i = 0; i < n; ++i) slots_.push_back(std::make_unique<FrameSlot<Frame>>(bells_[i % workers]));
    extraction_stats_.resize(n);
    inference_stats_.resize(workers);
    extraction_done_ = std::make_unique<std::atomic<bool>[]>(n);
  }

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;
  ~Pipeline() { stop(); }

  void start() {
    const std::size_t n = sources_.size();
    const std::size_t workers = bells_.size();
    for (std::size_t i = 0; i < n; ++i) {
      extraction_done_[i] = false;
      threads_.emplace_back([this, i](std::stop_token st) {
        run_extraction_worker(*sources_[i], *slots_[i], extraction_stats_[i], st);
        extraction_done_[i] = true;
        results_.wake();
      });
    }
    for (std::size_t w = 0; w < workers; ++w) {
      std::vector<FrameSlot<Frame>*> mine;
      for (std::size_t i = w; i < n; i += workers) mine.push_back(slots_[i].get());
      threads_.emplace_back([this, w, mine](std::stop_token st) {
        run_inference_worker(mine, *bells_[w], *detectors_[w], results_, inference_stats_[w], st);
      });
    }
  }

  void stop() {
    for (auto& t : threads_) t.request_stop();
    results_.wake();
    threads_.clear();  // joins
  }

  // Collects one window of detections, optimizes, and records the latency
  // entry. Skips the cycle when no camera reported in the window.
  CycleOutcome run_cycle() {
    const std::size_t n = sources_.size();
    const auto deadline = SteadyClock::now() + opts_.window;
    std::vector<bool> reported(n, false);
    std::size_t reporting = 0;
    while (reporting < n && SteadyClock::now() < deadline) {
      for (auto& r : results_.drain_until(deadline)) {
        const std::size_t cam = r.record.camera_id.index;
        if (cam < n && !reported[cam]) {
          reported[cam] = true;
          ++reporting;
        }
        window_.push_back(std::move(r));
      }
    }

    CycleOutcome outcome;
    if (window_.empty()) {
      outcome.sources_exhausted = all_sources_finished();
      outcome.skip_reason = outcome.sources_exhausted ? "all sources finished with no detections in window"
                                                      : "aggregation timeout: all cameras stale";
      aggregator_.aggregate({}, mono_now_ms());
      return outcome;
    }

    std::vector<DetectionRecord> records;
    std::vector<double> extraction, inference;
    for (const auto& r : window_) {
      records.push_back(r.record);
      extraction.push_back(r.extraction_ms);
      inference.push_back(r.inference_ms);
    }
    window_.clear();
    auto agg = aggregator_.aggregate(records, mono_now_ms());

    const auto t0 = SteadyClock::now();
    auto front = nsga2::run(agg.state, opts_.intersection, opts_.optimizer);
    const std::size_t pick = nsga2::select_index(front, opts_.selection);
    SignalPlan plan = nsga2::to_plan(front[pick].genome, opts_.intersection, opts_.optimizer.guidance_pad_s);
    const double optimization_ms = elapsed_ms(t0, SteadyClock::now());

    CycleOutput out;
    out.cycle_id = next_cycle_id_++;
    out.plan = std::move(plan);
    out.objectives = front[pick].objectives;
    out.front_size = front.size();
    out.queue = agg.state;
    out.stale = agg.stale;
    out.latency = ledger_.record_cycle(out.cycle_id, std::move(extraction), std::move(inference), optimization_ms);
    outcome.output = std::move(out);
    return outcome;
  }

  const LatencyLedger& ledger() const { return ledger_; }
  std::size_t camera_count() const { return sources_.size(); }

  // Frames currently buffered across all slots.
  std::size_t buffered_frames() const {
    std::size_t k = 0;
    for (const auto& s : slots_) k += s->occupied() ? 1 : 0;
    return k;
  }

  bool all_sources_finished() const {
    for (std::size_t i = 0; i < sources_.size(); ++i)
      if (!extraction_done_[i]) return false;
    return true;
  }

  // Valid after stop().
  const std::vector<ExtractionStats>& extraction_stats() const { return extraction_stats_; }
  const std::vector<InferenceStats>& inference_stats() const { return inference_stats_; }

 private:
  PipelineOptions opts_;
  std::vector<std::unique_ptr<FrameSource>> sources_;
  std::vector<std::shared_ptr<Doorbell>> bells_;
  std::vector<std::unique_ptr<Detector>> detectors_;
  std::vector<std::unique_ptr<FrameSlot<Frame>>> slots_;
  std::vector<ExtractionStats> extraction_stats_;
  std::vector<InferenceStats> inference_stats_;
  std::unique_ptr<std::atomic<bool>[]> extraction_done_;
  ResultQueue results_;
  std::vector<InferenceResult> window_;
  Aggregator aggregator_;
  LatencyLedger ledger_;
  std::uint64_t next_cycle_id_ = 0;
  std::vector<std::jthread> threads_;
};

}  // namespace sigsched::pipeline
