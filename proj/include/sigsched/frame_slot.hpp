#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>

namespace sigsched {

// Wakes a consumer that watches several slots.
class Doorbell {
 public:
  void ring() {
    {
      std::lock_guard lk(mu_);
      ++ticks_;
    }
    cv_.notify_all();
  }

  // Blocks until the tick count moves past `seen` or the timeout expires.
  // Returns the current tick count.
  template <typename Rep, typename Period>
  std::uint64_t wait_past(std::uint64_t seen, std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return ticks_ != seen; });
    return ticks_;
  }

  std::uint64_t ticks() const {
    std::lock_guard lk(mu_);
    return ticks_;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::uint64_t ticks_ = 0;
};

// Single-slot, latest-only buffer. A put replaces whatever is stored; a take
// hands out the newest frame once. Holds at most one value at any time.
template <typename T>
class FrameSlot {
 public:
  struct Taken {
    T value;
    std::uint64_t puts_at_take;  // total puts when the value was taken
  };

  FrameSlot() = default;
  explicit FrameSlot(std::shared_ptr<Doorbell> bell) : bell_(std::move(bell)) {}

  FrameSlot(const FrameSlot&) = delete;
  FrameSlot& operator=(const FrameSlot&) = delete;

  // Returns true when an unconsumed frame was discarded.
  bool put(T value) {
    bool dropped = false;
    {
      std::lock_guard lk(mu_);
      dropped = latest_.has_value();
      latest_.emplace(std::move(value));
      ++puts_;
      if (dropped) ++drops_;
    }
    cv_.notify_one();
    if (bell_) bell_->ring();
    return dropped;
  }

  std::optional<T> take() {
    auto t = take_stamped();
    if (!t) return std::nullopt;
    return std::move(t->value);
  }

  std::optional<Taken> take_stamped() {
    std::lock_guard lk(mu_);
    return take_locked();
  }

  // Waits up to `timeout` for a frame.
  template <typename Rep, typename Period>
  std::optional<Taken> take_wait(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return latest_.has_value(); });
    return take_locked();
  }

  bool occupied() const {
    std::lock_guard lk(mu_);
    return latest_.has_value();
  }
  std::uint64_t puts() const {
    std::lock_guard lk(mu_);
    return puts_;
  }
  std::uint64_t drops() const {
    std::lock_guard lk(mu_);
    return drops_;
  }

 private:
  std::optional<Taken> take_locked() {
    if (!latest_) return std::nullopt;
    Taken t{std::move(*latest_), puts_};
    latest_.reset();
    return t;
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<T> latest_;
  std::uint64_t puts_ = 0;
  std::uint64_t drops_ = 0;
  std::shared_ptr<Doorbell> bell_;
};

}  // namespace sigsched
