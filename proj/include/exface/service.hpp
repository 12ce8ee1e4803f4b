#pragma once

// Real-time retargeting core, independent of any transport: the sliding
// history window, the depth-1 latest-wins ingest slot, the inference engine
// that turns a window into the current motor command, and the fixed-rate
// publisher that interpolates between inference results.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "exface/denoiser.hpp"
#include "exface/diffusion.hpp"

namespace exface {

using SteadyClock = std::chrono::steady_clock;

/// Last `capacity` frames. Before any frame arrives the window is all neutral
/// (zero); real frames then push the neutral pads out from the front.
class WindowBuffer {
 public:
  WindowBuffer(int capacity, int dim);

  void push(std::span<const float> frame);
  /// Oldest first, exactly `capacity` frames.
  BlendshapeSequence window() const;
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  /// Real frames held (saturates at capacity).
  int filled() const { return filled_; }

 private:
  int capacity_;
  int dim_;
  int filled_ = 0;
  int head_ = 0;  // index of the oldest frame
  std::vector<float> ring_;
};

/// Depth-1 queue: a put while an item is pending replaces it and counts a drop.
template <typename T>
class LatestSlot {
 public:
  /// Returns true when a pending item was replaced.
  bool put(T item) {
    bool replaced = false;
    {
      std::lock_guard lock(mu_);
      replaced = pending_.has_value();
      if (replaced) ++dropped_;
      pending_ = std::move(item);
      ++puts_;
    }
    cv_.notify_one();
    return replaced;
  }

  std::optional<T> take() {
    std::lock_guard lock(mu_);
    return take_locked();
  }

  template <typename Rep, typename Period>
  std::optional<T> wait_take(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return pending_.has_value() || closed_; });
    return take_locked();
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::size_t pending() const {
    std::lock_guard lock(mu_);
    return pending_.has_value() ? 1 : 0;
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }
  std::uint64_t puts() const {
    std::lock_guard lock(mu_);
    return puts_;
  }

 private:
  std::optional<T> take_locked() {
    std::optional<T> out = std::move(pending_);
    pending_.reset();
    return out;
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<T> pending_;
  std::uint64_t dropped_ = 0;
  std::uint64_t puts_ = 0;
  bool closed_ = false;
};

struct TimedFrame {
  std::uint64_t timestamp_us = 0;  // source timestamp
  SteadyClock::time_point received{};
  std::vector<float> values;       // calibrated
};

struct EngineConfig {
  SamplerOptions sampler{false, 4, true};
  std::uint64_t sampler_seed = 0;
};

struct CycleResult {
  MotorFrame command;
  std::uint64_t source_timestamp_us = 0;
  SteadyClock::time_point received{};
  bool fresh = false;   // a new frame entered the window this cycle
  bool failed = false;  // sampler failed; command is the last good one
};

/// Ingest validation and calibration, plus one inference cycle at a time.
/// `ingest` is thread-safe and never blocks on inference; `control_cycle`
/// must be called from a single thread.
class RetargetingEngine {
 public:
  RetargetingEngine(ModelConfig model, ParamSet<float> params, DiffusionSchedule schedule, EngineConfig cfg);

  int dof() const { return model_.config().dof; }
  int blendshape_dim() const { return model_.config().blendshape_dim; }
  int window_size() const { return window_.capacity(); }

  /// Throws InputError on a wrong dimension or non-finite / out-of-range values.
  void set_neutral(std::span<const float> neutral);
  /// Validates, calibrates against the neutral pose (identity if none is
  /// set) and places the frame in the latest-wins slot.
  void ingest(std::uint64_t timestamp_us, std::span<const float> raw,
              SteadyClock::time_point received = SteadyClock::now());

  /// Waits up to `timeout` for a pending frame, then runs one cycle. Without
  /// a new frame the previous command is returned unchanged.
  CycleResult control_cycle(std::chrono::milliseconds timeout = std::chrono::milliseconds(0));

  LatestSlot<TimedFrame>& slot() { return slot_; }
  std::uint64_t errors() const { return errors_; }
  std::uint64_t cycles() const { return cycles_; }
  void close() { slot_.close(); }

 private:
  Denoiser model_;
  DiffusionSchedule schedule_;
  EngineConfig cfg_;
  WindowBuffer window_;
  LatestSlot<TimedFrame> slot_;
  std::mutex neutral_mu_;
  std::vector<float> neutral_;
  std::optional<MotorFrame> last_good_;
  std::uint64_t last_timestamp_us_ = 0;
  std::uint64_t errors_ = 0;
  std::uint64_t cycles_ = 0;
};

struct PublisherConfig {
  double publish_hz = 60.0;
  /// Exponential smoothing weight on the previous output; 0 disables.
  double smooth = 0.0;
  /// Initial guess of the interval between inference results.
  double initial_interval_s = 0.1;
};

struct PublishedCommand {
  MotorFrame command;
  std::uint64_t source_timestamp_us = 0;
};

/// Fixed-rate output stage. Each new inference result starts a linear ramp
/// from the previous result to the new one over the expected inference
/// interval (a running average of observed gaps). Time is passed in.
class CommandPublisher {
 public:
  CommandPublisher(int dof, PublisherConfig cfg);

  void update(const MotorFrame& command, std::uint64_t source_timestamp_us, SteadyClock::time_point now);
  /// Output for the tick at `now`; nullopt until the first update.
  std::optional<PublishedCommand> tick(SteadyClock::time_point now);

  double expected_interval_s() const { return interval_s_; }
  const PublisherConfig& config() const { return cfg_; }

 private:
  int dof_;
  PublisherConfig cfg_;
  std::mutex mu_;
  std::vector<float> from_;
  std::vector<float> to_;
  std::vector<float> output_;
  bool has_command_ = false;
  bool has_output_ = false;
  std::uint64_t source_timestamp_us_ = 0;
  SteadyClock::time_point ramp_start_{};
  std::optional<SteadyClock::time_point> last_update_;
  double interval_s_;
};

/// Rolling service statistics (thread-safe).
class LoopStats {
 public:
  explicit LoopStats(std::size_t window = 2048) : window_(window) {}

  void record_latency_ms(double ms);
  void record_publish(SteadyClock::time_point t);
  void record_cycle(double ms);

  double latency_p50_ms() const;
  double latency_p95_ms() const;
  double cycle_p95_ms() const;
  /// Publish rate over the retained publish timestamps.
  double publish_hz() const;
  std::uint64_t publishes() const;

  nlohmann::json to_json(std::uint64_t dropped, std::uint64_t errors) const;

 private:
  static double percentile(std::deque<double> values, double q);

  std::size_t window_;
  mutable std::mutex mu_;
  std::deque<double> latency_ms_;
  std::deque<double> cycle_ms_;
  std::deque<SteadyClock::time_point> publish_times_;
  std::uint64_t publishes_ = 0;
};

}  // namespace exface
