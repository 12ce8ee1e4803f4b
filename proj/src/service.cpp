#include "exface/service.hpp"

#include <algorithm>
#include <cmath>

namespace exface {

WindowBuffer::WindowBuffer(int capacity, int dim)
    : capacity_(capacity), dim_(dim), ring_(static_cast<std::size_t>(capacity) * dim, 0.0f) {
  if (capacity <= 0 || dim <= 0) throw ConfigError("window buffer sizes must be positive");
}

void WindowBuffer::push(std::span<const float> frame) {
  if (static_cast<int>(frame.size()) != dim_) throw InputError("window frame has the wrong dimension");
  std::copy(frame.begin(), frame.end(), ring_.begin() + static_cast<std::ptrdiff_t>(head_) * dim_);
  head_ = (head_ + 1) % capacity_;
  filled_ = std::min(filled_ + 1, capacity_);
}

BlendshapeSequence WindowBuffer::window() const {
  BlendshapeSequence out{FrameBlock(capacity_, dim_), 60.0};
  auto flat = out.frames.flat();
  for (int t = 0; t < capacity_; ++t) {
    const int src = (head_ + t) % capacity_;
    std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(src) * dim_, dim_,
                flat.begin() + static_cast<std::ptrdiff_t>(t) * dim_);
  }
  return out;
}

RetargetingEngine::RetargetingEngine(ModelConfig model, ParamSet<float> params, DiffusionSchedule schedule,
                                     EngineConfig cfg)
    : model_(model, std::move(params)),
      schedule_(std::move(schedule)),
      cfg_(cfg),
      window_(model.window, model.blendshape_dim) {}

void RetargetingEngine::set_neutral(std::span<const float> neutral) {
  BlendshapeFrame f{std::vector<float>(neutral.begin(), neutral.end())};
  f.validate(blendshape_dim());
  std::lock_guard lock(neutral_mu_);
  neutral_ = std::move(f.values);
}

void RetargetingEngine::ingest(std::uint64_t timestamp_us, std::span<const float> raw,
                               SteadyClock::time_point received) {
  BlendshapeFrame f{std::vector<float>(raw.begin(), raw.end())};
  f.validate(blendshape_dim());
  {
    std::lock_guard lock(neutral_mu_);
    if (!neutral_.empty()) f = calibrate(f, NeutralPose{BlendshapeFrame{neutral_}});
  }
  slot_.put(TimedFrame{timestamp_us, received, std::move(f.values)});
}

CycleResult RetargetingEngine::control_cycle(std::chrono::milliseconds timeout) {
  std::optional<TimedFrame> frame = timeout.count() > 0 ? slot_.wait_take(timeout) : slot_.take();
  CycleResult result;
  if (!frame) {
    if (last_good_) result.command = *last_good_;
    else result.command = MotorFrame{std::vector<float>(dof(), 0.0f)};
    result.source_timestamp_us = last_timestamp_us_;
    return result;
  }
  ++cycles_;
  window_.push(frame->values);
  result.fresh = true;
  result.source_timestamp_us = frame->timestamp_us;
  result.received = frame->received;
  last_timestamp_us_ = frame->timestamp_us;
  try {
    // A fixed seed per cycle makes the command a pure function of the window.
    Rng rng(cfg_.sampler_seed);
    const MotorSequence seq = sample(model_, window_.window(), schedule_, rng, cfg_.sampler);
    auto last = seq.frames.frame(seq.length() - 1);
    result.command = MotorFrame{std::vector<float>(last.begin(), last.end())};
    last_good_ = result.command;
  } catch (const std::exception&) {
    ++errors_;
    result.failed = true;
    result.command = last_good_ ? *last_good_ : MotorFrame{std::vector<float>(dof(), 0.0f)};
  }
  return result;
}

CommandPublisher::CommandPublisher(int dof, PublisherConfig cfg)
    : dof_(dof),
      cfg_(cfg),
      from_(dof, 0.0f),
      to_(dof, 0.0f),
      output_(dof, 0.0f),
      interval_s_(cfg.initial_interval_s) {
  if (dof <= 0) throw ConfigError("publisher dof must be positive");
  if (!(cfg.publish_hz > 0.0)) throw ConfigError("publish rate must be positive");
  if (cfg.smooth < 0.0 || cfg.smooth >= 1.0) throw ConfigError("smoothing weight must be in [0, 1)");
  if (!(cfg.initial_interval_s > 0.0)) throw ConfigError("initial interval must be positive");
}

void CommandPublisher::update(const MotorFrame& command, std::uint64_t source_timestamp_us,
                              SteadyClock::time_point now) {
  if (command.dof() != dof_) throw InputError("publisher received a command with the wrong dof");
  std::lock_guard lock(mu_);
  if (last_update_) {
    const double gap = std::chrono::duration<double>(now - *last_update_).count();
    if (gap > 0.0) interval_s_ = 0.8 * interval_s_ + 0.2 * gap;
  }
  last_update_ = now;
  from_ = has_command_ ? to_ : command.values;
  to_ = command.values;
  has_command_ = true;
  ramp_start_ = now;
  source_timestamp_us_ = source_timestamp_us;
}

std::optional<PublishedCommand> CommandPublisher::tick(SteadyClock::time_point now) {
  std::lock_guard lock(mu_);
  if (!has_command_) return std::nullopt;
  const double elapsed = std::chrono::duration<double>(now - ramp_start_).count();
  const double u = std::clamp(elapsed / interval_s_, 0.0, 1.0);
  for (int i = 0; i < dof_; ++i) {
    double v = from_[i] + u * (static_cast<double>(to_[i]) - from_[i]);
    v = std::clamp(v, 0.0, 1.0);
    if (cfg_.smooth > 0.0 && has_output_) v = cfg_.smooth * output_[i] + (1.0 - cfg_.smooth) * v;
    output_[i] = static_cast<float>(v);
  }
  has_output_ = true;
  return PublishedCommand{MotorFrame{output_}, source_timestamp_us_};
}

namespace {

template <typename T>
void bounded_push(std::deque<T>& q, T v, std::size_t cap) {
  q.push_back(v);
  while (q.size() > cap) q.pop_front();
}

}  // namespace

void LoopStats::record_latency_ms(double ms) {
  std::lock_guard lock(mu_);
  bounded_push(latency_ms_, ms, window_);
}

void LoopStats::record_cycle(double ms) {
  std::lock_guard lock(mu_);
  bounded_push(cycle_ms_, ms, window_);
}

void LoopStats::record_publish(SteadyClock::time_point t) {
  std::lock_guard lock(mu_);
  bounded_push(publish_times_, t, window_);
  ++publishes_;
}

double LoopStats::percentile(std::deque<double> values, double q) {
  if (values.empty()) return 0.0;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double LoopStats::latency_p50_ms() const {
  std::lock_guard lock(mu_);
  return percentile(latency_ms_, 0.50);
}

double LoopStats::latency_p95_ms() const {
  std::lock_guard lock(mu_);
  return percentile(latency_ms_, 0.95);
}

double LoopStats::cycle_p95_ms() const {
  std::lock_guard lock(mu_);
  return percentile(cycle_ms_, 0.95);
}

double LoopStats::publish_hz() const {
  std::lock_guard lock(mu_);
  if (publish_times_.size() < 2) return 0.0;
  const double span = std::chrono::duration<double>(publish_times_.back() - publish_times_.front()).count();
  return span > 0.0 ? static_cast<double>(publish_times_.size() - 1) / span : 0.0;
}

std::uint64_t LoopStats::publishes() const {
  std::lock_guard lock(mu_);
  return publishes_;
}

nlohmann::json LoopStats::to_json(std::uint64_t dropped, std::uint64_t errors) const {
  return {{"latency_p50_ms", latency_p50_ms()},
          {"latency_p95_ms", latency_p95_ms()},
          {"cycle_p95_ms", cycle_p95_ms()},
          {"publish_hz", publish_hz()},
          {"publishes", publishes()},
          {"frames_dropped", dropped},
          {"errors", errors}};
}

}  // namespace exface
