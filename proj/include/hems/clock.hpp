// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <string>

namespace hems {

using TimePoint = std::chrono::sys_time<std::chrono::milliseconds>;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimePoint now() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimePoint now() const override {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  }
};

// Settable clock for tests. Each now() can optionally advance by a fixed step
// so wall-time metrics come out non-zero but deterministic.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimePoint start, std::chrono::milliseconds step = std::chrono::milliseconds{0})
      : now_ms_(start.time_since_epoch().count()), step_ms_(step.count()) {}

  TimePoint now() const override {
    return TimePoint{std::chrono::milliseconds{now_ms_.fetch_add(step_ms_)}};
  }
  void set(TimePoint t) { now_ms_.store(t.time_since_epoch().count()); }
  void advance(std::chrono::milliseconds d) { now_ms_.fetch_add(d.count()); }

 private:
  mutable std::atomic<long long> now_ms_;
  long long step_ms_;
};

std::string format_iso_utc(TimePoint t);

}  // namespace hems
