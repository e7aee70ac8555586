// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations and generators used by the tests.
// Nothing here calls into the optimiser under test.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hems/agents.hpp"
#include "hems/schedule.hpp"

#ifndef HEMS_SOURCE_DIR
#define HEMS_SOURCE_DIR "."
#endif

namespace hems::testing {

inline std::filesystem::path source_path(const std::string& rel) { return std::filesystem::path(HEMS_SOURCE_DIR) / rel; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Date fixture_date() { return Date{std::chrono::year{2025}, std::chrono::month{10}, std::chrono::day{15}}; }

// O(n*w) window sums by direct addition.
inline std::vector<double> brute_window_sums(const std::vector<double>& p, int w) {
  std::vector<double> out;
  for (int i = 0; i + w <= static_cast<int>(p.size()); ++i) {
    double s = 0.0;
    for (int k = 0; k < w; ++k) s += p[static_cast<std::size_t>(i + k)];
    out.push_back(s);
  }
  return out;
}

struct BruteChoice {
  int start = -1;  // -1: nothing feasible
  double sum = 0.0;
};

// Scans every start slot of the day; a start is allowed when it respects the
// appliance's max start, stays inside the day and finishes by every deadline
// naming the appliance. Strictly lower sums (beyond 1e-9) replace the best,
// so the earliest start wins ties.
inline BruteChoice brute_optimal_start(const std::vector<double>& p, const ApplianceSpec& spec,
                                       const std::vector<DeadlineConstraint>& deadlines) {
  BruteChoice best;
  for (int s = 0; s < kSlotsPerDay; ++s) {
    if (s > spec.max_start_slot || s + spec.duration_slots > kSlotsPerDay) continue;
    bool ok = true;
    for (const auto& d : deadlines) {
      if (d.appliance_id == spec.id && s + spec.duration_slots > d.finish_by_slot) ok = false;
    }
    if (!ok) continue;
    double sum = 0.0;
    for (int k = 0; k < spec.duration_slots; ++k) sum += p[static_cast<std::size_t>(s + k)];
    if (best.start < 0 || sum < best.sum - 1e-9) best = {s, sum};
  }
  return best;
}

// Mix of shapes: white noise, daily double hump, plateaus full of ties, and
// solar dips below zero. decimals >= 0 rounds every price.
inline std::vector<double> random_prices(std::mt19937_64& rng, int decimals = -1) {
  std::uniform_int_distribution<int> shape(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(kSlotsPerDay);
  const int kind = shape(rng);
  const double base = -20.0 + 120.0 * u(rng);
  for (int i = 0; i < kSlotsPerDay; ++i) {
    const double t = i / 96.0;
    switch (kind) {
      case 0: p[static_cast<std::size_t>(i)] = -150.0 + 500.0 * u(rng); break;
      case 1:
        p[static_cast<std::size_t>(i)] = base + 80.0 * std::exp(-std::pow((t - 0.32) / 0.06, 2)) +
                                         100.0 * std::exp(-std::pow((t - 0.8) / 0.08, 2)) + 15.0 * (u(rng) - 0.5);
        break;
      case 2: p[static_cast<std::size_t>(i)] = base + 10.0 * std::floor(4.0 * u(rng)); break;
      default:
        p[static_cast<std::size_t>(i)] = base - 160.0 * std::exp(-std::pow((t - 0.55) / 0.1, 2)) + 20.0 * u(rng);
        break;
    }
  }
  if (decimals >= 0) {
    const double f = std::pow(10.0, decimals);
    for (auto& v : p) v = std::round(v * f) / f;
  }
  return p;
}

inline PriceCurve random_curve(std::mt19937_64& rng, int decimals = -1, Date date = fixture_date()) {
  return PriceCurve(random_prices(rng, decimals), date, PriceSource::kFixture);
}

// A handful of events around the market day, some starting before midnight
// and some on the next day, at arbitrary minutes.
inline std::vector<CalendarEvent> random_events(std::mt19937_64& rng, Date day) {
  std::uniform_int_distribution<int> count(0, 3);
  std::uniform_int_distribution<int> start_min(-6 * 60, 30 * 60);
  std::uniform_int_distribution<int> len(10, 10 * 60);
  const auto midnight = LocalMinutes{std::chrono::local_days{day}.time_since_epoch()};
  std::vector<CalendarEvent> out;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const auto s = midnight + std::chrono::minutes{start_min(rng)};
    out.push_back({"event " + std::to_string(i), s, s + std::chrono::minutes{len(rng)}});
  }
  return out;
}

// Deadline the EV must meet on `day`, recomputed from the events: the first
// event starting that day, its quarter-hour slot less two, capped at 07:00.
// nullopt when the EV cannot fit at all.
inline std::optional<int> reference_ev_finish(const std::vector<CalendarEvent>& events, Date day) {
  const auto midnight = LocalMinutes{std::chrono::local_days{day}.time_since_epoch()};
  std::optional<LocalMinutes> first;
  for (const auto& e : events) {
    if (e.start >= midnight && e.start < midnight + std::chrono::days{1} && (!first || e.start < *first)) first = e.start;
  }
  int finish = 28;
  if (first) finish = std::min(finish, static_cast<int>((*first - midnight).count() / 15) - 2);
  if (finish < 24) return std::nullopt;
  return finish;
}

// Structural checks on a committed schedule: binary states, exactly one
// contiguous block of the right length starting at start_slot, inside the day
// and the appliance's start limit, and finished by finish_by.
inline std::string schedule_violation(const BinarySchedule& s, int finish_by) {
  const auto& spec = canonical_spec(s.appliance_id);
  int ones = 0;
  int first = -1;
  int last = -1;
  for (int i = 0; i < kSlotsPerDay; ++i) {
    const int v = s.states[static_cast<std::size_t>(i)];
    if (v != 0 && v != 1) return "non-binary state";
    if (v == 1) {
      ++ones;
      if (first < 0) first = i;
      last = i;
    }
  }
  if (ones != spec.duration_slots) return "wrong number of active slots";
  if (last - first + 1 != ones) return "active slots not contiguous";
  if (first != s.start_slot.value()) return "start_slot does not match states";
  if (first > spec.max_start_slot) return "start after max_start_slot";
  if (last + 1 > finish_by) return "finishes after deadline";
  return {};
}

}  // namespace hems::testing
