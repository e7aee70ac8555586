// SPDX-License-Identifier: Apache-2.0
#include "hems/oracle.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "hems/error.hpp"

namespace hems {

WindowSums calculate_window_sums(std::span<const double> prices, int window_size) {
  const int n = static_cast<int>(prices.size());
  if (window_size < 1 || window_size > n) {
    throw Error(ErrorCode::kParameter, fmt::format("window_size must be 1..{}", n));
  }
  std::vector<double> prefix(prices.size() + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + prices[i];

  WindowSums out;
  out.window_size = window_size;
  out.sums.resize(static_cast<std::size_t>(n - window_size + 1));
  for (int i = 0; i + window_size <= n; ++i) {
    out.sums[i] = prefix[i + window_size] - prefix[i];
  }
  out.min_sum = out.max_sum = out.sums.front();
  for (int i = 1; i < static_cast<int>(out.sums.size()); ++i) {
    if (out.sums[i] < out.min_sum - kSumTolerance) {
      out.min_sum = out.sums[i];
      out.min_window_index = i;
    }
    if (out.sums[i] > out.max_sum + kSumTolerance) {
      out.max_sum = out.sums[i];
      out.max_window_index = i;
    }
  }
  return out;
}

WindowSums calculate_window_sums(const PriceCurve& prices, int window_size) {
  return calculate_window_sums(prices.prices(), window_size);
}

int latest_feasible_start(const ApplianceSpec& spec, std::span<const DeadlineConstraint> deadlines) {
  int latest = std::min(spec.max_start_slot, kSlotsPerDay - spec.duration_slots);
  for (const auto& d : deadlines) {
    if (d.appliance_id == spec.id) latest = std::min(latest, d.finish_by_slot - spec.duration_slots);
  }
  return latest;
}

StartChoice optimal_start(const PriceCurve& prices, const ApplianceSpec& spec,
                          std::span<const DeadlineConstraint> deadlines) {
  spec.validate();
  const int latest = latest_feasible_start(spec, deadlines);
  if (latest < 0) {
    const DeadlineConstraint* binding = nullptr;
    for (const auto& d : deadlines) {
      if (d.appliance_id == spec.id && (!binding || d.finish_by_slot < binding->finish_by_slot)) {
        binding = &d;
      }
    }
    throw Error(ErrorCode::kInfeasible,
                fmt::format("{} needs {} slots but the {} deadline ends at slot {}", to_string(spec.id),
                            spec.duration_slots, binding ? to_string(binding->origin) : "default",
                            binding ? binding->finish_by_slot : spec.max_start_slot + spec.duration_slots));
  }
  const auto ws = calculate_window_sums(prices, spec.duration_slots);
  int best = 0;
  for (int t = 1; t <= latest; ++t) {
    if (ws.sums[t] < ws.sums[best] - kSumTolerance) best = t;
  }
  return {SlotIndex(best), ws.sums[best]};
}

StartChoice optimal_start(const PriceCurve& prices, const ApplianceSpec& spec,
                          const std::optional<DeadlineConstraint>& deadline) {
  if (!deadline) return optimal_start(prices, spec);
  return optimal_start(prices, spec, std::span<const DeadlineConstraint>(&*deadline, 1));
}

StartChoice most_expensive_window(const PriceCurve& prices, int window_size) {
  const auto ws = calculate_window_sums(prices, window_size);
  return {SlotIndex(ws.max_window_index), ws.max_sum};
}

const PlannedStart* OptimalPlan::find(ApplianceId id) const {
  const auto it = std::find_if(entries.begin(), entries.end(),
                               [id](const PlannedStart& e) { return e.appliance_id == id; });
  return it == entries.end() ? nullptr : &*it;
}

OptimalPlan optimal_plan(const PriceCurve& prices, std::span<const ApplianceSpec> specs,
                         std::span<const DeadlineConstraint> deadlines) {
  OptimalPlan plan;
  plan.entries.reserve(specs.size());
  for (const auto& spec : specs) {
    const auto choice = optimal_start(prices, spec, deadlines);
    plan.entries.push_back({spec.id, choice.start, choice.sum, estimated_cost_eur(choice.sum, spec.power_kw)});
    plan.total_price_sum += choice.sum;
  }
  return plan;
}

std::vector<ApplianceSpec> canonical_specs() {
  std::vector<ApplianceSpec> out;
  for (const auto id : kAllAppliances) out.push_back(canonical_spec(id));
  return out;
}

}  // namespace hems
