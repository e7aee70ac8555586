// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hems/schedule.hpp"

namespace hems {

// Window sums closer than this are treated as equal, so the earliest index
// wins even when prefix-sum rounding splits a mathematical tie.
inline constexpr double kSumTolerance = 1e-9;

struct WindowSums {
  int window_size = 0;
  std::vector<double> sums;  // sums[i] = prices[i] + ... + prices[i + w - 1]
  int min_window_index = 0;
  double min_sum = 0.0;
  int max_window_index = 0;
  double max_sum = 0.0;
};

// Throws kParameter unless 1 <= window_size <= prices.size().
WindowSums calculate_window_sums(std::span<const double> prices, int window_size);
WindowSums calculate_window_sums(const PriceCurve& prices, int window_size);

struct StartChoice {
  SlotIndex start;
  double sum;
};

// Latest start allowed by the appliance and every deadline naming this appliance.
// Negative when no start is feasible.
int latest_feasible_start(const ApplianceSpec& spec, std::span<const DeadlineConstraint> deadlines);

// Cheapest feasible start by exhaustive search; earliest slot on ties.
// Deadlines for other appliances are ignored; several deadlines for the same
// appliance combine by minimum. Throws kInfeasible naming the binding limit.
StartChoice optimal_start(const PriceCurve& prices, const ApplianceSpec& spec,
                          std::span<const DeadlineConstraint> deadlines = {});
StartChoice optimal_start(const PriceCurve& prices, const ApplianceSpec& spec,
                          const std::optional<DeadlineConstraint>& deadline);

StartChoice most_expensive_window(const PriceCurve& prices, int window_size = 12);

struct PlannedStart {
  ApplianceId appliance_id;
  SlotIndex start;
  double price_sum;
  double estimated_cost_eur;
};

struct OptimalPlan {
  std::vector<PlannedStart> entries;
  double total_price_sum = 0.0;

  const PlannedStart* find(ApplianceId id) const;
};

// The appliances run independently, so the joint optimum is the per-appliance
// optima side by side.
OptimalPlan optimal_plan(const PriceCurve& prices, std::span<const ApplianceSpec> specs,
                         std::span<const DeadlineConstraint> deadlines = {});

std::vector<ApplianceSpec> canonical_specs();

}  // namespace hems
