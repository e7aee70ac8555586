// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "hems/oracle.hpp"

// Batch evaluation of the oracle over many price curves. The default entry
// points split curves across OpenMP threads; the *_serial variants are the
// single-threaded reference kept for tests and the benchmark.
namespace hems::batch {

std::vector<WindowSums> window_sums(std::span<const PriceCurve> curves, int window_size);
std::vector<WindowSums> window_sums_serial(std::span<const PriceCurve> curves, int window_size);

// One deadline list shared by every curve.
std::vector<OptimalPlan> optimal_plans(std::span<const PriceCurve> curves,
                                       std::span<const ApplianceSpec> specs,
                                       std::span<const DeadlineConstraint> deadlines = {});
std::vector<OptimalPlan> optimal_plans_serial(std::span<const PriceCurve> curves,
                                              std::span<const ApplianceSpec> specs,
                                              std::span<const DeadlineConstraint> deadlines = {});

int max_threads();

}  // namespace hems::batch
