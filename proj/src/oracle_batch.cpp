// SPDX-License-Identifier: Apache-2.0
#include "hems/oracle_batch.hpp"

#include <exception>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hems::batch {
namespace {

// Exceptions must not cross an OpenMP region boundary; keep the first one and
// rethrow after the loop.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t n, Fn&& fn) {
  std::vector<std::optional<Result>> slots(n);
  std::exception_ptr failure;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    try {
      slots[static_cast<std::size_t>(i)].emplace(fn(static_cast<std::size_t>(i)));
    } catch (...) {
#pragma omp critical(hems_batch_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<Result> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace

std::vector<WindowSums> window_sums(std::span<const PriceCurve> curves, int window_size) {
  return parallel_map<WindowSums>(curves.size(), [&](std::size_t i) {
    return calculate_window_sums(curves[i], window_size);
  });
}

std::vector<WindowSums> window_sums_serial(std::span<const PriceCurve> curves, int window_size) {
  std::vector<WindowSums> out;
  out.reserve(curves.size());
  for (const auto& c : curves) out.push_back(calculate_window_sums(c, window_size));
  return out;
}

std::vector<OptimalPlan> optimal_plans(std::span<const PriceCurve> curves,
                                       std::span<const ApplianceSpec> specs,
                                       std::span<const DeadlineConstraint> deadlines) {
  return parallel_map<OptimalPlan>(curves.size(), [&](std::size_t i) {
    return optimal_plan(curves[i], specs, deadlines);
  });
}

std::vector<OptimalPlan> optimal_plans_serial(std::span<const PriceCurve> curves,
                                              std::span<const ApplianceSpec> specs,
                                              std::span<const DeadlineConstraint> deadlines) {
  std::vector<OptimalPlan> out;
  out.reserve(curves.size());
  for (const auto& c : curves) out.push_back(optimal_plan(c, specs, deadlines));
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace hems::batch
