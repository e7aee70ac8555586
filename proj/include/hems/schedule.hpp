// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hems {

inline constexpr int kSlotsPerDay = 96;
inline constexpr int kMinutesPerSlot = 15;
inline constexpr double kHoursPerSlot = 0.25;

using Date = std::chrono::year_month_day;

std::string to_iso(Date date);
std::optional<Date> parse_iso_date(std::string_view text);

// One 15-minute interval of the day, 0 = 00:00 .. 95 = 23:45.
class SlotIndex {
 public:
  explicit SlotIndex(int value);

  int value() const noexcept { return value_; }
  auto operator<=>(const SlotIndex&) const = default;

 private:
  int value_;
};

// "HH:MM" of the slot start. Throws kRange outside [0, 95].
std::string slot_to_time(int slot);
inline std::string slot_to_time(SlotIndex slot) { return slot_to_time(slot.value()); }

// Inverse of slot_to_time; minutes must be a multiple of 15.
SlotIndex parse_slot_time(std::string_view hhmm);

enum class PriceSource { kLiveApi, kFixture };

std::string_view to_string(PriceSource source);

// 96 day-ahead prices in EUR/MWh. Negative values are legal.
class PriceCurve {
 public:
  PriceCurve(std::vector<double> prices, Date market_date, PriceSource source);

  std::span<const double> prices() const noexcept { return prices_; }
  double operator[](int slot) const { return prices_.at(static_cast<std::size_t>(slot)); }
  Date market_date() const noexcept { return market_date_; }
  PriceSource source() const noexcept { return source_; }

  bool operator==(const PriceCurve&) const = default;

 private:
  std::vector<double> prices_;
  Date market_date_;
  PriceSource source_;
};

enum class ApplianceId { kWashingMachine, kDishwasher, kEvCharger };

inline constexpr std::array<ApplianceId, 3> kAllAppliances = {
    ApplianceId::kWashingMachine, ApplianceId::kDishwasher, ApplianceId::kEvCharger};

std::string_view to_string(ApplianceId id);
std::optional<ApplianceId> parse_appliance_id(std::string_view text);

struct ApplianceSpec {
  ApplianceId id;
  double power_kw;
  int duration_slots;
  int max_start_slot;

  // Throws kContract unless 0 <= max_start_slot and
  // max_start_slot + duration_slots <= 96.
  void validate() const;
};

// WM 2.0 kW / 8 slots / max 88, DW 1.8 kW / 6 / 90, EV 7.4 kW / 24 / 4.
const ApplianceSpec& canonical_spec(ApplianceId id);

enum class DeadlineOrigin { kDefault, kCalendar, kUser };

std::string_view to_string(DeadlineOrigin origin);

// finish_by_slot is the first slot the appliance may not occupy, so it lies
// in [0, 96] and a run satisfies it iff start + duration <= finish_by_slot.
struct DeadlineConstraint {
  ApplianceId appliance_id;
  int finish_by_slot;
  DeadlineOrigin origin = DeadlineOrigin::kDefault;

  bool operator==(const DeadlineConstraint&) const = default;
};

struct BinarySchedule {
  ApplianceId appliance_id = ApplianceId::kWashingMachine;
  Date market_date;
  std::array<std::uint8_t, kSlotsPerDay> states{};
  SlotIndex start_slot{0};
  int duration_slots = 0;
  double price_sum = 0.0;  // EUR/MWh
  double estimated_cost_eur = 0.0;
  std::string reasoning;

  int end_slot() const noexcept { return start_slot.value() + duration_slots; }
};

// price_sum [EUR/MWh] * kW * 0.25 h / 1000.
double estimated_cost_eur(double price_sum_eur_mwh, double power_kw);

BinarySchedule schedule_from_start(const ApplianceSpec& spec, SlotIndex start,
                                   const PriceCurve& prices, std::string reasoning);

// Throws kContract when the schedule and deadline name different appliances.
bool validate_schedule(const BinarySchedule& schedule, const DeadlineConstraint& deadline);

nlohmann::json to_json(const BinarySchedule& schedule);
BinarySchedule schedule_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PriceCurve& curve);

}  // namespace hems
