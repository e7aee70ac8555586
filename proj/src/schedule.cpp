// SPDX-License-Identifier: Apache-2.0
#include "hems/schedule.hpp"

#include <cmath>
#include <cstdio>

#include <fmt/format.h>

#include "hems/error.hpp"
#include "hems/text.hpp"

namespace hems {

std::string to_iso(Date date) {
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(date.year()),
                     static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
}

std::optional<Date> parse_iso_date(std::string_view text) {
  text = text::trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  const auto y = text::parse_int(text.substr(0, 4));
  const auto m = text::parse_int(text.substr(5, 2));
  const auto d = text::parse_int(text.substr(8, 2));
  if (!y || !m || !d || *y < 0 || *m < 0 || *d < 0) return std::nullopt;
  const Date date{std::chrono::year{static_cast<int>(*y)}, std::chrono::month{static_cast<unsigned>(*m)},
                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

SlotIndex::SlotIndex(int value) : value_(value) {
  if (value < 0 || value >= kSlotsPerDay) {
    throw Error(ErrorCode::kRange, fmt::format("slot {} outside 0..95", value));
  }
}

std::string slot_to_time(int slot) {
  const SlotIndex checked(slot);
  return fmt::format("{:02d}:{:02d}", checked.value() / 4, kMinutesPerSlot * (checked.value() % 4));
}

SlotIndex parse_slot_time(std::string_view hhmm) {
  hhmm = text::trim(hhmm);
  const auto colon = hhmm.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kParse, fmt::format("'{}' is not HH:MM", hhmm));
  }
  const auto h = text::parse_int(hhmm.substr(0, colon));
  const auto m = text::parse_int(hhmm.substr(colon + 1));
  if (!h || !m || hhmm.size() - colon - 1 != 2 || *h < 0 || *h > 23 || *m < 0 || *m > 59 ||
      *m % kMinutesPerSlot != 0) {
    throw Error(ErrorCode::kParse, fmt::format("'{}' is not a slot-aligned HH:MM", hhmm));
  }
  return SlotIndex(static_cast<int>(*h * 4 + *m / kMinutesPerSlot));
}

std::string_view to_string(PriceSource source) {
  return source == PriceSource::kLiveApi ? "live_api" : "fixture";
}

PriceCurve::PriceCurve(std::vector<double> prices, Date market_date, PriceSource source)
    : prices_(std::move(prices)), market_date_(market_date), source_(source) {
  if (prices_.size() != kSlotsPerDay) {
    throw Error(ErrorCode::kData,
                fmt::format("price curve needs {} points, got {}", kSlotsPerDay, prices_.size()));
  }
  for (std::size_t i = 0; i < prices_.size(); ++i) {
    if (!std::isfinite(prices_[i])) {
      throw Error(ErrorCode::kData, fmt::format("price at slot {} is not finite", i));
    }
  }
  if (!market_date_.ok()) throw Error(ErrorCode::kData, "invalid market date");
}

std::string_view to_string(ApplianceId id) {
  switch (id) {
    case ApplianceId::kWashingMachine:
      return "washing_machine";
    case ApplianceId::kDishwasher:
      return "dishwasher";
    case ApplianceId::kEvCharger:
      return "ev_charger";
  }
  return "unknown";
}

std::optional<ApplianceId> parse_appliance_id(std::string_view text) {
  const auto t = text::to_lower(text::trim(text));
  for (const auto id : kAllAppliances) {
    if (t == to_string(id)) return id;
  }
  return std::nullopt;
}

void ApplianceSpec::validate() const {
  if (duration_slots <= 0 || max_start_slot < 0 || max_start_slot + duration_slots > kSlotsPerDay ||
      !(power_kw > 0.0)) {
    throw Error(ErrorCode::kContract,
                fmt::format("invalid spec for {}: duration {}, max start {}", to_string(id),
                            duration_slots, max_start_slot));
  }
}

const ApplianceSpec& canonical_spec(ApplianceId id) {
  static const ApplianceSpec kWm{ApplianceId::kWashingMachine, 2.0, 8, 88};
  static const ApplianceSpec kDw{ApplianceId::kDishwasher, 1.8, 6, 90};
  static const ApplianceSpec kEv{ApplianceId::kEvCharger, 7.4, 24, 4};
  switch (id) {
    case ApplianceId::kWashingMachine:
      return kWm;
    case ApplianceId::kDishwasher:
      return kDw;
    case ApplianceId::kEvCharger:
      return kEv;
  }
  return kWm;
}

std::string_view to_string(DeadlineOrigin origin) {
  switch (origin) {
    case DeadlineOrigin::kDefault:
      return "default";
    case DeadlineOrigin::kCalendar:
      return "calendar";
    case DeadlineOrigin::kUser:
      return "user";
  }
  return "default";
}

double estimated_cost_eur(double price_sum_eur_mwh, double power_kw) {
  return price_sum_eur_mwh * power_kw * kHoursPerSlot / 1000.0;
}

BinarySchedule schedule_from_start(const ApplianceSpec& spec, SlotIndex start,
                                   const PriceCurve& prices, std::string reasoning) {
  spec.validate();
  if (start.value() > spec.max_start_slot) {
    throw Error(ErrorCode::kInfeasibleStart,
                fmt::format("{} cannot start at slot {}: latest start is slot {}", to_string(spec.id),
                            start.value(), spec.max_start_slot));
  }
  BinarySchedule s;
  s.appliance_id = spec.id;
  s.market_date = prices.market_date();
  s.start_slot = start;
  s.duration_slots = spec.duration_slots;
  for (int k = start.value(); k < start.value() + spec.duration_slots; ++k) {
    s.states[static_cast<std::size_t>(k)] = 1;
    s.price_sum += prices[k];
  }
  s.estimated_cost_eur = estimated_cost_eur(s.price_sum, spec.power_kw);
  s.reasoning = std::move(reasoning);
  return s;
}

bool validate_schedule(const BinarySchedule& schedule, const DeadlineConstraint& deadline) {
  if (schedule.appliance_id != deadline.appliance_id) {
    throw Error(ErrorCode::kContract,
                fmt::format("deadline for {} applied to a {} schedule", to_string(deadline.appliance_id),
                            to_string(schedule.appliance_id)));
  }
  return schedule.end_slot() <= deadline.finish_by_slot;
}

nlohmann::json to_json(const BinarySchedule& s) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto v : s.states) states.push_back(static_cast<int>(v));
  return {
      {"appliance_id", to_string(s.appliance_id)},
      {"market_date", to_iso(s.market_date)},
      {"start_slot", s.start_slot.value()},
      {"duration_slots", s.duration_slots},
      {"states", std::move(states)},
      {"price_sum_eur_mwh", s.price_sum},
      {"estimated_cost_eur", s.estimated_cost_eur},
      {"reasoning", s.reasoning},
  };
}

BinarySchedule schedule_from_json(const nlohmann::json& j) {
  try {
    const auto id = parse_appliance_id(j.at("appliance_id").get<std::string>());
    const auto date = parse_iso_date(j.at("market_date").get<std::string>());
    if (!id || !date) throw Error(ErrorCode::kParse, "schedule JSON has bad appliance_id or market_date");
    BinarySchedule s;
    s.appliance_id = *id;
    s.market_date = *date;
    s.start_slot = SlotIndex(j.at("start_slot").get<int>());
    s.duration_slots = j.at("duration_slots").get<int>();
    const auto& states = j.at("states");
    if (!states.is_array() || states.size() != kSlotsPerDay) {
      throw Error(ErrorCode::kParse, "schedule JSON states must hold 96 entries");
    }
    for (std::size_t k = 0; k < states.size(); ++k) {
      s.states[k] = static_cast<std::uint8_t>(states[k].get<int>() != 0);
    }
    s.price_sum = j.at("price_sum_eur_mwh").get<double>();
    s.estimated_cost_eur = j.at("estimated_cost_eur").get<double>();
    s.reasoning = j.value("reasoning", "");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("schedule JSON: ") + e.what());
  }
}

nlohmann::json to_json(const PriceCurve& curve) {
  return {
      {"market_date", to_iso(curve.market_date())},
      {"unit", "EUR_MWH"},
      {"source", to_string(curve.source())},
      {"prices", std::vector<double>(curve.prices().begin(), curve.prices().end())},
  };
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRange:
      return "range";
    case ErrorCode::kInfeasibleStart:
      return "infeasible_start";
    case ErrorCode::kInfeasible:
      return "infeasible";
    case ErrorCode::kContract:
      return "contract";
    case ErrorCode::kParameter:
      return "parameter";
    case ErrorCode::kConfig:
      return "config";
    case ErrorCode::kParse:
      return "parse";
    case ErrorCode::kData:
      return "data";
    case ErrorCode::kIo:
      return "io";
    case ErrorCode::kNotFound:
      return "not_found";
    case ErrorCode::kDuplicateSchedule:
      return "duplicate_schedule";
    case ErrorCode::kSpecialistFailure:
      return "specialist_failure";
    case ErrorCode::kBackendUnavailable:
      return "backend_unavailable";
    case ErrorCode::kRateLimited:
      return "rate_limited";
  }
  return "unknown";
}

}  // namespace hems
