// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hems/schedule.hpp"

namespace hems {

// ---- prices ---------------------------------------------------------------

class PriceProvider {
 public:
  virtual ~PriceProvider() = default;
  // Throws kNotFound when the provider has nothing for (date, zone).
  virtual PriceCurve fetch_prices(Date date, std::string_view zone) = 0;
  virtual std::string name() const = 0;
};

struct PriceFixture {
  Date market_date;
  std::string zone;
  std::vector<double> prices;  // EUR/MWh
};

// {"market_date","zone","unit","prices":[96]}. unit is EUR_MWH (default) or
// EUR_KWH, which is scaled by 1000 on the way in. Throws kParse or kData.
PriceFixture parse_price_fixture(const nlohmann::json& j);
PriceFixture load_price_fixture(const std::filesystem::path& path);
nlohmann::json to_json(const PriceFixture& fixture);

// Serves fixture files. Accepts one file or a directory of *.json fixtures.
class FixturePriceProvider final : public PriceProvider {
 public:
  FixturePriceProvider() = default;
  explicit FixturePriceProvider(const std::filesystem::path& file_or_dir);
  void add(PriceFixture fixture);
  PriceCurve fetch_prices(Date date, std::string_view zone) override;
  std::string name() const override { return "fixture"; }
  std::vector<std::pair<std::string, Date>> available() const;

 private:
  std::map<std::pair<std::string, std::string>, PriceFixture> by_key_;  // (zone, iso date)
};

// Single curve held in memory; counts fetches so tests can see caching.
class InMemoryPriceProvider final : public PriceProvider {
 public:
  explicit InMemoryPriceProvider(PriceCurve curve) : curve_(std::move(curve)) {}
  PriceCurve fetch_prices(Date date, std::string_view zone) override;
  std::string name() const override { return "memory"; }
  int fetch_count() const noexcept { return fetches_.load(); }

 private:
  PriceCurve curve_;
  std::atomic<int> fetches_{0};
};

// ENTSO-E bidding-zone code for a country code ("AT" -> "10YAT-APG------L").
// Codes that already look like EIC codes pass through.
std::string entsoe_area_code(std::string_view zone);

// Central European market day in UTC: local midnight to midnight, with the
// summer-time switch on the last Sundays of March and October.
struct UtcInterval {
  std::chrono::sys_seconds start;
  std::chrono::sys_seconds end;
};
UtcInterval market_day_utc(Date date);
// "yyyyMMddHHmm" as used by the transparency API's periodStart/periodEnd.
std::string entsoe_timestamp(std::chrono::sys_seconds t);

// Parses a Publication_MarketDocument (A44 day-ahead prices). Hourly series
// are repeated four times to reach 15-minute resolution; positions missing
// from a curve repeat the previous value. Throws kParse with a byte offset
// for malformed XML, kData for an acknowledgement document or a point count
// other than 96 after normalisation.
PriceCurve parse_entsoe_xml(std::string_view xml, Date market_date);

// ---- calendar -------------------------------------------------------------

// Local wall-clock time of the household.
using LocalMinutes = std::chrono::local_time<std::chrono::minutes>;

inline LocalMinutes local_midnight(Date date) {
  return LocalMinutes{std::chrono::local_days{date}.time_since_epoch()};
}

struct CalendarEvent {
  std::string title;
  LocalMinutes start;
  LocalMinutes end;
  bool operator==(const CalendarEvent&) const = default;
};

// "YYYY-MM-DDTHH:MM[:SS[.fff]][Z|+hh:mm]". The wall-clock part is kept and
// any offset is dropped.
std::optional<LocalMinutes> parse_local_datetime(std::string_view text);
std::string format_local(LocalMinutes t);
nlohmann::json to_json(const CalendarEvent& event);

class CalendarProvider {
 public:
  virtual ~CalendarProvider() = default;
  // Events intersecting [from, to), sorted by start then title.
  virtual std::vector<CalendarEvent> fetch_events(LocalMinutes from, LocalMinutes to) = 0;
  virtual std::string name() const = 0;
};

// Calendar fixture: a JSON list (or {"events": [...]}) of concrete entries
// {"title","start","end"} and weekly entries
// {"title","weekdays":["Mon",...],"start_time":"08:00","end_time":"18:00"}.
// Weekly entries are expanded to dates within 7 days of the anchor.
class FixtureCalendarProvider final : public CalendarProvider {
 public:
  explicit FixtureCalendarProvider(std::vector<CalendarEvent> events);
  static FixtureCalendarProvider from_json(const nlohmann::json& j, Date anchor);
  static FixtureCalendarProvider load(const std::filesystem::path& path, Date anchor);

  std::vector<CalendarEvent> fetch_events(LocalMinutes from, LocalMinutes to) override;
  std::string name() const override { return "fixture"; }
  const std::vector<CalendarEvent>& events() const noexcept { return events_; }

 private:
  std::vector<CalendarEvent> events_;
};

// Events from a Google Calendar events.list response. All-day entries (date
// without time) span the whole day.
std::vector<CalendarEvent> parse_google_events(const nlohmann::json& j);

}  // namespace hems
