// SPDX-License-Identifier: Apache-2.0
#include "hems/intent.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <set>
#include <string>

#include "hems/text.hpp"

namespace hems {
namespace {

bool has_any(const std::set<std::string>& tokens, std::initializer_list<std::string_view> words) {
  return std::any_of(words.begin(), words.end(), [&](std::string_view w) { return tokens.count(std::string(w)); });
}

std::optional<int> number_word(std::string_view w) {
  static constexpr std::array<std::string_view, 13> kWords = {
      "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"};
  for (std::size_t i = 0; i < kWords.size(); ++i) {
    if (kWords[i] == w) return static_cast<int>(i);
  }
  if (w == "a" || w == "an") return 1;
  if (auto v = text::parse_int(w); v && *v >= 0 && *v <= 96) return static_cast<int>(*v);
  return std::nullopt;
}

// "3-hour", "3 hour", "three hours", "90-minute", "half-hour".
std::optional<int> parse_window_slots(const std::string& lower) {
  static const std::regex kSpan(R"(\b([a-z0-9]+)[\s-]*(hours?|hrs?|h|minutes?|mins?)\b)");
  for (auto it = std::sregex_iterator(lower.begin(), lower.end(), kSpan); it != std::sregex_iterator(); ++it) {
    const auto n = number_word((*it)[1].str());
    if (!n || *n <= 0) continue;
    const bool minutes = (*it)[2].str().front() == 'm';
    const int slots = minutes ? *n / kMinutesPerSlot : *n * 4;
    if (slots >= 1 && slots <= kSlotsPerDay) return slots;
  }
  if (lower.find("half-hour") != std::string::npos || lower.find("half hour") != std::string::npos) return 2;
  return std::nullopt;
}

}  // namespace

RequestIntent classify_request(std::string_view text) {
  const auto words = text::keyword_tokens(text);
  const std::set<std::string> t(words.begin(), words.end());
  const std::string lower = text::to_lower(text);

  RequestIntent intent;
  const bool electric_vehicle = lower.find("electric vehicle") != std::string::npos;
  intent.ev_keywords = electric_vehicle || has_any(t, {"ev", "car", "charge", "charging", "vehicle", "all", "everything"});

  const bool wm = has_any(t, {"washing", "washer", "laundry", "wm", "clothes"});
  const bool dw = has_any(t, {"dishwasher", "dishes", "dish", "dw"});
  const bool ev = electric_vehicle || has_any(t, {"ev", "car", "charge", "charging", "charger", "vehicle", "evs"});
  const bool group = has_any(t, {"loads", "appliances", "everything", "devices"});
  const bool scheduling_verb = has_any(t, {"schedule", "scheduling", "run", "start", "plan", "book", "optimize",
                                           "optimise", "shift"});
  const bool everything = group || (t.count("all") && scheduling_verb);

  if (wm || dw || ev || everything) {
    intent.kind = RequestKind::kScheduling;
    for (const auto id : kAllAppliances) {
      const bool named = (id == ApplianceId::kWashingMachine && wm) || (id == ApplianceId::kDishwasher && dw) ||
                         (id == ApplianceId::kEvCharger && ev);
      if (named || everything) intent.appliances.push_back(id);
    }
    return intent;
  }

  const bool cheap = has_any(t, {"cheap", "cheapest", "lowest", "low", "cheaper", "minimum", "min"});
  const bool expensive = has_any(t, {"expensive", "priciest", "peak", "highest", "costliest", "maximum", "max"});
  const bool pricing = has_any(t, {"price", "prices", "window", "hour", "hours", "tariff", "electricity"});
  if (cheap || expensive || (pricing && has_any(t, {"window", "when", "which", "what"}))) {
    intent.kind = RequestKind::kAnalytical;
    intent.query = (cheap && !expensive) ? WindowQuery::kCheapest : WindowQuery::kMostExpensive;
    intent.window_slots = parse_window_slots(lower).value_or(4);
    return intent;
  }

  if (pricing || scheduling_verb ||
      has_any(t, {"energy", "power", "consumption", "kwh", "mwh", "heat", "pump", "hems", "appliance", "load"})) {
    intent.kind = RequestKind::kUnclear;
  }
  return intent;
}

std::optional<int> extract_user_deadline(std::string_view text) {
  const std::string lower = text::to_lower(text);
  if (std::regex_search(lower, std::regex(R"(\b(by|before)\s+noon\b)"))) return 48;
  if (std::regex_search(lower, std::regex(R"(\b(by|before)\s+midnight\b)"))) return kSlotsPerDay;
  static const std::regex kTime(R"(\b(?:by|before|until|ready at)\s+(\d{1,2})(?::(\d{2}))?\s*(am|pm|a\.m\.|p\.m\.)?)");
  std::smatch m;
  if (!std::regex_search(lower, m, kTime)) return std::nullopt;
  int hour = std::stoi(m[1].str());
  const int minute = m[2].matched ? std::stoi(m[2].str()) : 0;
  if (minute > 59) return std::nullopt;
  if (m[3].matched) {
    if (hour < 1 || hour > 12) return std::nullopt;
    const bool pm = m[3].str().front() == 'p';
    if (hour == 12) hour = pm ? 12 : 24;  // 12am reads as the end of the day
    else if (pm) hour += 12;
  }
  if (hour > 24 || (hour == 24 && minute != 0)) return std::nullopt;
  return (hour * 60 + minute) / kMinutesPerSlot;
}

}  // namespace hems
