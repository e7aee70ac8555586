// SPDX-License-Identifier: Apache-2.0
// Random generators for the action protocol.
#pragma once

#include <random>
#include <string>
#include <string_view>

#include "hems/action.hpp"

namespace hems::testing {

using protocol::sanitize_value;
using protocol::Verb;

inline std::string random_token(std::mt19937_64& rng, std::string_view alphabet, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
  return s;
}

inline protocol::ActionCommand random_command(std::mt19937_64& rng) {
  static constexpr Verb verbs[] = {Verb::kGetPrices, Verb::kGetCalendarConstraint, Verb::kCalculateWindowSums,
                                   Verb::kCallAgent, Verb::kSchedule,              Verb::kFinish};
  std::uniform_int_distribution<int> vi(0, 5);
  std::uniform_int_distribution<int> num(-5, 200);
  protocol::ActionCommand cmd;
  cmd.verb = verbs[vi(rng)];
  const auto free_text = [&] {
    auto v = random_token(rng, "abcXYZ 019=,.:;-_/()'\"!?#&%", 1, 40);
    return sanitize_value(v).empty() ? std::string("x") : sanitize_value(v);
  };
  switch (cmd.verb) {
    case Verb::kCalculateWindowSums: cmd.args = {{"window_size", std::to_string(num(rng))}}; break;
    case Verb::kCallAgent: cmd.args = {{"agent_name", "dishwasher_agent"}, {"user_request", free_text()}}; break;
    case Verb::kSchedule:
      cmd.args = {{"appliance_id", "ev_charger"},
                  {"start_slot", std::to_string(num(rng))},
                  {"duration_slots", std::to_string(num(rng))},
                  {"reasoning", free_text()}};
      break;
    case Verb::kFinish: cmd.args = {{"summary", free_text()}}; break;
    default: break;
  }
  std::uniform_int_distribution<int> extra(0, 2);
  for (int i = extra(rng); i > 0; --i) {
    const auto key = "x" + random_token(rng, "abcdefghijklmnopqrstuvwxyz_", 1, 8);
    if (!cmd.arg(key)) cmd.args.emplace_back(key, free_text());
  }
  return cmd;
}


// Strings built from protocol fragments, separators and raw bytes, so most of
// them get past the first checks of the parser.
inline std::string random_protocol_noise(std::mt19937_64& rng) {
  static constexpr std::string_view kPieces[] = {
      "ACTION:", "action:", " ", "|", "=", "\n", "\r\n", "Thought:", "GET_PRICES", "SCHEDULE", "CALL_AGENT",
      "FINISH", "CALCULATE_WINDOW_SUMS", "GET_CALENDAR_CONSTRAINT", "window_size", "start_slot", "summary",
      "99999999999999999999", "-1", "`", "**", "\xff", "\xc3", "slot", "Slot 12 (03:00)"};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kPieces) - 1);
  std::uniform_int_distribution<int> count(0, 30);
  std::uniform_int_distribution<int> byte(0, 255);
  std::string s;
  if (byte(rng) < 96) s = "ACTION: " + std::string(kPieces[8 + byte(rng) % 6]) + " | ";
  for (int i = count(rng); i > 0; --i) {
    if (byte(rng) < 40) s.push_back(static_cast<char>(byte(rng)));
    else s.append(kPieces[pick(rng)]);
  }
  return s;
}

}  // namespace hems::testing
