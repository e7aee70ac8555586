// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hems/oracle.hpp"
#include "hems/schedule.hpp"

// Text protocol between the orchestrator model and the tool layer:
//
//   ACTION: <VERB> [ | key=value ]*
//
// See docs/protocol.md for the grammar.
namespace hems::protocol {

enum class Verb {
  kGetPrices,
  kGetCalendarConstraint,
  kCalculateWindowSums,
  kCallAgent,
  kSchedule,
  kFinish,
};

std::string_view to_string(Verb verb);
std::optional<Verb> parse_verb(std::string_view text);

struct ActionCommand {
  Verb verb = Verb::kFinish;
  std::vector<std::pair<std::string, std::string>> args;  // insertion order
  std::string raw_line;

  const std::string* arg(std::string_view key) const;
  long long int_arg(std::string_view key) const;  // validated by parse_action

  // raw_line is provenance only and does not take part in equality.
  bool operator==(const ActionCommand& other) const { return verb == other.verb && args == other.args; }
};

enum class ProtocolErrorKind { kNoAction, kUnknownAction, kBadArgs };

std::string_view to_string(ProtocolErrorKind kind);

struct ProtocolError {
  ProtocolErrorKind kind;
  std::string message;
};

struct ParseOutcome {
  std::optional<ActionCommand> command;
  std::optional<ProtocolError> error;
  std::string thought;  // text before the action line, "Thought:" prefix removed
  std::vector<std::string> warnings;

  bool ok() const noexcept { return command.has_value(); }
};

// Total: never throws on any input. Executes the first ACTION line only; any
// further ACTION lines add a protocol-violation warning.
ParseOutcome parse_action(std::string_view llm_output);

std::string serialize_action(const ActionCommand& command);

// Makes free text safe as an argument value: '|' becomes '/', line breaks
// become spaces, surrounding whitespace is trimmed.
std::string sanitize_value(std::string_view value);

ActionCommand make_action(Verb verb, std::vector<std::pair<std::string, std::string>> args = {});

struct AgentRecommendation {
  SlotIndex start_slot{0};
  int duration_slots = 0;
  std::optional<double> price_sum;  // EUR/MWh, when the agent stated one
  std::string reasoning;
  std::string source_agent;
  std::vector<std::string> notes;  // e.g. duration conflicts that were overridden
};

// Accepts both the "Recommended Timeslot: Slot X (HH:MM)" block and the
// "Start timeslot: Slot X (HH:MM)" block; the last block in the text wins.
// Throws Error(kParse, "unparseable_recommendation: ...") when no slot is found.
AgentRecommendation parse_recommendation(std::string_view agent_output, const ApplianceSpec& spec,
                                         std::string source_agent = {});

// Observation renderers. Every observation is one block starting with
// "Observation:".
std::string render_prices(const PriceCurve& prices);
std::string render_window_sums(const WindowSums& sums);
std::string render_recommendation(const AgentRecommendation& rec);
std::string render_schedule(const BinarySchedule& schedule);
std::string render_error(std::string_view message);
std::string render_text(std::string_view body);

std::string format_price_list(std::span<const double> values);

}  // namespace hems::protocol
