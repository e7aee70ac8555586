// SPDX-License-Identifier: Apache-2.0
#include "hems/action.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <stdexcept>

#include <fmt/format.h>

#include "hems/error.hpp"
#include "hems/text.hpp"

namespace hems::protocol {
namespace {

constexpr std::pair<Verb, std::string_view> kVerbNames[] = {
    {Verb::kGetPrices, "GET_PRICES"},
    {Verb::kGetCalendarConstraint, "GET_CALENDAR_CONSTRAINT"},
    {Verb::kCalculateWindowSums, "CALCULATE_WINDOW_SUMS"},
    {Verb::kCallAgent, "CALL_AGENT"},
    {Verb::kSchedule, "SCHEDULE"},
    {Verb::kFinish, "FINISH"},
};

constexpr std::string_view kActionPrefix = "ACTION:";

struct RequiredArg {
  std::string_view key;
  bool numeric;
};

std::vector<RequiredArg> required_args(Verb verb) {
  switch (verb) {
    case Verb::kCalculateWindowSums:
      return {{"window_size", true}};
    case Verb::kCallAgent:
      return {{"agent_name", false}, {"user_request", false}};
    case Verb::kSchedule:
      return {{"appliance_id", false}, {"start_slot", true}, {"duration_slots", true}, {"reasoning", false}};
    case Verb::kFinish:
      return {{"summary", false}};
    default:
      return {};
  }
}

bool starts_with_action(std::string_view line) {
  line = text::trim(line);
  return line.size() >= kActionPrefix.size() &&
         text::to_lower(line.substr(0, kActionPrefix.size())) == "action:";
}

std::string strip_thought(std::string_view block) {
  auto t = text::trim(block);
  if (t.size() >= 8 && text::to_lower(t.substr(0, 8)) == "thought:") t = text::trim(t.substr(8));
  return std::string(t);
}

}  // namespace

std::string_view to_string(Verb verb) {
  for (const auto& [v, name] : kVerbNames) {
    if (v == verb) return name;
  }
  return "UNKNOWN";
}

std::optional<Verb> parse_verb(std::string_view text) {
  const auto t = text::trim(text);
  for (const auto& [v, name] : kVerbNames) {
    if (t.size() == name.size() &&
        std::equal(t.begin(), t.end(), name.begin(), [](char a, char b) { return std::toupper(static_cast<unsigned char>(a)) == b; })) {
      return v;
    }
  }
  return std::nullopt;
}

std::string_view to_string(ProtocolErrorKind kind) {
  switch (kind) {
    case ProtocolErrorKind::kNoAction:
      return "no_action";
    case ProtocolErrorKind::kUnknownAction:
      return "unknown_action";
    case ProtocolErrorKind::kBadArgs:
      return "bad_args";
  }
  return "bad_args";
}

const std::string* ActionCommand::arg(std::string_view key) const {
  for (const auto& [k, v] : args) {
    if (k == key) return &v;
  }
  return nullptr;
}

long long ActionCommand::int_arg(std::string_view key) const {
  const auto* raw = arg(key);
  const auto v = raw ? text::parse_int(*raw) : std::nullopt;
  if (!v) throw Error(ErrorCode::kParameter, fmt::format("argument {} is not an integer", key));
  return *v;
}

ParseOutcome parse_action(std::string_view llm_output) {
  ParseOutcome out;
  const auto lines = text::split_lines(llm_output);
  std::size_t action_line = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!starts_with_action(lines[i])) continue;
    if (action_line == lines.size()) {
      action_line = i;
    } else {
      out.warnings.push_back(
          fmt::format("protocol violation: extra ACTION line ignored: {}", text::trim(lines[i])));
    }
  }
  if (action_line == lines.size()) {
    out.thought = strip_thought(llm_output);
    out.error = ProtocolError{ProtocolErrorKind::kNoAction,
                              "no ACTION line found; output exactly one line starting with 'ACTION:'"};
    return out;
  }
  std::string before;
  for (std::size_t i = 0; i < action_line; ++i) before.append(lines[i]).push_back('\n');
  out.thought = strip_thought(before);

  const auto line = text::trim(lines[action_line]);
  const auto segments = text::split(line.substr(kActionPrefix.size()), '|');
  const auto verb = parse_verb(segments.front());
  if (!verb) {
    out.error = ProtocolError{ProtocolErrorKind::kUnknownAction,
                              fmt::format("unknown action '{}'", text::trim(segments.front()))};
    return out;
  }

  ActionCommand cmd;
  cmd.verb = *verb;
  cmd.raw_line = std::string(line);
  for (std::size_t i = 1; i < segments.size(); ++i) {
    const auto seg = text::trim(segments[i]);
    if (seg.empty()) continue;
    const auto eq = seg.find('=');
    if (eq == std::string_view::npos || text::trim(seg.substr(0, eq)).empty()) {
      out.error = ProtocolError{ProtocolErrorKind::kBadArgs, fmt::format("argument '{}' is not key=value", seg)};
      return out;
    }
    auto key = text::to_lower(text::trim(seg.substr(0, eq)));
    auto value = std::string(text::trim(seg.substr(eq + 1)));
    if (cmd.arg(key)) {
      out.warnings.push_back(fmt::format("duplicate argument {} ignored", key));
      continue;
    }
    cmd.args.emplace_back(std::move(key), std::move(value));
  }
  for (const auto& req : required_args(cmd.verb)) {
    const auto* value = cmd.arg(req.key);
    if (!value || value->empty()) {
      out.error = ProtocolError{ProtocolErrorKind::kBadArgs,
                                fmt::format("{} requires argument {}", to_string(cmd.verb), req.key)};
      return out;
    }
    if (req.numeric && !text::parse_int(*value)) {
      out.error = ProtocolError{ProtocolErrorKind::kBadArgs,
                                fmt::format("argument {} must be a base-10 integer, got '{}'", req.key, *value)};
      return out;
    }
  }
  out.command = std::move(cmd);
  return out;
}

std::string serialize_action(const ActionCommand& command) {
  std::string out = fmt::format("ACTION: {}", to_string(command.verb));
  for (const auto& [k, v] : command.args) out += fmt::format(" | {}={}", k, v);
  return out;
}

std::string sanitize_value(std::string_view value) {
  std::string out(value);
  for (char& c : out) {
    if (c == '|') c = '/';
    if (c == '\n' || c == '\r') c = ' ';
  }
  return std::string(text::trim(out));
}

ActionCommand make_action(Verb verb, std::vector<std::pair<std::string, std::string>> args) {
  ActionCommand cmd;
  cmd.verb = verb;
  cmd.args = std::move(args);
  cmd.raw_line = serialize_action(cmd);
  return cmd;
}

AgentRecommendation parse_recommendation(std::string_view agent_output, const ApplianceSpec& spec,
                                         std::string source_agent) {
  static const std::regex kSlot(R"((recommended\s+timeslot|start\s+timeslot)\s*\**\s*:\s*\**\s*slot\s+(-?\d+))",
                                std::regex::icase);
  static const std::regex kDuration(R"(duration\s*\**\s*:\s*\**\s*(\d+)\s*slots?)", std::regex::icase);
  static const std::regex kSum(R"(sum\s+of\s+prices\s*\**\s*:\s*\**\s*(-?\d+(?:\.\d+)?))", std::regex::icase);
  static const std::regex kReasoning(R"(reasoning\s*\**\s*:\s*\**\s*([^\r\n]+))", std::regex::icase);

  const std::string subject(agent_output);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(subject.begin(), subject.end(), kSlot); it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) {
    throw Error(ErrorCode::kParse, "unparseable_recommendation: no 'Slot <n>' recommendation block found");
  }
  const auto slot = text::parse_int(last[2].str());
  if (!slot || *slot < 0 || *slot >= kSlotsPerDay) {
    throw Error(ErrorCode::kParse, fmt::format("unparseable_recommendation: slot {} outside 0..95", last[2].str()));
  }

  AgentRecommendation rec;
  rec.start_slot = SlotIndex(static_cast<int>(*slot));
  rec.duration_slots = spec.duration_slots;
  rec.source_agent = std::move(source_agent);

  const auto block_begin = subject.cbegin() + last.position(0);
  std::smatch m;
  if (std::regex_search(block_begin, subject.cend(), m, kDuration)) {
    const auto stated = text::parse_int(m[1].str());
    if (stated && *stated != spec.duration_slots) {
      rec.notes.push_back(fmt::format("stated duration {} slots conflicts with {} ({} slots); using the appliance default",
                                      *stated, to_string(spec.id), spec.duration_slots));
    }
  }
  if (std::regex_search(block_begin, subject.cend(), m, kSum)) {
    try {
      rec.price_sum = std::stod(m[1].str());
    } catch (const std::out_of_range&) {
      rec.notes.push_back("stated price sum out of range; ignored");
    }
  }
  if (std::regex_search(block_begin, subject.cend(), m, kReasoning)) {
    rec.reasoning = std::string(text::trim(m[1].str()));
  }
  return rec;
}

std::string format_price_list(std::span<const double> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += text::format_fixed(values[i]);
  }
  out += "]";
  return out;
}

std::string render_prices(const PriceCurve& prices) {
  const auto p = prices.prices();
  const auto min_it = std::min_element(p.begin(), p.end());
  const auto max_it = std::max_element(p.begin(), p.end());
  const int min_slot = static_cast<int>(min_it - p.begin());
  const int max_slot = static_cast<int>(max_it - p.begin());
  return fmt::format(
      "Observation: prices loaded, 96 slots, min={} (slot {}, {}) max={} (slot {}, {}), date {}, unit EUR/MWh\n"
      "prices={}",
      text::format_fixed(*min_it), min_slot, slot_to_time(min_slot), text::format_fixed(*max_it), max_slot,
      slot_to_time(max_slot), to_iso(prices.market_date()), format_price_list(p));
}

std::string render_window_sums(const WindowSums& sums) {
  return fmt::format(
      "Observation: window sums for window_size={} ({} windows): min_window_index={} ({}) min_sum={} "
      "max_window_index={} ({}) max_sum={}\nsums={}",
      sums.window_size, sums.sums.size(), sums.min_window_index, slot_to_time(sums.min_window_index),
      text::format_fixed(sums.min_sum), sums.max_window_index, slot_to_time(sums.max_window_index),
      text::format_fixed(sums.max_sum), format_price_list(sums.sums));
}

std::string render_recommendation(const AgentRecommendation& rec) {
  const int start = rec.start_slot.value();
  std::string out = fmt::format("Observation: {} recommends\nStart timeslot: Slot {} ({})\nDuration: {} slots",
                                rec.source_agent.empty() ? "agent" : rec.source_agent, start,
                                slot_to_time(start), rec.duration_slots);
  if (rec.price_sum) out += fmt::format("\nSum of Prices: {} EUR/MWh", text::format_fixed(*rec.price_sum));
  if (!rec.reasoning.empty()) out += fmt::format("\nReasoning: {}", rec.reasoning);
  for (const auto& note : rec.notes) out += fmt::format("\nNote: {}", note);
  return out;
}

std::string render_schedule(const BinarySchedule& s) {
  const int end = s.end_slot();
  return fmt::format("Observation: scheduled {} at slot {} ({}) for {} slots, ends {}, price sum {} EUR/MWh, "
                     "estimated cost {} EUR",
                     to_string(s.appliance_id), s.start_slot.value(), slot_to_time(s.start_slot),
                     s.duration_slots, end >= kSlotsPerDay ? std::string("24:00") : slot_to_time(end),
                     text::format_fixed(s.price_sum), text::format_fixed(s.estimated_cost_eur, 4));
}

std::string render_error(std::string_view message) { return fmt::format("Observation: ERROR: {}", message); }

std::string render_text(std::string_view body) { return fmt::format("Observation: {}", body); }

}  // namespace hems::protocol
