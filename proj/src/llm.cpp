// SPDX-License-Identifier: Apache-2.0
#include "hems/llm.hpp"

#include <algorithm>
#include <optional>
#include <regex>

#include <fmt/format.h>

#include "hems/action.hpp"
#include "hems/intent.hpp"
#include "hems/oracle.hpp"
#include "hems/prompts.hpp"
#include "hems/security.hpp"
#include "hems/text.hpp"

namespace hems::llm {
namespace {

using protocol::ActionCommand;
using protocol::Verb;

std::optional<long long> capture_int(const std::string& s, const std::regex& re) {
  std::smatch m;
  if (!std::regex_search(s, m, re)) return std::nullopt;
  return text::parse_int(m[1].str());
}

std::vector<double> capture_list(const std::string& s, std::string_view key) {
  std::vector<double> out;
  const auto start = s.find(std::string(key) + "=[");
  if (start == std::string::npos) return out;
  const auto open = start + key.size() + 2;
  const auto close = s.find(']', open);
  if (close == std::string::npos) return out;
  for (auto item : text::split(std::string_view(s).substr(open, close - open), ',')) {
    item = text::trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(std::string(item)));
    } catch (const std::exception&) {
      return {};
    }
  }
  return out;
}

bool is_error(const std::string& observation) {
  return observation.rfind("Observation: ERROR", 0) == 0;
}

std::string action(std::string_view thought, Verb verb, std::vector<std::pair<std::string, std::string>> args = {}) {
  return fmt::format("Thought: {}\n{}", thought, protocol::serialize_action(protocol::make_action(verb, std::move(args))));
}

std::string finish(std::string_view thought, std::string_view summary) {
  return action(thought, Verb::kFinish, {{"summary", protocol::sanitize_value(summary)}});
}

// One executed orchestrator step as seen in the conversation.
struct Step {
  ActionCommand cmd;
  std::string observation;
};

std::string appliance_phrase(ApplianceId id) {
  switch (id) {
    case ApplianceId::kWashingMachine: return "washing machine";
    case ApplianceId::kDishwasher: return "dishwasher";
    case ApplianceId::kEvCharger: return "EV charger";
  }
  return "appliance";
}

std::optional<ApplianceId> step_appliance(const Step& s) {
  if (s.cmd.verb == Verb::kCallAgent) {
    if (const auto* a = s.cmd.arg("agent_name")) return parse_agent_name(*a);
  }
  if (s.cmd.verb == Verb::kSchedule) {
    if (const auto* a = s.cmd.arg("appliance_id")) return parse_appliance_id(*a);
  }
  return std::nullopt;
}

const Step* find_step(const std::vector<Step>& steps, Verb verb, std::optional<ApplianceId> id = std::nullopt) {
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
    if (it->cmd.verb == verb && (!id || step_appliance(*it) == id)) return &*it;
  }
  return nullptr;
}

PromptStage detect_stage(const std::string& system_prompt) {
  const auto lower = text::to_lower(system_prompt);
  if (lower.find("maximum sum") != std::string::npos) return PromptStage::kExplicitWorkflow;
  if (lower.find("rather than estimation") != std::string::npos) return PromptStage::kMinimalGuidance;
  return PromptStage::kBaseline;
}

std::string window_phrase(int slots) {
  if (slots % 4 == 0) return fmt::format("{}-hour", slots / 4);
  return fmt::format("{}-minute", slots * kMinutesPerSlot);
}

std::string end_time(int end_slot) {
  return end_slot >= kSlotsPerDay ? std::string("24:00") : slot_to_time(end_slot);
}

std::string analytical_policy(const RequestIntent& intent, PromptStage stage, const std::vector<Step>& steps) {
  const Step* prices = find_step(steps, Verb::kGetPrices);
  if (!prices) return action("This is a price question. I need today's prices first.", Verb::kGetPrices);
  if (is_error(prices->observation)) {
    return finish("The price data is unavailable.", "I could not load electricity prices, so I cannot answer this question right now.");
  }
  const std::string label = intent.query == WindowQuery::kMostExpensive ? "most expensive" : "cheapest";
  const std::string span = window_phrase(intent.window_slots);

  if (stage == PromptStage::kBaseline) {
    // No analytical guidance: answer by eyeballing the extreme single price.
    static const std::regex kMax(R"(max=[-0-9.]+ \(slot (\d+))");
    static const std::regex kMin(R"(min=[-0-9.]+ \(slot (\d+))");
    const auto extreme = capture_int(prices->observation,
                                     intent.query == WindowQuery::kMostExpensive ? kMax : kMin);
    if (!extreme) return finish("The price summary is unreadable.", "I could not read the price data.");
    const int start = std::min<int>(static_cast<int>(*extreme / 4 * 4), kSlotsPerDay - intent.window_slots);
    return finish(
        fmt::format("The extreme price is at slot {}, so the {} window is probably the hours around it.", *extreme, label),
        fmt::format("Looking at the price curve, the {} {} window is roughly Slot {} ({}) to {}, around the "
                    "single price extreme at {}.",
                    label, span, start, slot_to_time(start), end_time(start + intent.window_slots),
                    slot_to_time(static_cast<int>(*extreme))));
  }

  const Step* sums = find_step(steps, Verb::kCalculateWindowSums);
  if (!sums) {
    return action(fmt::format("I will compute the sums of every {} window ({} slots).", span, intent.window_slots),
                  Verb::kCalculateWindowSums, {{"window_size", std::to_string(intent.window_slots)}});
  }
  if (is_error(sums->observation)) {
    return finish("The window calculation failed.", "I could not compute the price windows for this question.");
  }
  // Minimal guidance names the tool but not how to read it: the emulated
  // model reports the minimum index whatever was asked.
  const bool use_max = stage == PromptStage::kExplicitWorkflow && intent.query == WindowQuery::kMostExpensive;
  static const std::regex kMaxIdx(R"(max_window_index=(\d+))");
  static const std::regex kMinIdx(R"(min_window_index=(\d+))");
  static const std::regex kMaxSum(R"(max_sum=(-?[0-9.]+))");
  static const std::regex kMinSum(R"(min_sum=(-?[0-9.]+))");
  const auto idx = capture_int(sums->observation, use_max ? kMaxIdx : kMinIdx);
  std::smatch m;
  const bool has_sum = std::regex_search(sums->observation, m, use_max ? kMaxSum : kMinSum);
  if (!idx) return finish("The window result is unreadable.", "I could not read the window calculation.");
  const int start = static_cast<int>(*idx);
  const int w = sums->cmd.int_arg("window_size");
  return finish(
      fmt::format("The {} index of the window sums is {}.", use_max ? "maximum" : "minimum", start),
      fmt::format("The {} {} window starts at Slot {} ({}) and ends at {}{}.", label, window_phrase(w), start,
                  slot_to_time(start), end_time(start + w),
                  has_sum ? fmt::format(", with a price sum of {} EUR/MWh", m[1].str()) : std::string()));
}

std::string scheduling_policy(const std::string& user_text, const RequestIntent& intent, const std::vector<Step>& steps) {
  const Step* prices = find_step(steps, Verb::kGetPrices);
  if (!prices) return action("I need the day-ahead prices before delegating to any agent.", Verb::kGetPrices);
  if (is_error(prices->observation)) {
    return finish("Prices could not be loaded, so no schedule can be computed.",
                  "I could not load electricity prices, so nothing was scheduled. Please try again later.");
  }

  std::string ev_deadline;
  bool ev_blocked = false;
  if (intent.ev_keywords) {
    const Step* cal = find_step(steps, Verb::kGetCalendarConstraint);
    if (!cal) {
      return action("The request involves the EV, so I check the calendar before calling any agent.",
                    Verb::kGetCalendarConstraint);
    }
    static const std::regex kFinishBy(R"(finish by slot (\d+))");
    if (is_error(cal->observation)) {
      ev_blocked = true;
    } else if (const auto slot = capture_int(cal->observation, kFinishBy)) {
      ev_deadline = fmt::format(", finish by slot {}", *slot);
    }
  }

  std::vector<std::string> done;
  std::vector<std::string> skipped;
  for (const auto id : intent.appliances) {
    const std::string name(to_string(id));
    if (id == ApplianceId::kEvCharger && ev_blocked) {
      skipped.push_back(fmt::format("{} (calendar constraint unavailable)", name));
      continue;
    }
    const Step* call = find_step(steps, Verb::kCallAgent, id);
    if (!call) {
      const auto& spec = canonical_spec(id);
      const std::string req = fmt::format("Schedule the {} for {} slots at the lowest cost{}. User said: {}",
                                          appliance_phrase(id), spec.duration_slots,
                                          id == ApplianceId::kEvCharger ? ev_deadline : std::string(), user_text);
      return action(fmt::format("Next I delegate the {} to its specialist.", appliance_phrase(id)), Verb::kCallAgent,
                    {{"agent_name", agent_name(id)}, {"user_request", protocol::sanitize_value(req)}});
    }
    if (is_error(call->observation)) {
      skipped.push_back(fmt::format("{} (agent failed)", name));
      continue;
    }
    const Step* sched = find_step(steps, Verb::kSchedule, id);
    if (!sched) {
      static const std::regex kStart(R"(Start timeslot: Slot (\d+))");
      static const std::regex kDuration(R"(Duration: (\d+) slots)");
      static const std::regex kSum(R"(Sum of Prices: (-?[0-9.]+))");
      const auto start = capture_int(call->observation, kStart);
      const auto duration = capture_int(call->observation, kDuration);
      if (!start || !duration) {
        skipped.push_back(fmt::format("{} (recommendation unreadable)", name));
        continue;
      }
      std::smatch m;
      const std::string reason = std::regex_search(call->observation, m, kSum)
                                     ? fmt::format("Specialist recommendation, price sum {} EUR/MWh", m[1].str())
                                     : std::string("Specialist recommendation");
      return action(fmt::format("The agent recommends slot {} for the {}. I commit it.", *start, appliance_phrase(id)),
                    Verb::kSchedule,
                    {{"appliance_id", name},
                     {"start_slot", std::to_string(*start)},
                     {"duration_slots", std::to_string(*duration)},
                     {"reasoning", reason}});
    }
    if (is_error(sched->observation)) {
      skipped.push_back(fmt::format("{} (schedule rejected)", name));
      continue;
    }
    static const std::regex kScheduled(R"(scheduled \S+ at slot (\d+) \((\d\d:\d\d)\).*ends (\d\d:\d\d).*estimated cost ([-0-9.]+) EUR)");
    std::smatch m;
    if (std::regex_search(sched->observation, m, kScheduled)) {
      done.push_back(fmt::format("{} at Slot {} ({}-{}, est. {} EUR)", name, m[1].str(), m[2].str(), m[3].str(),
                                 m[4].str()));
    } else {
      done.push_back(name);
    }
  }

  std::string summary = done.empty() ? std::string("No appliance was scheduled.")
                                     : "Scheduled " + fmt::format("{}", fmt::join(done, "; ")) + ".";
  if (!skipped.empty()) summary += " Not scheduled: " + fmt::format("{}", fmt::join(skipped, "; ")) + ".";
  return finish("All requested appliances have been handled.", summary);
}

const ApplianceSpec* specialist_spec(const std::string& system_prompt) {
  if (system_prompt.find("Washing Machine Scheduling Agent") != std::string::npos) {
    return &canonical_spec(ApplianceId::kWashingMachine);
  }
  if (system_prompt.find("Dishwasher Scheduling Agent") != std::string::npos) {
    return &canonical_spec(ApplianceId::kDishwasher);
  }
  if (system_prompt.find("EV Charger Scheduling Agent") != std::string::npos) {
    return &canonical_spec(ApplianceId::kEvCharger);
  }
  return nullptr;
}

std::string recommendation_block(const ApplianceSpec& spec, int start, double sum, std::string_view reasoning) {
  const int minutes = spec.duration_slots * kMinutesPerSlot;
  if (spec.id == ApplianceId::kDishwasher) {
    return fmt::format(
        "## Report Recommendation\n\nThe recommended dishwasher schedule is:\n"
        "* Start timeslot: Slot {} ({})\n* Duration: {} slots ({} minutes)\n* End timeslot: Slot {} ({})\n"
        "* Sum of prices: {} EUR/MWh\n\nReasoning: {}",
        start, slot_to_time(start), spec.duration_slots, minutes, start + spec.duration_slots,
        end_time(start + spec.duration_slots), text::format_fixed(sum), reasoning);
  }
  return fmt::format(
      "Recommended Timeslot: Slot {} ({})\nDuration: {} slots ({} minutes)\nSum of Prices: {} EUR/MWh\nReasoning: {}",
      start, slot_to_time(start), spec.duration_slots, minutes, text::format_fixed(sum), reasoning);
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

int count_prompt_tokens(const ChatRequest& request) {
  std::size_t n = text::word_count(request.system_prompt);
  for (const auto& m : request.messages) n += text::word_count(m.content);
  return static_cast<int>(n);
}

std::string scripted_orchestrator_policy(const ChatRequest& request) {
  if (request.messages.empty() || request.messages.front().role != Role::kUser) {
    return finish("The conversation has no user request.", "Sorry, I did not receive a request I can work on.");
  }
  const std::string& first = request.messages.front().content;
  const std::string user_text = security::unwrap_privileged(first).value_or(first);
  const auto intent = classify_request(user_text);

  std::vector<Step> steps;
  for (std::size_t i = 1; i < request.messages.size(); ++i) {
    if (request.messages[i].role != Role::kAssistant) continue;
    auto parsed = protocol::parse_action(request.messages[i].content);
    if (!parsed.ok()) continue;
    Step s{std::move(*parsed.command), {}};
    if (i + 1 < request.messages.size() && request.messages[i + 1].role == Role::kUser) {
      s.observation = request.messages[i + 1].content;
    }
    steps.push_back(std::move(s));
  }

  switch (intent.kind) {
    case RequestKind::kOutOfScope:
      return finish(
          "This request is outside my scope as a Home Energy Management System. I can only help with appliance "
          "scheduling and energy optimization.",
          "I can only help with home energy management tasks like scheduling appliances (washing machine, "
          "dishwasher, EV charger) and optimizing energy consumption. Please ask me about scheduling your flexible "
          "loads or checking electricity prices.");
    case RequestKind::kUnclear:
      return finish("The request is about energy but names no appliance or price question I can act on.",
                    "Sorry, I am not sure what to do. I can schedule the washing machine, dishwasher or EV charger, "
                    "or answer questions about price windows.");
    case RequestKind::kAnalytical:
      return analytical_policy(intent, detect_stage(request.system_prompt), steps);
    case RequestKind::kScheduling:
      return scheduling_policy(user_text, intent, steps);
  }
  return finish("Unrecognized state.", "Sorry, something went wrong.");
}

std::string scripted_specialist_policy(const ChatRequest& request) {
  const ApplianceSpec* spec = specialist_spec(request.system_prompt);
  if (!spec) return "I cannot tell which appliance I am responsible for.";
  const std::string call = fmt::format(
      "Thought: I call the calculator exactly once with the cycle length.\n"
      "calculate_window_sums(prices=<context prices>, window_size={})",
      spec->duration_slots);

  const std::string* tool_result = nullptr;
  for (const auto& m : request.messages) {
    if (m.role == Role::kUser && m.content.find("sums=[") != std::string::npos) tool_result = &m.content;
  }
  if (!tool_result) return call;

  const auto sums = capture_list(*tool_result, "sums");
  static const std::regex kMinIdx(R"(min_window_index=(\d+))");
  const auto min_idx = capture_int(*tool_result, kMinIdx);
  if (sums.empty() || !min_idx || *min_idx >= static_cast<long long>(sums.size())) {
    return "The calculator output could not be read, so I cannot recommend a window.";
  }

  // Deadlines from the context; the EV prompt assumes 07:00 when none is given.
  int deadline = spec->id == ApplianceId::kEvCharger ? 28 : kSlotsPerDay;
  static const std::regex kFinishBy(R"(finish by slot (\d+))", std::regex::icase);
  const std::string& context = request.messages.front().content;
  for (auto it = std::sregex_iterator(context.begin(), context.end(), kFinishBy); it != std::sregex_iterator(); ++it) {
    if (const auto v = text::parse_int((*it)[1].str()); v && *v < deadline) deadline = static_cast<int>(*v);
  }
  const int latest = std::min(static_cast<int>(sums.size()) - 1, deadline - spec->duration_slots);
  if (latest < 0) {
    return fmt::format("No window of {} slots can finish by slot {}, so there is no valid recommendation.",
                       spec->duration_slots, deadline);
  }
  int best = static_cast<int>(*min_idx);
  std::string reasoning = "min_window_index is the cheapest continuous window of the day.";
  if (best > latest) {
    best = 0;
    for (int i = 1; i <= latest; ++i) {
      if (sums[i] < sums[best] - kSumTolerance) best = i;
    }
    reasoning = fmt::format("The global minimum at slot {} misses the deadline; this is the cheapest window "
                            "ending by slot {} ({}).",
                            *min_idx, deadline, end_time(deadline));
  }
  return fmt::format("Thought: The calculator returned min_window_index={}.\n\n{}", *min_idx,
                     recommendation_block(*spec, best, sums[best], reasoning));
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  ++calls_;
  ChatResponse r;
  r.content = request.system_prompt.find(kOrchestratorHeader) != std::string::npos
                  ? scripted_orchestrator_policy(request)
                  : scripted_specialist_policy(request);
  r.prompt_tokens = count_prompt_tokens(request);
  r.completion_tokens = static_cast<int>(text::word_count(r.content));
  r.latency_ms = 0;  // keeps responses bit-identical across calls
  return r;
}

nlohmann::json to_chat_completions_body(const ChatRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return {{"model", request.model_id},
          {"messages", std::move(messages)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

}  // namespace hems::llm
