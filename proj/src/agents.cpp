// SPDX-License-Identifier: Apache-2.0
#include "hems/agents.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "hems/error.hpp"
#include "hems/intent.hpp"
#include "hems/oracle.hpp"
#include "hems/text.hpp"

namespace hems {
namespace {

using protocol::ActionCommand;
using protocol::Verb;

std::string end_time(int end_slot) {
  return end_slot >= kSlotsPerDay ? std::string("24:00") : slot_to_time(end_slot);
}

std::optional<DeadlineOrigin> parse_origin(std::string_view s) {
  if (s == "default") return DeadlineOrigin::kDefault;
  if (s == "calendar") return DeadlineOrigin::kCalendar;
  if (s == "user") return DeadlineOrigin::kUser;
  return std::nullopt;
}

void add_usage(Iteration& it, const SpecialistUsage& u) {
  it.prompt_tokens += u.prompt_tokens;
  it.completion_tokens += u.completion_tokens;
  it.backend_calls += u.calls;
  it.latency_ms += u.latency_ms;
}

llm::ChatResponse complete_counted(llm::LlmBackend& backend, const llm::ChatRequest& req, SpecialistUsage* usage) {
  auto resp = backend.complete(req);
  if (usage) {
    ++usage->calls;
    usage->prompt_tokens += resp.prompt_tokens;
    usage->completion_tokens += resp.completion_tokens;
    usage->latency_ms += resp.latency_ms;
  }
  return resp;
}

const PriceCurve& require_prices(const Session& s) {
  if (!s.prices) throw Error(ErrorCode::kParameter, "prices not loaded; call GET_PRICES first");
  return *s.prices;
}

std::string dispatch_prices(Session& s) {
  if (!s.prices) {
    s.prices = s.deps.prices.fetch_prices(s.config.market_date, s.config.zone);
    ++s.price_fetches;
  }
  return protocol::render_prices(*s.prices);
}

std::string dispatch_calendar(Session& s) {
  const LocalMinutes midnight = local_midnight(s.config.market_date);
  std::vector<CalendarEvent> events;
  if (s.deps.calendar) events = s.deps.calendar->fetch_events(midnight, midnight + std::chrono::days{1});

  std::string listing;
  for (const auto& e : events) {
    listing += fmt::format("\n- {} {}..{}", e.title, format_local(e.start), format_local(e.end));
  }
  if (listing.empty()) listing = "\n- none";

  auto& deadlines = s.trace.deadlines;
  try {
    const auto d = derive_calendar_deadline(events, s.config.market_date);
    if (d.origin == DeadlineOrigin::kCalendar) deadlines.push_back(d);
    const int effective = s.deadline_for(ApplianceId::kEvCharger)->finish_by_slot;
    return protocol::render_text(
        fmt::format("calendar events on {}:{}\nEV deadline: finish by slot {} ({}); latest EV start slot {}",
                    to_iso(s.config.market_date), listing, effective, end_time(effective),
                    std::min(effective - canonical_spec(ApplianceId::kEvCharger).duration_slots,
                             canonical_spec(ApplianceId::kEvCharger).max_start_slot)));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInfeasible) throw;
    // Block the EV for the rest of the run as well.
    const LocalMinutes day_end = midnight + std::chrono::days{1};
    for (const auto& ev : events) {
      if (ev.start >= midnight && ev.start < day_end) {
        const int slot = static_cast<int>((ev.start - midnight).count() / kMinutesPerSlot);
        deadlines.push_back({ApplianceId::kEvCharger, std::max(0, slot - kCalendarBufferSlots), DeadlineOrigin::kCalendar});
        break;
      }
    }
    return protocol::render_error(fmt::format("{}; calendar events:{}", e.what(), listing));
  }
}

std::string dispatch_window_sums(const ActionCommand& cmd, Session& s) {
  const auto& prices = require_prices(s);
  return protocol::render_window_sums(calculate_window_sums(prices, static_cast<int>(cmd.int_arg("window_size"))));
}

std::string dispatch_call_agent(const ActionCommand& cmd, Session& s) {
  const auto id = parse_agent_name(*cmd.arg("agent_name"));
  if (!id) {
    throw Error(ErrorCode::kParameter,
                fmt::format("unknown agent '{}'; use washing_machine_agent, dishwasher_agent or ev_charger_agent",
                            *cmd.arg("agent_name")));
  }
  const auto& prices = require_prices(s);
  const auto rec = run_specialist(*id, prices, s.deadline_for(*id), *cmd.arg("user_request"), s.deps.backend, &s.usage,
                                  s.config.model_id, s.deps.prompts ? *s.deps.prompts : PromptLibrary::builtin());
  return protocol::render_recommendation(rec);
}

std::string dispatch_schedule(const ActionCommand& cmd, Session& s) {
  const std::string& name = *cmd.arg("appliance_id");
  auto id = parse_appliance_id(name);
  if (!id) id = parse_agent_name(name);
  if (!id) throw Error(ErrorCode::kParameter, fmt::format("unknown appliance_id '{}'", name));
  const auto& spec = canonical_spec(*id);
  const auto& prices = require_prices(s);

  if (s.trace.schedule_for(*id)) {
    throw Error(ErrorCode::kDuplicateSchedule,
                fmt::format("duplicate_schedule: {} is already scheduled in this run", to_string(*id)));
  }
  const long long duration = cmd.int_arg("duration_slots");
  if (duration != spec.duration_slots) {
    throw Error(ErrorCode::kParameter,
                fmt::format("duration_slots for {} must be {}, got {}", to_string(*id), spec.duration_slots, duration));
  }
  const long long start = cmd.int_arg("start_slot");
  if (start < 0 || start >= kSlotsPerDay) {
    throw Error(ErrorCode::kRange, fmt::format("start_slot {} outside 0..95", start));
  }
  auto schedule = schedule_from_start(spec, SlotIndex(static_cast<int>(start)), prices, *cmd.arg("reasoning"));
  for (const auto& d : s.trace.deadlines) {
    if (d.appliance_id == *id && !validate_schedule(schedule, d)) {
      throw Error(ErrorCode::kInfeasibleStart,
                  fmt::format("{} starting at slot {} ends at slot {}, after the {} deadline (finish by slot {})",
                              to_string(*id), start, schedule.end_slot(), to_string(d.origin), d.finish_by_slot));
    }
  }
  if (s.deps.observer) s.deps.observer->on_schedule(s.trace, schedule);
  s.trace.schedules.push_back(schedule);
  return protocol::render_schedule(schedule);
}

std::string specialist_context(const PriceCurve& prices, const std::optional<DeadlineConstraint>& deadline,
                               std::string_view user_request) {
  std::string out = fmt::format("Market date: {}\nPrices in EUR/MWh for slots 0..95 (15-minute resolution):\n{}",
                                to_iso(prices.market_date()), protocol::format_price_list(prices.prices()));
  if (deadline) {
    out += fmt::format("\nDeadline: finish by slot {} ({})", deadline->finish_by_slot, end_time(deadline->finish_by_slot));
  }
  out += fmt::format("\nRequest: {}", user_request);
  return out;
}

}  // namespace

std::string_view to_string(RunOutcome outcome) {
  switch (outcome) {
    case RunOutcome::kFinished: return "finished";
    case RunOutcome::kAborted: return "aborted";
    case RunOutcome::kIterationCap: return "iteration_cap";
    case RunOutcome::kRejectedByGateway: return "rejected_by_gateway";
  }
  return "aborted";
}

std::optional<RunOutcome> parse_outcome(std::string_view text) {
  for (const auto o : {RunOutcome::kFinished, RunOutcome::kAborted, RunOutcome::kIterationCap,
                       RunOutcome::kRejectedByGateway}) {
    if (to_string(o) == text) return o;
  }
  return std::nullopt;
}

const BinarySchedule* RunTrace::schedule_for(ApplianceId id) const {
  for (const auto& s : schedules) {
    if (s.appliance_id == id) return &s;
  }
  return nullptr;
}

nlohmann::json to_json(const Iteration& it) {
  nlohmann::json action = nullptr;
  if (it.action) {
    nlohmann::json args = nlohmann::json::object();
    for (const auto& [k, v] : it.action->args) args[k] = v;
    action = {{"verb", protocol::to_string(it.action->verb)},
              {"args", std::move(args)},
              {"raw_line", protocol::serialize_action(*it.action)}};
  }
  return {{"index", it.index},
          {"timestamp", it.timestamp},
          {"completion", it.completion},
          {"thought", it.thought},
          {"action", std::move(action)},
          {"protocol_error", it.protocol_error ? nlohmann::json(*it.protocol_error) : nlohmann::json(nullptr)},
          {"observation", it.observation},
          {"warnings", it.warnings},
          {"prompt_tokens", it.prompt_tokens},
          {"completion_tokens", it.completion_tokens},
          {"backend_calls", it.backend_calls},
          {"latency_ms", it.latency_ms}};
}

Iteration iteration_from_json(const nlohmann::json& j) {
  Iteration it;
  it.index = j.at("index").get<int>();
  it.timestamp = j.value("timestamp", "");
  it.completion = j.value("completion", "");
  it.thought = j.value("thought", "");
  if (j.contains("action") && !j.at("action").is_null()) {
    auto parsed = protocol::parse_action(j.at("action").at("raw_line").get<std::string>());
    if (!parsed.ok()) throw Error(ErrorCode::kParse, "stored action line does not parse");
    it.action = std::move(*parsed.command);
  }
  if (j.contains("protocol_error") && !j.at("protocol_error").is_null()) {
    it.protocol_error = j.at("protocol_error").get<std::string>();
  }
  it.observation = j.value("observation", "");
  it.warnings = j.value("warnings", std::vector<std::string>{});
  it.prompt_tokens = j.value("prompt_tokens", 0);
  it.completion_tokens = j.value("completion_tokens", 0);
  it.backend_calls = j.value("backend_calls", 0);
  it.latency_ms = j.value("latency_ms", 0LL);
  return it;
}

nlohmann::json to_json(const DeadlineConstraint& d) {
  return {{"appliance_id", to_string(d.appliance_id)},
          {"finish_by_slot", d.finish_by_slot},
          {"origin", to_string(d.origin)}};
}

DeadlineConstraint deadline_from_json(const nlohmann::json& j) {
  const auto id = parse_appliance_id(j.at("appliance_id").get<std::string>());
  const auto origin = parse_origin(j.value("origin", "default"));
  if (!id || !origin) throw Error(ErrorCode::kParse, "bad deadline record");
  return {*id, j.at("finish_by_slot").get<int>(), *origin};
}

nlohmann::json to_json(const RunTrace& t) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& it : t.iterations) iterations.push_back(to_json(it));
  nlohmann::json schedules = nlohmann::json::array();
  for (const auto& s : t.schedules) schedules.push_back(to_json(s));
  nlohmann::json deadlines = nlohmann::json::array();
  for (const auto& d : t.deadlines) deadlines.push_back(to_json(d));
  return {{"run_id", t.run_id},
          {"scenario", t.scenario},
          {"request", t.request},
          {"client_id", t.client_id},
          {"stage", to_string(t.stage)},
          {"backend", t.backend},
          {"model_id", t.model_id},
          {"market_date", to_iso(t.market_date)},
          {"zone", t.zone},
          {"started_at", t.started_at},
          {"outcome", to_string(t.outcome)},
          {"final_summary", t.final_summary},
          {"error", t.error},
          {"iteration_count", t.iterations.size()},
          {"iterations", std::move(iterations)},
          {"schedules", std::move(schedules)},
          {"deadlines", std::move(deadlines)},
          {"prompt_tokens", t.prompt_tokens},
          {"completion_tokens", t.completion_tokens},
          {"total_tokens", t.total_tokens()},
          {"wall_time_ms", t.wall_time_ms},
          {"verdict", t.verdict ? *t.verdict : nlohmann::json(nullptr)}};
}

RunTrace run_trace_from_json(const nlohmann::json& j) {
  try {
    RunTrace t;
    t.run_id = j.at("run_id").get<std::string>();
    t.scenario = j.value("scenario", "");
    t.request = j.value("request", "");
    t.client_id = j.value("client_id", "");
    t.stage = parse_stage(j.value("stage", "explicit_workflow")).value_or(PromptStage::kExplicitWorkflow);
    t.backend = j.value("backend", "");
    t.model_id = j.value("model_id", "");
    if (const auto d = parse_iso_date(j.value("market_date", ""))) t.market_date = *d;
    t.zone = j.value("zone", "AT");
    t.started_at = j.value("started_at", "");
    t.outcome = parse_outcome(j.value("outcome", "aborted")).value_or(RunOutcome::kAborted);
    t.final_summary = j.value("final_summary", "");
    t.error = j.value("error", "");
    for (const auto& it : j.value("iterations", nlohmann::json::array())) t.iterations.push_back(iteration_from_json(it));
    for (const auto& s : j.value("schedules", nlohmann::json::array())) t.schedules.push_back(schedule_from_json(s));
    for (const auto& d : j.value("deadlines", nlohmann::json::array())) t.deadlines.push_back(deadline_from_json(d));
    t.prompt_tokens = j.value("prompt_tokens", 0LL);
    t.completion_tokens = j.value("completion_tokens", 0LL);
    t.wall_time_ms = j.value("wall_time_ms", 0LL);
    if (j.contains("verdict") && !j.at("verdict").is_null()) t.verdict = j.at("verdict");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("run trace: {}", e.what()));
  }
}

std::string make_run_id(TimePoint now) {
  using namespace std::chrono;
  const auto secs = floor<seconds>(now);
  const auto day = floor<days>(secs);
  const year_month_day ymd{day};
  const hh_mm_ss hms{secs - day};
  thread_local std::mt19937_64 rng{std::random_device{}()};
  return fmt::format("run-{:04d}{:02d}{:02d}T{:02d}{:02d}{:02d}-{:06x}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count(), rng() & 0xFFFFFF);
}

DeadlineConstraint derive_calendar_deadline(std::span<const CalendarEvent> events, Date day) {
  DeadlineConstraint result{ApplianceId::kEvCharger, kDefaultEvFinishSlot, DeadlineOrigin::kDefault};
  const LocalMinutes midnight = local_midnight(day);
  const LocalMinutes day_end = midnight + std::chrono::days{1};
  const CalendarEvent* first = nullptr;
  for (const auto& e : events) {
    if (e.start >= midnight && e.start < day_end && (!first || e.start < first->start)) first = &e;
  }
  if (!first) return result;

  const int event_slot = static_cast<int>((first->start - midnight).count() / kMinutesPerSlot);
  const int finish_by = event_slot - kCalendarBufferSlots;
  const int needed = canonical_spec(ApplianceId::kEvCharger).duration_slots;
  if (finish_by < needed) {
    throw Error(ErrorCode::kInfeasible,
                fmt::format("infeasible EV deadline: '{}' starts at {}, so charging must finish by slot {} but needs {} "
                            "slots",
                            first->title, slot_to_time(event_slot), finish_by, needed));
  }
  if (finish_by < result.finish_by_slot) result = {ApplianceId::kEvCharger, finish_by, DeadlineOrigin::kCalendar};
  return result;
}

protocol::AgentRecommendation run_specialist(ApplianceId agent, const PriceCurve& prices,
                                             const std::optional<DeadlineConstraint>& deadline,
                                             std::string_view user_request, llm::LlmBackend& backend,
                                             SpecialistUsage* usage, const std::string& model_id,
                                             const PromptLibrary& prompts) {
  const auto& spec = canonical_spec(agent);
  const std::string name = agent_name(agent);
  llm::ChatRequest req;
  req.model_id = model_id;
  req.system_prompt = prompts.specialist(agent);
  req.messages.push_back({llm::Role::kUser, specialist_context(prices, deadline, user_request)});

  auto resp = complete_counted(backend, req, usage);
  std::vector<std::string> notes;
  if (resp.content.find("calculate_window_sums") != std::string::npos) {
    // The tool always runs with the appliance's cycle length.
    const auto ws = calculate_window_sums(prices, spec.duration_slots);
    req.messages.push_back({llm::Role::kAssistant, resp.content});
    req.messages.push_back({llm::Role::kUser, protocol::render_window_sums(ws)});
    resp = complete_counted(backend, req, usage);
  }

  const auto parse = [&](const std::string& text) {
    auto rec = protocol::parse_recommendation(text, spec, name);
    if (rec.start_slot.value() > spec.max_start_slot) {
      rec.notes.push_back(fmt::format("slot {} is past the latest start {}", rec.start_slot.value(), spec.max_start_slot));
    }
    return rec;
  };
  try {
    return parse(resp.content);
  } catch (const Error& first) {
    if (first.code() != ErrorCode::kParse) throw;
    req.messages.push_back({llm::Role::kAssistant, resp.content});
    req.messages.push_back({llm::Role::kUser,
                            protocol::render_error(fmt::format(
                                "{}. End your reply with the structured recommendation block.", first.what()))});
    const auto retry = complete_counted(backend, req, usage);
    try {
      return parse(retry.content);
    } catch (const Error& second) {
      if (second.code() != ErrorCode::kParse) throw;
      throw Error(ErrorCode::kSpecialistFailure, fmt::format("specialist_failure: {}: {}", name, second.what()));
    }
  }
}

Session::Session(const OrchestratorConfig& c, OrchestratorDeps& d, RunTrace& t) : config(c), deps(d), trace(t) {}

std::optional<DeadlineConstraint> Session::deadline_for(ApplianceId id) const {
  std::optional<DeadlineConstraint> best;
  for (const auto& d : trace.deadlines) {
    if (d.appliance_id == id && (!best || d.finish_by_slot < best->finish_by_slot)) best = d;
  }
  return best;
}

DispatchResult dispatch(const ActionCommand& cmd, Session& s) {
  try {
    switch (cmd.verb) {
      case Verb::kGetPrices: return {dispatch_prices(s)};
      case Verb::kGetCalendarConstraint: return {dispatch_calendar(s)};
      case Verb::kCalculateWindowSums: return {dispatch_window_sums(cmd, s)};
      case Verb::kCallAgent: return {dispatch_call_agent(cmd, s)};
      case Verb::kSchedule: return {dispatch_schedule(cmd, s)};
      case Verb::kFinish: return {{}, true};
    }
    return {protocol::render_error("unsupported action")};
  } catch (const Error& e) {
    return {protocol::render_error(e.what())};
  } catch (const std::exception& e) {
    return {protocol::render_error(fmt::format("tool failed: {}", e.what()))};
  }
}

RunTrace run_orchestration(std::string_view wrapped_request, const OrchestratorConfig& config, OrchestratorDeps& deps) {
  const PromptLibrary& prompts = deps.prompts ? *deps.prompts : PromptLibrary::builtin();
  const auto started = deps.clock.now();

  RunTrace trace;
  trace.run_id = config.run_id.empty() ? make_run_id(started) : config.run_id;
  trace.scenario = config.scenario;
  trace.request = config.request_text;
  trace.client_id = config.client_id;
  trace.stage = config.stage;
  trace.backend = deps.backend.name();
  trace.model_id = config.model_id;
  trace.market_date = config.market_date;
  trace.zone = config.zone;
  trace.started_at = format_iso_utc(started);

  // Fixed constraints known before the model acts: the EV's 07:00 default
  // and any "by <time>" the user stated for the appliances they named.
  trace.deadlines.push_back({ApplianceId::kEvCharger, kDefaultEvFinishSlot, DeadlineOrigin::kDefault});
  if (const auto user = extract_user_deadline(config.request_text)) {
    for (const auto id : classify_request(config.request_text).appliances) {
      trace.deadlines.push_back({id, std::clamp(*user, 0, kSlotsPerDay), DeadlineOrigin::kUser});
    }
  }

  if (deps.observer) deps.observer->on_start(trace);
  Session session(config, deps, trace);

  llm::ChatRequest req;
  req.model_id = config.model_id;
  req.system_prompt = prompts.orchestrator(config.stage);
  req.messages.push_back({llm::Role::kUser, std::string(wrapped_request)});

  bool done = false;
  for (int i = 1; i <= config.iteration_cap && !done; ++i) {
    Iteration it;
    it.index = i;
    it.timestamp = format_iso_utc(deps.clock.now());
    llm::ChatResponse resp;
    try {
      resp = deps.backend.complete(req);
    } catch (const Error& e) {
      trace.outcome = RunOutcome::kAborted;
      trace.error = e.what();
      done = true;
      break;
    }
    it.completion = resp.content;
    it.prompt_tokens = resp.prompt_tokens;
    it.completion_tokens = resp.completion_tokens;
    it.latency_ms = resp.latency_ms;
    it.backend_calls = 1;

    auto parsed = protocol::parse_action(resp.content);
    it.thought = parsed.thought;
    it.warnings = parsed.warnings;
    if (!parsed.ok()) {
      it.protocol_error = fmt::format("{}: {}", protocol::to_string(parsed.error->kind), parsed.error->message);
      it.observation = protocol::render_error(
          fmt::format("{}. Reply with exactly one line of the form ACTION: <VERB> | key=value.", *it.protocol_error));
    } else {
      it.action = *parsed.command;
      session.usage = {};
      const auto result = dispatch(*parsed.command, session);
      add_usage(it, session.usage);
      it.observation = result.observation;
      if (result.terminal) {
        trace.outcome = RunOutcome::kFinished;
        trace.final_summary = *parsed.command->arg("summary");
        done = true;
      }
    }
    trace.prompt_tokens += it.prompt_tokens;
    trace.completion_tokens += it.completion_tokens;
    req.messages.push_back({llm::Role::kAssistant, resp.content});
    if (!done) req.messages.push_back({llm::Role::kUser, it.observation});
    trace.iterations.push_back(std::move(it));
    if (deps.observer) deps.observer->on_iteration(trace, trace.iterations.back());
  }
  if (!done) {
    trace.outcome = RunOutcome::kIterationCap;
    trace.error = fmt::format("no FINISH within {} iterations", config.iteration_cap);
  }
  trace.wall_time_ms = (deps.clock.now() - started).count();
  if (deps.observer) deps.observer->on_finish(trace);
  return trace;
}

}  // namespace hems
