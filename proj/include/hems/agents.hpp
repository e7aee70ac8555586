// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hems/action.hpp"
#include "hems/clock.hpp"
#include "hems/llm.hpp"
#include "hems/prompts.hpp"
#include "hems/providers.hpp"
#include "hems/schedule.hpp"

namespace hems {

inline constexpr int kDefaultIterationCap = 15;
inline constexpr int kDefaultEvFinishSlot = 28;  // 07:00
inline constexpr int kCalendarBufferSlots = 2;   // leave 30 minutes before the event

enum class RunOutcome { kFinished, kAborted, kIterationCap, kRejectedByGateway };
std::string_view to_string(RunOutcome outcome);
std::optional<RunOutcome> parse_outcome(std::string_view text);

struct Iteration {
  int index = 0;  // 1-based
  std::string timestamp;
  std::string completion;  // raw model output
  std::string thought;
  std::optional<protocol::ActionCommand> action;
  std::optional<std::string> protocol_error;
  std::string observation;
  std::vector<std::string> warnings;
  int prompt_tokens = 0;      // orchestrator call plus any specialist calls
  int completion_tokens = 0;
  int backend_calls = 0;
  long long latency_ms = 0;
};

struct RunTrace {
  std::string run_id;
  std::string scenario;
  std::string request;  // original user text
  std::string client_id;
  PromptStage stage = PromptStage::kExplicitWorkflow;
  std::string backend;
  std::string model_id;
  Date market_date{};
  std::string zone = "AT";
  std::string started_at;
  std::vector<Iteration> iterations;
  std::vector<BinarySchedule> schedules;
  std::vector<DeadlineConstraint> deadlines;
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  long long wall_time_ms = 0;
  RunOutcome outcome = RunOutcome::kAborted;
  std::string final_summary;
  std::string error;
  std::optional<nlohmann::json> verdict;  // gateway verdict for rejected runs

  long long total_tokens() const noexcept { return prompt_tokens + completion_tokens; }
  const BinarySchedule* schedule_for(ApplianceId id) const;
};

nlohmann::json to_json(const Iteration& it);
Iteration iteration_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeadlineConstraint& d);
DeadlineConstraint deadline_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunTrace& trace);
RunTrace run_trace_from_json(const nlohmann::json& j);

// "run-YYYYMMDDTHHMMSS-xxxxxx" with a random suffix.
std::string make_run_id(TimePoint now);

// First event starting on `day` (at or after 00:00) sets finish_by = its slot
// minus the buffer; the result is the minimum of that and the 07:00 default.
// Throws kInfeasible when the EV can no longer fit before the event.
DeadlineConstraint derive_calendar_deadline(std::span<const CalendarEvent> events, Date day);

struct SpecialistUsage {
  int calls = 0;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  long long latency_ms = 0;
};

// Single-turn specialist: one completion that asks for the window-sum tool,
// the tool result fed back, one completion with the recommendation. An
// unreadable recommendation is re-asked once, then kSpecialistFailure.
protocol::AgentRecommendation run_specialist(ApplianceId agent, const PriceCurve& prices,
                                             const std::optional<DeadlineConstraint>& deadline,
                                             std::string_view user_request, llm::LlmBackend& backend,
                                             SpecialistUsage* usage = nullptr, const std::string& model_id = {},
                                             const PromptLibrary& prompts = PromptLibrary::builtin());

// Hooks for persistence and live progress. on_schedule runs before the
// schedule counts as committed; throwing there rejects the SCHEDULE action.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_start(const RunTrace&) {}
  virtual void on_iteration(const RunTrace&, const Iteration&) {}
  virtual void on_schedule(const RunTrace&, const BinarySchedule&) {}
  virtual void on_finish(const RunTrace&) {}
};

struct OrchestratorConfig {
  PromptStage stage = PromptStage::kExplicitWorkflow;
  int iteration_cap = kDefaultIterationCap;
  std::string model_id = "scripted";
  std::string run_id;  // generated when empty
  std::string scenario;
  std::string client_id;
  std::string request_text;  // the unwrapped request, for the trace and deadlines
  Date market_date{};
  std::string zone = "AT";
};

struct OrchestratorDeps {
  llm::LlmBackend& backend;
  PriceProvider& prices;
  CalendarProvider* calendar = nullptr;
  const Clock& clock;
  RunObserver* observer = nullptr;
  const PromptLibrary* prompts = nullptr;  // builtin when null
};

// Mutable state of one run, visible to the dispatcher.
struct Session {
  Session(const OrchestratorConfig& config, OrchestratorDeps& deps, RunTrace& trace);

  const OrchestratorConfig& config;
  OrchestratorDeps& deps;
  RunTrace& trace;
  std::optional<PriceCurve> prices;
  int price_fetches = 0;
  SpecialistUsage usage;  // specialist calls of the current iteration

  std::optional<DeadlineConstraint> deadline_for(ApplianceId id) const;
};

struct DispatchResult {
  std::string observation;
  bool terminal = false;
};

// Executes one action. Tool failures come back as "Observation: ERROR: ..."
// and never throw.
DispatchResult dispatch(const protocol::ActionCommand& cmd, Session& session);

// ReAct loop over an already validated, wrapped request.
RunTrace run_orchestration(std::string_view wrapped_request, const OrchestratorConfig& config,
                           OrchestratorDeps& deps);

}  // namespace hems
