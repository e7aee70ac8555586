// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hems/agents.hpp"
#include "hems/intent.hpp"
#include "hems/store.hpp"

namespace hems::eval {

enum class ScenarioKind { kSingleAppliance, kMultiAppliance, kAnalyticalQuery };
std::string_view to_string(ScenarioKind kind);
std::optional<ScenarioKind> parse_kind(std::string_view text);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kSingleAppliance;
  std::string request;
  PromptStage stage = PromptStage::kExplicitWorkflow;
  int repetitions = 5;
  std::filesystem::path prices_path;
  std::filesystem::path calendar_path;  // optional
};

// Single appliance, all flexible loads, and the 3-hour price question at each
// prompt stage.
std::vector<ScenarioSpec> default_scenarios(const std::filesystem::path& prices,
                                            const std::filesystem::path& calendar, int repetitions = 5);

struct Fraction {
  int num = 0;
  int den = 0;
  // "5/5 (100%)", "0/0 (---)".
  std::string render() const;
  bool operator==(const Fraction&) const = default;
};

struct RunRecord {
  std::string run_id;
  RunOutcome outcome = RunOutcome::kAborted;
  int iterations = 0;
  long long tokens = 0;
  long long wall_time_ms = 0;
  bool success = false;
  std::map<ApplianceId, int> scheduled;  // appliance -> committed start
  std::map<ApplianceId, bool> optimal;   // only for scheduled appliances
  bool analytical = false;
  bool tool_used = false;
  std::optional<int> reported_start;
  bool correct = false;
};

struct ScenarioReport {
  std::string scenario;
  std::string stage;
  int runs = 0;
  Fraction success;
  Fraction wm_optimal;
  Fraction dw_optimal;
  Fraction ev_optimal;
  Fraction tool_used;
  Fraction correct;
  double avg_iterations = 0.0;
  double avg_tokens = 0.0;
  double avg_time_s = 0.0;
  std::vector<RunRecord> records;
};

// Reference answers the runs are judged against, computed from the fixture
// and calendar alone.
struct OracleView {
  PriceCurve prices;
  std::vector<DeadlineConstraint> deadlines;
  bool ev_feasible = true;
};
OracleView build_oracle(const PriceCurve& prices, CalendarProvider* calendar, std::string_view request);

// First "Slot N" in the text, else the first HH:MM.
std::optional<int> extract_reported_start(std::string_view summary);

RunRecord evaluate_run(const RunTrace& trace, const OracleView& oracle, const RequestIntent& intent);
ScenarioReport aggregate(std::string scenario, std::string stage, std::vector<RunRecord> records);

struct EvalContext {
  llm::LlmBackend& backend;
  const Clock& clock;
  std::string model_id = "scripted";
  RunStore* store = nullptr;  // persist every run when set
};

// Throws kIo/kParse/kData when the fixtures cannot be read.
ScenarioReport run_scenario(const ScenarioSpec& spec, EvalContext& ctx);

// Aggregates stored runs by (request kind, stage) for the analytics endpoint.
std::vector<ScenarioReport> analyze_runs(std::span<const RunTrace> runs, PriceProvider& prices,
                                         CalendarProvider* calendar);

std::string render_table(std::span<const ScenarioReport> reports);
nlohmann::json to_json(const ScenarioReport& report);
ScenarioReport report_from_json(const nlohmann::json& j);

// Writes report.txt and report.json into out_dir. Throws kIo.
void emit_report(std::span<const ScenarioReport> reports, const std::filesystem::path& out_dir);
std::vector<ScenarioReport> read_reports(const std::filesystem::path& json_path);

}  // namespace hems::eval
