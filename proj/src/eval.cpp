// SPDX-License-Identifier: Apache-2.0
#include "hems/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include <fmt/format.h>

#include "hems/error.hpp"
#include "hems/oracle.hpp"
#include "hems/security.hpp"
#include "hems/text.hpp"

namespace hems::eval {
namespace fs = std::filesystem;

namespace {

constexpr const char* kColumns[] = {"Scenario",   "Stage",     "Success",   "WM Optimal",   "DW Optimal", "EV Optimal",
                                    "Avg Iter.",  "Avg Tokens", "Avg Time (s)", "Tool Used", "Correct"};

nlohmann::json fraction_json(const Fraction& f) { return {{"num", f.num}, {"den", f.den}}; }

Fraction fraction_from_json(const nlohmann::json& j) { return {j.at("num").get<int>(), j.at("den").get<int>()}; }

std::string kind_label(const RequestIntent& intent) {
  if (intent.kind == RequestKind::kAnalytical) return "analytical_query";
  if (intent.kind == RequestKind::kScheduling) {
    return intent.appliances.size() > 1 ? "multi_appliance" : "single_appliance";
  }
  return "other";
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kSingleAppliance: return "single_appliance";
    case ScenarioKind::kMultiAppliance: return "multi_appliance";
    case ScenarioKind::kAnalyticalQuery: return "analytical_query";
  }
  return "single_appliance";
}

std::optional<ScenarioKind> parse_kind(std::string_view text) {
  for (const auto k : {ScenarioKind::kSingleAppliance, ScenarioKind::kMultiAppliance, ScenarioKind::kAnalyticalQuery}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::vector<ScenarioSpec> default_scenarios(const fs::path& prices, const fs::path& calendar, int repetitions) {
  std::vector<ScenarioSpec> out;
  out.push_back({ScenarioKind::kSingleAppliance, "Schedule my washing machine at the cheapest time",
                 PromptStage::kExplicitWorkflow, repetitions, prices, calendar});
  out.push_back({ScenarioKind::kMultiAppliance, "Schedule all flexible loads", PromptStage::kExplicitWorkflow,
                 repetitions, prices, calendar});
  for (const auto stage : {PromptStage::kBaseline, PromptStage::kMinimalGuidance, PromptStage::kExplicitWorkflow}) {
    out.push_back({ScenarioKind::kAnalyticalQuery, "What is the most expensive 3-hour window today?", stage,
                   repetitions, prices, calendar});
  }
  return out;
}

std::string Fraction::render() const {
  if (den == 0) return "0/0 (---)";
  return fmt::format("{}/{} ({}%)", num, den, static_cast<int>(std::lround(100.0 * num / den)));
}

OracleView build_oracle(const PriceCurve& prices, CalendarProvider* calendar, std::string_view request) {
  OracleView view{prices, {}, true};
  view.deadlines.push_back({ApplianceId::kEvCharger, kDefaultEvFinishSlot, DeadlineOrigin::kDefault});
  if (calendar) {
    const auto midnight = local_midnight(prices.market_date());
    const auto events = calendar->fetch_events(midnight, midnight + std::chrono::days{1});
    try {
      view.deadlines.push_back(derive_calendar_deadline(events, prices.market_date()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
      view.ev_feasible = false;
    }
  }
  if (const auto user = extract_user_deadline(request)) {
    for (const auto id : classify_request(request).appliances) {
      view.deadlines.push_back({id, std::clamp(*user, 0, kSlotsPerDay), DeadlineOrigin::kUser});
    }
  }
  return view;
}

std::optional<int> extract_reported_start(std::string_view summary) {
  const std::string s(summary);
  static const std::regex kSlot(R"(\bslot\s+(\d{1,2})\b)", std::regex::icase);
  static const std::regex kTime(R"(\b(\d{1,2}):(\d{2})\b)");
  std::smatch m;
  if (std::regex_search(s, m, kSlot)) {
    const int v = std::stoi(m[1].str());
    if (v < kSlotsPerDay) return v;
  }
  if (std::regex_search(s, m, kTime)) {
    const int h = std::stoi(m[1].str());
    const int mm = std::stoi(m[2].str());
    if (h < 24 && mm < 60) return h * 4 + mm / kMinutesPerSlot;
  }
  return std::nullopt;
}

RunRecord evaluate_run(const RunTrace& trace, const OracleView& oracle, const RequestIntent& intent) {
  RunRecord r;
  r.run_id = trace.run_id;
  r.outcome = trace.outcome;
  r.iterations = static_cast<int>(trace.iterations.size());
  r.tokens = trace.total_tokens();
  r.wall_time_ms = trace.wall_time_ms;

  for (const auto& s : trace.schedules) {
    r.scheduled[s.appliance_id] = s.start_slot.value();
    bool optimal = false;
    try {
      const auto best = optimal_start(oracle.prices, canonical_spec(s.appliance_id), oracle.deadlines);
      optimal = !(s.appliance_id == ApplianceId::kEvCharger && !oracle.ev_feasible) && best.start == s.start_slot;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
    }
    r.optimal[s.appliance_id] = optimal;
  }

  if (intent.kind == RequestKind::kAnalytical) {
    r.analytical = true;
    r.tool_used = std::any_of(trace.iterations.begin(), trace.iterations.end(), [](const Iteration& it) {
      return it.action && it.action->verb == protocol::Verb::kCalculateWindowSums;
    });
    if (trace.outcome == RunOutcome::kFinished) r.reported_start = extract_reported_start(trace.final_summary);
    const auto ws = calculate_window_sums(oracle.prices, intent.window_slots);
    const int expected = intent.query == WindowQuery::kMostExpensive ? ws.max_window_index : ws.min_window_index;
    r.correct = r.reported_start && *r.reported_start == expected;
    r.success = trace.outcome == RunOutcome::kFinished;
  } else {
    r.success = trace.outcome == RunOutcome::kFinished && !intent.appliances.empty() &&
                std::all_of(intent.appliances.begin(), intent.appliances.end(),
                            [&](ApplianceId id) { return r.scheduled.count(id) > 0; });
  }
  return r;
}

ScenarioReport aggregate(std::string scenario, std::string stage, std::vector<RunRecord> records) {
  ScenarioReport rep;
  rep.scenario = std::move(scenario);
  rep.stage = std::move(stage);
  rep.runs = static_cast<int>(records.size());
  double iters = 0;
  double tokens = 0;
  double ms = 0;
  for (const auto& r : records) {
    ++rep.success.den;
    rep.success.num += r.success;
    for (const auto& [id, ok] : r.optimal) {
      Fraction& f = id == ApplianceId::kWashingMachine ? rep.wm_optimal
                    : id == ApplianceId::kDishwasher   ? rep.dw_optimal
                                                       : rep.ev_optimal;
      ++f.den;
      f.num += ok;
    }
    if (r.analytical) {
      ++rep.tool_used.den;
      rep.tool_used.num += r.tool_used;
      ++rep.correct.den;
      rep.correct.num += r.correct;
    }
    iters += r.iterations;
    tokens += static_cast<double>(r.tokens);
    ms += static_cast<double>(r.wall_time_ms);
  }
  if (rep.runs > 0) {
    rep.avg_iterations = iters / rep.runs;
    rep.avg_tokens = tokens / rep.runs;
    rep.avg_time_s = ms / 1000.0 / rep.runs;
  }
  rep.records = std::move(records);
  return rep;
}

ScenarioReport run_scenario(const ScenarioSpec& spec, EvalContext& ctx) {
  if (spec.repetitions < 1) throw Error(ErrorCode::kParameter, "repetitions must be at least 1");
  const auto fixture = load_price_fixture(spec.prices_path);
  FixturePriceProvider prices;
  prices.add(fixture);
  std::optional<FixtureCalendarProvider> calendar;
  if (!spec.calendar_path.empty()) calendar = FixtureCalendarProvider::load(spec.calendar_path, fixture.market_date);

  const auto curve = prices.fetch_prices(fixture.market_date, fixture.zone);
  const auto oracle = build_oracle(curve, calendar ? &*calendar : nullptr, spec.request);
  const auto intent = classify_request(spec.request);

  security::SecurityGateway gateway;  // content layers only; eval traffic is not rate limited
  const auto verdict = gateway.validate_content(spec.request);
  if (!verdict.accepted()) {
    throw Error(ErrorCode::kParameter, fmt::format("scenario request rejected by the gateway: {}", verdict.reason));
  }

  std::optional<StoreObserver> observer;
  if (ctx.store) observer.emplace(*ctx.store);
  std::vector<RunRecord> records;
  for (int i = 0; i < spec.repetitions; ++i) {
    OrchestratorConfig config;
    config.stage = spec.stage;
    config.model_id = ctx.model_id;
    config.scenario = std::string(to_string(spec.kind));
    config.client_id = "eval";
    config.request_text = spec.request;
    config.market_date = fixture.market_date;
    config.zone = fixture.zone;
    OrchestratorDeps deps{ctx.backend, prices, calendar ? &*calendar : nullptr, ctx.clock,
                          observer ? &*observer : nullptr, nullptr};
    const auto trace = run_orchestration(*verdict.wrapped_input, config, deps);
    records.push_back(evaluate_run(trace, oracle, intent));
  }
  return aggregate(std::string(to_string(spec.kind)), std::string(to_string(spec.stage)), std::move(records));
}

std::vector<ScenarioReport> analyze_runs(std::span<const RunTrace> runs, PriceProvider& prices,
                                         CalendarProvider* calendar) {
  std::map<std::pair<std::string, std::string>, std::vector<RunRecord>> groups;
  for (const auto& t : runs) {
    if (t.outcome == RunOutcome::kRejectedByGateway) continue;
    const auto intent = classify_request(t.request);
    std::optional<OracleView> oracle;
    try {
      oracle = build_oracle(prices.fetch_prices(t.market_date, t.zone), calendar, t.request);
    } catch (const Error&) {
      continue;  // prices for that day are no longer available
    }
    groups[{kind_label(intent), std::string(to_string(t.stage))}].push_back(evaluate_run(t, *oracle, intent));
  }
  std::vector<ScenarioReport> out;
  for (auto& [key, records] : groups) out.push_back(aggregate(key.first, key.second, std::move(records)));
  return out;
}

std::string render_table(std::span<const ScenarioReport> reports) {
  std::vector<std::vector<std::string>> rows;
  rows.emplace_back(std::begin(kColumns), std::end(kColumns));
  for (const auto& r : reports) {
    rows.push_back({r.scenario, r.stage, r.success.render(), r.wm_optimal.render(), r.dw_optimal.render(),
                    r.ev_optimal.render(), fmt::format("{:.1f}", r.avg_iterations),
                    fmt::format("{:.0f}", r.avg_tokens), fmt::format("{:.3f}", r.avg_time_s), r.tool_used.render(),
                    r.correct.render()});
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) line += " | ";
      line += fmt::format("{:<{}}", rows[i][c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (i == 0) {
      std::string rule;
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c) rule += "-+-";
        rule += std::string(width[c], '-');
      }
      out += rule + "\n";
    }
  }
  return out;
}

nlohmann::json to_json(const ScenarioReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : r.records) {
    nlohmann::json scheduled = nlohmann::json::object();
    for (const auto& [id, start] : rec.scheduled) scheduled[std::string(to_string(id))] = start;
    nlohmann::json optimal = nlohmann::json::object();
    for (const auto& [id, ok] : rec.optimal) optimal[std::string(to_string(id))] = ok;
    records.push_back({{"run_id", rec.run_id},
                       {"outcome", to_string(rec.outcome)},
                       {"iterations", rec.iterations},
                       {"tokens", rec.tokens},
                       {"wall_time_ms", rec.wall_time_ms},
                       {"success", rec.success},
                       {"scheduled", std::move(scheduled)},
                       {"optimal", std::move(optimal)},
                       {"analytical", rec.analytical},
                       {"tool_used", rec.tool_used},
                       {"reported_start", rec.reported_start ? nlohmann::json(*rec.reported_start) : nlohmann::json()},
                       {"correct", rec.correct}});
  }
  return {{"scenario", r.scenario},
          {"stage", r.stage},
          {"runs", r.runs},
          {"success", fraction_json(r.success)},
          {"wm_optimal", fraction_json(r.wm_optimal)},
          {"dw_optimal", fraction_json(r.dw_optimal)},
          {"ev_optimal", fraction_json(r.ev_optimal)},
          {"tool_used", fraction_json(r.tool_used)},
          {"correct", fraction_json(r.correct)},
          {"avg_iterations", r.avg_iterations},
          {"avg_tokens", r.avg_tokens},
          {"avg_time_s", r.avg_time_s},
          {"records", std::move(records)}};
}

ScenarioReport report_from_json(const nlohmann::json& j) {
  try {
    ScenarioReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.stage = j.at("stage").get<std::string>();
    r.runs = j.at("runs").get<int>();
    r.success = fraction_from_json(j.at("success"));
    r.wm_optimal = fraction_from_json(j.at("wm_optimal"));
    r.dw_optimal = fraction_from_json(j.at("dw_optimal"));
    r.ev_optimal = fraction_from_json(j.at("ev_optimal"));
    r.tool_used = fraction_from_json(j.at("tool_used"));
    r.correct = fraction_from_json(j.at("correct"));
    r.avg_iterations = j.at("avg_iterations").get<double>();
    r.avg_tokens = j.at("avg_tokens").get<double>();
    r.avg_time_s = j.at("avg_time_s").get<double>();
    for (const auto& rec : j.value("records", nlohmann::json::array())) {
      RunRecord out;
      out.run_id = rec.at("run_id").get<std::string>();
      out.outcome = parse_outcome(rec.at("outcome").get<std::string>()).value_or(RunOutcome::kAborted);
      out.iterations = rec.at("iterations").get<int>();
      out.tokens = rec.at("tokens").get<long long>();
      out.wall_time_ms = rec.at("wall_time_ms").get<long long>();
      out.success = rec.at("success").get<bool>();
      for (const auto& [k, v] : rec.at("scheduled").items()) {
        if (const auto id = parse_appliance_id(k)) out.scheduled[*id] = v.get<int>();
      }
      for (const auto& [k, v] : rec.at("optimal").items()) {
        if (const auto id = parse_appliance_id(k)) out.optimal[*id] = v.get<bool>();
      }
      out.analytical = rec.at("analytical").get<bool>();
      out.tool_used = rec.at("tool_used").get<bool>();
      if (!rec.at("reported_start").is_null()) out.reported_start = rec.at("reported_start").get<int>();
      out.correct = rec.at("correct").get<bool>();
      r.records.push_back(std::move(out));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("report JSON: {}", e.what()));
  }
}

void emit_report(std::span<const ScenarioReport> reports, const fs::path& out_dir) {
  if (reports.empty()) throw Error(ErrorCode::kParameter, "no reports to write");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw Error(ErrorCode::kIo, fmt::format("cannot create report directory {}", out_dir.string()));
  }
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : reports) all.push_back(to_json(r));
  const auto write = [](const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::trunc);
    out << body;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", path.string()));
  };
  write(out_dir / "report.txt", render_table(reports));
  write(out_dir / "report.json", all.dump(2) + "\n");
}

std::vector<ScenarioReport> read_reports(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open {}", json_path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, fmt::format("{}: {}", json_path.string(), e.what()));
  }
  std::vector<ScenarioReport> out;
  for (const auto& r : j) out.push_back(report_from_json(r));
  return out;
}

}  // namespace hems::eval
