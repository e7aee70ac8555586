// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <fstream>

#include <unistd.h>

#include "hems/error.hpp"
#include "hems/eval.hpp"
#include "hems/security.hpp"
#include "hems/store.hpp"
#include "oracles.hpp"

using namespace hems;
using namespace hems::eval;
using namespace hems::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
  static std::atomic<int> n{0};
  auto p = fs::temp_directory_path() / ("hems_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
  fs::remove_all(p);
  return p;
}

TimePoint start_time() { return TimePoint{std::chrono::sys_days{fixture_date()}.time_since_epoch()}; }

fs::path prices_path() { return source_path("fixtures/at_2025-10-15.json"); }
fs::path calendar_path() { return source_path("fixtures/office_week.json"); }

ScenarioReport run_default(ScenarioKind kind, PromptStage stage, RunStore* store = nullptr) {
  llm::ScriptedBackend b;
  ManualClock clock(start_time(), std::chrono::milliseconds{10});
  EvalContext ctx{b, clock, "scripted", store};
  for (const auto& s : default_scenarios(prices_path(), calendar_path())) {
    if (s.kind == kind && s.stage == stage) return run_scenario(s, ctx);
  }
  FAIL("no such scenario");
  return {};
}

RunTrace sample_trace() {
  FixturePriceProvider prices(prices_path());
  ManualClock clock(start_time());
  llm::ScriptedBackend b;
  OrchestratorDeps deps{b, prices, nullptr, clock};
  OrchestratorConfig cfg;
  cfg.request_text = "Schedule my washing machine";
  cfg.market_date = fixture_date();
  cfg.run_id = "run-20251015T000000-abcdef";
  return run_orchestration(security::wrap_privileged(cfg.request_text), cfg, deps);
}

}  // namespace

TEST_SUITE("store") {
  TEST_CASE("run log round trip") {
    const auto dir = scratch_dir("store");
    RunStore store(dir);
    auto t = sample_trace();
    store.begin(t);
    for (const auto& it : t.iterations) store.append_iteration(t, it);
    auto partial = store.load(t.run_id);
    REQUIRE(partial);
    CHECK_FALSE(partial->complete);
    CHECK(partial->trace.iterations.size() == t.iterations.size());
    for (const auto& s : t.schedules) store.write_schedule(t.run_id, s);
    store.finish(t);
    const auto full = store.load(t.run_id);
    REQUIRE(full);
    CHECK(full->complete);
    CHECK(to_json(full->trace) == to_json(t));
    const auto schedules = store.load_schedules(t.run_id);
    REQUIRE(schedules.size() == 1);
    CHECK(to_json(schedules[0]) == to_json(t.schedules[0]));
    fs::remove_all(dir);
  }

  TEST_CASE("listing, unknown ids and bad ids") {
    const auto dir = scratch_dir("list");
    RunStore store(dir);
    RunTrace a;
    a.run_id = "run-20251015T080000-aaaaaa";
    a.outcome = RunOutcome::kRejectedByGateway;
    RunTrace b = a;
    b.run_id = "run-20251015T090000-bbbbbb";
    store.write_complete(a);
    store.write_complete(b);
    CHECK(store.list_run_ids() == std::vector<std::string>{b.run_id, a.run_id});
    CHECK(store.load(a.run_id)->trace.outcome == RunOutcome::kRejectedByGateway);
    CHECK_FALSE(store.load("run-20251015T100000-cccccc"));
    CHECK(store.load_schedules("run-20251015T100000-cccccc").empty());
    RunTrace bad;
    bad.run_id = "../escape";
    CHECK_THROWS_AS(store.begin(bad), Error);
    fs::remove_all(dir);
  }
}

TEST_SUITE("eval") {
  TEST_CASE("fraction rendering") {
    CHECK(Fraction{5, 5}.render() == "5/5 (100%)");
    CHECK(Fraction{0, 5}.render() == "0/5 (0%)");
    CHECK(Fraction{0, 0}.render() == "0/0 (---)");
  }

  TEST_CASE("reported start extraction") {
    CHECK(extract_reported_start("window starts at Slot 26 (06:30)") == 26);
    CHECK(extract_reported_start("from 06:30 to 09:30") == 26);
    CHECK_FALSE(extract_reported_start("no idea"));
  }

  TEST_CASE("default scenarios") {
    const auto s = default_scenarios(prices_path(), calendar_path());
    CHECK(s.size() == 5);
    for (const auto& x : s) CHECK(x.repetitions == 5);
    for (const auto k : {ScenarioKind::kSingleAppliance, ScenarioKind::kMultiAppliance, ScenarioKind::kAnalyticalQuery}) {
      CHECK(parse_kind(to_string(k)) == k);
    }
  }

  TEST_CASE("single and multi appliance rows") {
    const auto single = run_default(ScenarioKind::kSingleAppliance, PromptStage::kExplicitWorkflow);
    CHECK(single.runs == 5);
    CHECK(single.success == Fraction{5, 5});
    CHECK(single.wm_optimal == Fraction{5, 5});
    CHECK(single.dw_optimal == Fraction{0, 0});
    CHECK(single.avg_iterations == doctest::Approx(4.0));

    const auto multi = run_default(ScenarioKind::kMultiAppliance, PromptStage::kExplicitWorkflow);
    CHECK(multi.success == Fraction{5, 5});
    CHECK(multi.wm_optimal == Fraction{5, 5});
    CHECK(multi.dw_optimal == Fraction{5, 5});
    CHECK(multi.ev_optimal == Fraction{5, 5});
    CHECK(multi.avg_iterations == doctest::Approx(9.0));
    CHECK(multi.avg_tokens > single.avg_tokens);
  }

  TEST_CASE("analytical rows by stage") {
    const auto base = run_default(ScenarioKind::kAnalyticalQuery, PromptStage::kBaseline);
    const auto minimal = run_default(ScenarioKind::kAnalyticalQuery, PromptStage::kMinimalGuidance);
    const auto expl = run_default(ScenarioKind::kAnalyticalQuery, PromptStage::kExplicitWorkflow);
    CHECK(base.tool_used == Fraction{0, 5});
    CHECK(base.correct == Fraction{0, 5});
    CHECK(minimal.tool_used == Fraction{5, 5});
    CHECK(minimal.correct == Fraction{0, 5});
    CHECK(expl.tool_used == Fraction{5, 5});
    CHECK(expl.correct == Fraction{5, 5});
    CHECK(base.avg_iterations == doctest::Approx(2.0));
    CHECK(expl.avg_iterations == doctest::Approx(3.0));
  }

  TEST_CASE("report files round trip and repeat exactly") {
    const auto dir = scratch_dir("report");
    std::vector<ScenarioReport> reports{run_default(ScenarioKind::kSingleAppliance, PromptStage::kExplicitWorkflow),
                                        run_default(ScenarioKind::kAnalyticalQuery, PromptStage::kBaseline)};
    emit_report(reports, dir);
    const auto txt = read_file(dir / "report.txt");
    CHECK(txt.rfind("Scenario", 0) == 0);
    CHECK(txt.find("Tool Used") != std::string::npos);
    CHECK(txt == render_table(reports));
    const auto back = read_reports(dir / "report.json");
    REQUIRE(back.size() == 2);
    CHECK(to_json(back[0]) == to_json(reports[0]));
    CHECK(render_table(back) == render_table(reports));

    std::vector<ScenarioReport> again{run_default(ScenarioKind::kSingleAppliance, PromptStage::kExplicitWorkflow),
                                      run_default(ScenarioKind::kAnalyticalQuery, PromptStage::kBaseline)};
    CHECK(render_table(again) == render_table(reports));
    fs::remove_all(dir);
  }

  TEST_CASE("report errors") {
    const auto dir = scratch_dir("report_err");
    CHECK_THROWS_AS(emit_report({}, dir), Error);
    fs::create_directories(dir);
    { std::ofstream(dir / "file") << "x"; }
    std::vector<ScenarioReport> one{ScenarioReport{}};
    try {
      emit_report(one, dir / "file" / "sub");
      FAIL("expected kIo");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kIo);
    }
    fs::remove_all(dir);
  }

  TEST_CASE("stored runs analyse into the same rows") {
    const auto dir = scratch_dir("analyze");
    RunStore store(dir);
    const auto live = run_default(ScenarioKind::kAnalyticalQuery, PromptStage::kExplicitWorkflow, &store);
    std::vector<RunTrace> traces;
    for (const auto& id : store.list_run_ids()) traces.push_back(store.load(id)->trace);
    REQUIRE(traces.size() == 5);
    FixturePriceProvider prices(prices_path());
    auto cal = FixtureCalendarProvider::load(calendar_path(), fixture_date());
    const auto rows = analyze_runs(traces, prices, &cal);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].correct == live.correct);
    CHECK(rows[0].tool_used == live.tool_used);
    fs::remove_all(dir);
  }
}
