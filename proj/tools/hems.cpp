// SPDX-License-Identifier: Apache-2.0
// hems: oracle queries, single runs, scenario evaluation and the HTTP service.
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "hems/agents.hpp"
#include "hems/error.hpp"
#include "hems/eval.hpp"
#include "hems/net.hpp"
#include "hems/oracle.hpp"
#include "hems/security.hpp"
#include "hems/service.hpp"
#include "hems/store.hpp"

namespace fs = std::filesystem;
using namespace hems;

namespace {

struct DataOptions {
  std::string prices;
  std::string calendar;
  std::string date;
  std::string zone = "AT";
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--prices", o.prices, "Price fixture file or directory (live ENTSO-E client when omitted)");
  cmd->add_option("--calendar", o.calendar, "Calendar fixture (live calendar when HEMS_CAL_CREDENTIALS is set)");
  cmd->add_option("--date", o.date, "Market date YYYY-MM-DD (fixture date or today by default)");
  cmd->add_option("--zone", o.zone, "Bidding zone")->capture_default_str();
}

struct Providers {
  std::unique_ptr<PriceProvider> prices;
  std::unique_ptr<CalendarProvider> calendar;
  std::optional<Date> date;
};

Providers make_providers(const DataOptions& o) {
  Providers p;
  if (!o.date.empty()) {
    p.date = parse_iso_date(o.date);
    if (!p.date) throw Error(ErrorCode::kParameter, fmt::format("bad --date '{}'", o.date));
  }
  if (!o.prices.empty()) {
    auto fixture = std::make_unique<FixturePriceProvider>(o.prices);
    const auto available = fixture->available();
    if (!p.date && available.size() == 1) p.date = available.front().second;
    p.prices = std::move(fixture);
  } else {
    p.prices = std::make_unique<net::EntsoePriceProvider>(net::EntsoeConfig::from_env());
  }
  if (!p.date) p.date = std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now());
  if (!o.calendar.empty()) {
    p.calendar = std::make_unique<FixtureCalendarProvider>(FixtureCalendarProvider::load(o.calendar, *p.date));
  } else if (std::getenv("HEMS_CAL_CREDENTIALS")) {
    p.calendar = std::make_unique<net::GoogleCalendarProvider>(net::GoogleCalendarConfig::from_env());
  }
  return p;
}

std::unique_ptr<llm::LlmBackend> make_backend(const std::string& name) {
  if (name == "live") return std::make_unique<net::LiveBackend>(net::LiveBackendConfig::from_env());
  return std::make_unique<llm::ScriptedBackend>();
}

PromptStage stage_or_throw(const std::string& text) {
  const auto s = parse_stage(text);
  if (!s) throw Error(ErrorCode::kParameter, fmt::format("unknown stage '{}'", text));
  return *s;
}

nlohmann::json window_json(const WindowSums& ws) {
  return {{"window_size", ws.window_size}, {"sums", ws.sums},
          {"min_window_index", ws.min_window_index}, {"min_sum", ws.min_sum},
          {"max_window_index", ws.max_window_index}, {"max_sum", ws.max_sum}};
}

int cmd_oracle(const std::string& prices_path, std::optional<int> window, bool plan, const std::string& calendar) {
  const auto fixture = load_price_fixture(prices_path);
  const PriceCurve curve(fixture.prices, fixture.market_date, PriceSource::kFixture);
  nlohmann::json out = {{"market_date", to_iso(fixture.market_date)}, {"zone", fixture.zone}};
  if (window) out["window_sums"] = window_json(calculate_window_sums(curve, *window));
  if (plan || !window) {
    std::vector<DeadlineConstraint> deadlines{{ApplianceId::kEvCharger, kDefaultEvFinishSlot, DeadlineOrigin::kDefault}};
    if (!calendar.empty()) {
      auto cal = FixtureCalendarProvider::load(calendar, fixture.market_date);
      const auto midnight = local_midnight(fixture.market_date);
      const auto events = cal.fetch_events(midnight, midnight + std::chrono::days{1});
      deadlines.push_back(derive_calendar_deadline(events, fixture.market_date));
    }
    const auto specs = canonical_specs();
    const auto p = optimal_plan(curve, specs, deadlines);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : p.entries) {
      entries.push_back({{"appliance_id", to_string(e.appliance_id)},
                         {"start_slot", e.start.value()},
                         {"start_time", slot_to_time(e.start)},
                         {"price_sum", e.price_sum},
                         {"estimated_cost_eur", e.estimated_cost_eur}});
    }
    out["plan"] = {{"entries", std::move(entries)}, {"total_price_sum", p.total_price_sum}};
    const auto band = most_expensive_window(curve, 12);
    out["most_expensive_window"] = {{"start", band.start.value()}, {"window_size", 12}, {"sum", band.sum}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct RunOptions {
  std::string request;
  std::string backend = "scripted";
  std::string stage = "explicit_workflow";
  std::string out = "runs";
  std::string client = "cli";
  int cap = kDefaultIterationCap;
  bool json = false;
};

int cmd_run(const RunOptions& o, const DataOptions& d) {
  const auto stage = stage_or_throw(o.stage);
  RunStore store(o.out);
  SystemClock clock;
  security::SecurityGateway gateway(security::GatewayConfig::from_env());
  const auto verdict = gateway.validate_request(o.client, o.request, clock.now());
  if (!verdict.accepted()) {
    RunTrace trace;
    trace.run_id = make_run_id(clock.now());
    trace.scenario = "cli";
    trace.request = o.request;
    trace.client_id = o.client;
    trace.stage = stage;
    trace.backend = o.backend;
    trace.started_at = format_iso_utc(clock.now());
    trace.outcome = RunOutcome::kRejectedByGateway;
    trace.error = fmt::format("rejected: {}", verdict.reason);
    trace.verdict = security::to_json(verdict);
    store.write_complete(trace);
    std::cout << (o.json ? to_json(trace).dump(2) : fmt::format("{} rejected_by_gateway ({})\n{}", trace.run_id,
                                                                 verdict.reason, trace.verdict->dump(2)))
              << "\n";
    return 2;
  }

  auto providers = make_providers(d);
  auto backend = make_backend(o.backend);
  StoreObserver observer(store);
  OrchestratorConfig config;
  config.stage = stage;
  config.iteration_cap = o.cap;
  config.model_id = o.backend == "scripted" ? "scripted" : "";
  config.scenario = "cli";
  config.client_id = o.client;
  config.request_text = o.request;
  config.market_date = *providers.date;
  config.zone = d.zone;
  OrchestratorDeps deps{*backend, *providers.prices, providers.calendar.get(), clock, &observer, nullptr};
  const auto trace = run_orchestration(*verdict.wrapped_input, config, deps);

  if (o.json) {
    std::cout << to_json(trace).dump(2) << "\n";
  } else {
    std::cout << fmt::format("run {}  outcome={}  iterations={}  tokens={}\n", trace.run_id, to_string(trace.outcome),
                             trace.iterations.size(), trace.total_tokens());
    for (const auto& it : trace.iterations) {
      std::cout << fmt::format("  [{}] {}\n", it.index,
                               it.action ? protocol::serialize_action(*it.action) : "protocol error: " + *it.protocol_error);
    }
    for (const auto& s : trace.schedules) {
      std::cout << fmt::format("  {} start slot {} ({})\n", to_string(s.appliance_id), s.start_slot.value(),
                               slot_to_time(s.start_slot));
    }
    if (!trace.final_summary.empty()) std::cout << "summary: " << trace.final_summary << "\n";
    if (!trace.error.empty()) std::cout << "error: " << trace.error << "\n";
    std::cout << "trace: " << (store.dir() / (trace.run_id + ".jsonl")).string() << "\n";
  }
  return trace.outcome == RunOutcome::kFinished ? 0 : 1;
}

struct EvalOptions {
  std::string scenario = "all";
  std::string stage;
  std::string backend = "scripted";
  int runs = 5;
  std::string prices = "fixtures/at_2025-10-15.json";
  std::string calendar = "fixtures/office_week.json";
  std::string out = "reports";
  std::string data_dir;
};

int cmd_eval(const EvalOptions& o) {
  auto scenarios = eval::default_scenarios(o.prices, o.calendar, o.runs);
  std::erase_if(scenarios, [&](const eval::ScenarioSpec& s) {
    if (o.scenario != "all" && eval::to_string(s.kind) != o.scenario) return true;
    return !o.stage.empty() && s.stage != stage_or_throw(o.stage);
  });
  if (scenarios.empty()) throw Error(ErrorCode::kParameter, fmt::format("no scenario matches '{}'", o.scenario));

  auto backend = make_backend(o.backend);
  SystemClock clock;
  std::optional<RunStore> store;
  if (!o.data_dir.empty()) store.emplace(o.data_dir);
  eval::EvalContext ctx{*backend, clock, o.backend == "scripted" ? "scripted" : "", store ? &*store : nullptr};
  std::vector<eval::ScenarioReport> reports;
  for (const auto& s : scenarios) reports.push_back(eval::run_scenario(s, ctx));
  eval::emit_report(reports, o.out);
  std::cout << eval::render_table(reports);
  std::cout << "wrote " << (fs::path(o.out) / "report.txt").string() << " and "
            << (fs::path(o.out) / "report.json").string() << "\n";
  return 0;
}

hems::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

struct ServeOptions {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string backend = "scripted";
  std::string data_dir = "runs";
  std::string static_dir;
};

int cmd_serve(const ServeOptions& o, const DataOptions& d) {
  auto providers = make_providers(d);
  llm::ScriptedBackend scripted;
  std::unique_ptr<llm::LlmBackend> live;
  SystemClock clock;
  ServiceDeps sd{*providers.prices, providers.calendar.get(), clock, {{"scripted", &scripted}}};
  if (o.backend == "live" || std::getenv("HEMS_LLM_BASE_URL")) {
    live = make_backend("live");
    sd.backends["live"] = live.get();
  }
  ServiceConfig config;
  config.host = o.host;
  config.port = o.port;
  config.data_dir = o.data_dir;
  config.static_dir = o.static_dir;
  config.default_backend = o.backend;
  config.market_date = d.date.empty() && d.prices.empty() ? std::nullopt : providers.date;
  config.zone = d.zone;
  config.gateway = security::GatewayConfig::from_env();
  Service service(config, sd);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << fmt::format("hems serving on {}:{} (backend {}, data {})\n", o.host, o.port, o.backend, o.data_dir);
  service.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agentic home energy scheduling"};
  app.require_subcommand(1);

  auto* oracle = app.add_subcommand("oracle", "Exact window sums and optimal starts for a price fixture");
  std::string oracle_prices;
  std::string oracle_calendar;
  std::optional<int> window;
  bool plan = false;
  oracle->add_option("--prices", oracle_prices, "Price fixture")->required();
  auto* w = oracle->add_option("--window", window, "Window size in slots")->check(CLI::Range(1, kSlotsPerDay));
  oracle->add_flag("--plan", plan, "Optimal start for every appliance")->excludes(w);
  oracle->add_option("--calendar", oracle_calendar, "Calendar fixture for the EV deadline (with --plan)");

  auto* run = app.add_subcommand("run", "One orchestration run");
  RunOptions ro;
  DataOptions run_data;
  run->add_option("--request", ro.request, "User request")->required();
  run->add_option("--backend", ro.backend)->check(CLI::IsMember({"scripted", "live"}))->capture_default_str();
  run->add_option("--stage", ro.stage, "baseline | minimal_guidance | explicit_workflow")->capture_default_str();
  run->add_option("--out", ro.out, "Run store directory")->capture_default_str();
  run->add_option("--client", ro.client, "Client id for rate limiting")->capture_default_str();
  run->add_option("--max-iterations", ro.cap)->check(CLI::Range(1, 100))->capture_default_str();
  run->add_flag("--json", ro.json, "Print the full trace as JSON");
  add_data_options(run, run_data);

  auto* ev = app.add_subcommand("eval", "Run evaluation scenarios and write reports");
  EvalOptions eo;
  ev->add_option("--scenario", eo.scenario)
      ->check(CLI::IsMember({"all", "single_appliance", "multi_appliance", "analytical_query"}))
      ->capture_default_str();
  ev->add_option("--stage", eo.stage, "Only scenarios at this prompt stage");
  ev->add_option("--backend", eo.backend)->check(CLI::IsMember({"scripted", "live"}))->capture_default_str();
  ev->add_option("--runs", eo.runs)->check(CLI::Range(1, 1000))->capture_default_str();
  ev->add_option("--prices", eo.prices)->capture_default_str();
  ev->add_option("--calendar", eo.calendar)->capture_default_str();
  ev->add_option("--out", eo.out)->capture_default_str();
  ev->add_option("--data-dir", eo.data_dir, "Also store every run trace here");

  auto* serve = app.add_subcommand("serve", "HTTP API for the web UI");
  ServeOptions so;
  DataOptions serve_data;
  serve->add_option("--host", so.host)->capture_default_str();
  serve->add_option("--port", so.port)->check(CLI::Range(0, 65535))->capture_default_str();
  serve->add_option("--backend", so.backend)->check(CLI::IsMember({"scripted", "live"}))->capture_default_str();
  serve->add_option("--data-dir", so.data_dir)->capture_default_str();
  serve->add_option("--static", so.static_dir, "Directory with the built UI");
  add_data_options(serve, serve_data);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*oracle) return cmd_oracle(oracle_prices, window, plan, oracle_calendar);
    if (*run) return cmd_run(ro, run_data);
    if (*ev) return cmd_eval(eo);
    if (*serve) return cmd_serve(so, serve_data);
  } catch (const Error& e) {
    std::cerr << fmt::format("error ({}): {}\n", to_string(e.code()), e.what());
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
