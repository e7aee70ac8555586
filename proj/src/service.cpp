// SPDX-License-Identifier: Apache-2.0
#include "hems/service.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <httplib.h>

#include "hems/error.hpp"
#include "hems/eval.hpp"
#include "hems/oracle.hpp"
#include "hems/text.hpp"

namespace hems {
namespace {

constexpr int kDefaultPageSize = 20;
constexpr int kMaxPageSize = 100;

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"error", code}, {"message", message}});
}

int query_int(const httplib::Request& req, const char* key, int fallback) {
  if (!req.has_param(key)) return fallback;
  const auto v = text::parse_int(req.get_param_value(key));
  if (!v || *v < 0 || *v > 1'000'000) throw Error(ErrorCode::kParameter, fmt::format("bad '{}' parameter", key));
  return static_cast<int>(*v);
}

nlohmann::json run_summary(const StoredRun& run) {
  const auto& t = run.trace;
  return {{"run_id", t.run_id},
          {"started_at", t.started_at},
          {"request", t.request},
          {"client_id", t.client_id},
          {"stage", to_string(t.stage)},
          {"backend", t.backend},
          {"market_date", to_iso(t.market_date)},
          {"iterations", t.iterations.size()},
          {"schedules", t.schedules.size()},
          {"outcome", run.complete ? nlohmann::json(to_string(t.outcome)) : nlohmann::json()},
          {"complete", run.complete}};
}

// Wraps the store observer so a run leaves the pending table only once its
// header is on disk.
class ServiceObserver final : public RunObserver {
 public:
  ServiceObserver(RunStore& store, std::function<void(const std::string&)> started)
      : inner_(store), started_(std::move(started)) {}
  void on_start(const RunTrace& t) override {
    inner_.on_start(t);
    started_(t.run_id);
  }
  void on_iteration(const RunTrace& t, const Iteration& it) override { inner_.on_iteration(t, it); }
  void on_schedule(const RunTrace& t, const BinarySchedule& s) override { inner_.on_schedule(t, s); }
  void on_finish(const RunTrace& t) override { inner_.on_finish(t); }

 private:
  StoreObserver inner_;
  std::function<void(const std::string&)> started_;
};

}  // namespace

Service::Service(ServiceConfig config, ServiceDeps deps)
    : config_(std::move(config)),
      deps_(std::move(deps)),
      store_(config_.data_dir),
      gateway_(config_.gateway),
      server_(std::make_unique<httplib::Server>()) {
  if (deps_.backends.empty()) throw Error(ErrorCode::kConfig, "service needs at least one backend");
  if (!deps_.backends.count(config_.default_backend)) {
    throw Error(ErrorCode::kConfig, fmt::format("default backend '{}' is not configured", config_.default_backend));
  }
  install_routes();
  for (int i = 0; i < std::max(1, config_.workers); ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service() {
  stop();
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
}

void Service::install_routes() {
  auto& srv = *server_;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      const int status = e.code() == ErrorCode::kParameter || e.code() == ErrorCode::kParse ? 400 : 500;
      send_error(res, status, to_string(e.code()), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  srv.Post("/api/requests", [this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::parse_error&) {
      return send_error(res, 400, "bad_request", "body must be a JSON object");
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      return send_error(res, 400, "bad_request", "field 'text' (string) is required");
    }
    const std::string text = body["text"].get<std::string>();
    std::string client = body.value("client_id", std::string());
    if (client.empty()) client = req.remote_addr;

    auto stage = config_.default_stage;
    if (body.contains("stage") && !body["stage"].is_null()) {
      const auto parsed = body["stage"].is_string() ? parse_stage(body["stage"].get<std::string>()) : std::nullopt;
      if (!parsed) return send_error(res, 400, "bad_request", "unknown stage");
      stage = *parsed;
    }
    const std::string backend_name = body.value("backend", config_.default_backend);
    const auto backend = deps_.backends.find(backend_name);
    if (backend == deps_.backends.end()) {
      return send_error(res, 400, "bad_request", fmt::format("backend '{}' is not available", backend_name));
    }
    auto date = config_.market_date.value_or(std::chrono::floor<std::chrono::days>(deps_.clock.now()));
    if (body.contains("market_date")) {
      const auto parsed = body["market_date"].is_string() ? parse_iso_date(body["market_date"].get<std::string>())
                                                          : std::nullopt;
      if (!parsed) return send_error(res, 400, "bad_request", "market_date must be YYYY-MM-DD");
      date = *parsed;
    }

    const auto now = deps_.clock.now();
    const auto verdict = gateway_.validate_request(client, text, now);
    if (!verdict.accepted()) {
      return send_json(res, verdict.reason == "rate_limit" ? 429 : 400, {{"verdict", security::to_json(verdict)}});
    }

    Job job;
    job.wrapped = *verdict.wrapped_input;
    job.backend = backend->second;
    job.config.stage = stage;
    job.config.run_id = make_run_id(now);
    job.config.scenario = "adhoc";
    job.config.client_id = client;
    job.config.request_text = text;
    job.config.market_date = date;
    job.config.zone = config_.zone;
    job.config.model_id = backend_name == "scripted" ? "scripted" : "";
    const auto run_id = job.config.run_id;
    {
      std::lock_guard lock(mu_);
      pending_[run_id] = {{"run_id", run_id},
                          {"request", text},
                          {"client_id", client},
                          {"stage", to_string(stage)},
                          {"backend", backend_name},
                          {"market_date", to_iso(date)},
                          {"started_at", format_iso_utc(now)},
                          {"iterations", nlohmann::json::array()},
                          {"schedules", nlohmann::json::array()},
                          {"outcome", nullptr},
                          {"complete", false}};
      queue_.push_back(std::move(job));
    }
    cv_.notify_one();
    send_json(res, 202, {{"run_id", run_id}, {"verdict", security::to_json(verdict)}});
  });

  srv.Get(R"(/api/runs/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (const auto run = store_.load(id)) {
      auto j = to_json(run->trace);
      j["complete"] = run->complete;
      if (!run->complete) j["outcome"] = nullptr;
      return send_json(res, 200, j);
    }
    std::lock_guard lock(mu_);
    if (const auto it = pending_.find(id); it != pending_.end()) return send_json(res, 200, it->second);
    send_error(res, 404, "not_found", fmt::format("unknown run '{}'", id));
  });

  srv.Get("/api/runs", [this](const httplib::Request& req, httplib::Response& res) {
    const int offset = query_int(req, "offset", 0);
    const int limit = std::clamp(query_int(req, "limit", kDefaultPageSize), 1, kMaxPageSize);
    std::vector<nlohmann::json> rows;
    {
      std::lock_guard lock(mu_);
      for (auto it = pending_.rbegin(); it != pending_.rend(); ++it) {
        auto row = it->second;
        row["iterations"] = 0;
        row["schedules"] = 0;
        rows.push_back(std::move(row));
      }
    }
    const auto ids = store_.list_run_ids();
    const int total = static_cast<int>(rows.size() + ids.size());
    nlohmann::json page = nlohmann::json::array();
    for (int i = offset; i < total && static_cast<int>(page.size()) < limit; ++i) {
      if (i < static_cast<int>(rows.size())) {
        page.push_back(rows[static_cast<std::size_t>(i)]);
      } else if (const auto run = store_.load(ids[static_cast<std::size_t>(i) - rows.size()])) {
        page.push_back(run_summary(*run));
      }
    }
    send_json(res, 200, {{"total", total}, {"offset", offset}, {"limit", limit}, {"runs", std::move(page)}});
  });

  srv.Get(R"(/api/schedules/([A-Za-z0-9_.-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto run = store_.load(id);
    if (!run) {
      std::lock_guard lock(mu_);
      if (pending_.count(id)) return send_json(res, 200, {{"run_id", id}, {"schedules", nlohmann::json::array()}});
      return send_error(res, 404, "not_found", fmt::format("unknown run '{}'", id));
    }
    nlohmann::json list = nlohmann::json::array();
    for (const auto& s : store_.load_schedules(id)) list.push_back(to_json(s));
    send_json(res, 200, {{"run_id", id}, {"schedules", std::move(list)}});
  });

  srv.Get(R"(/api/prices/([0-9-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto date = parse_iso_date(req.matches[1].str());
    if (!date) return send_error(res, 400, "bad_request", "date must be YYYY-MM-DD");
    const std::string zone = req.has_param("zone") ? req.get_param_value("zone") : config_.zone;
    try {
      const auto curve = deps_.prices.fetch_prices(*date, zone);
      auto j = to_json(curve);
      j["zone"] = zone;
      const auto band = most_expensive_window(curve, 12);
      j["most_expensive_window"] = {
          {"start", band.start.value()}, {"end", band.start.value() + 12}, {"window_size", 12}, {"sum", band.sum}};
      send_json(res, 200, j);
    } catch (const Error& e) {
      const int status = e.code() == ErrorCode::kNotFound ? 404 : e.code() == ErrorCode::kConfig ? 503 : 502;
      send_error(res, status, to_string(e.code()), e.what());
    }
  });

  srv.Get("/api/analytics", [this](const httplib::Request&, httplib::Response& res) {
    std::vector<RunTrace> runs;
    for (const auto& id : store_.list_run_ids()) {
      if (auto run = store_.load(id); run && run->complete) runs.push_back(std::move(run->trace));
    }
    const auto reports = eval::analyze_runs(runs, deps_.prices, deps_.calendar);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : reports) {
      auto j = eval::to_json(r);
      j.erase("records");
      list.push_back(std::move(j));
    }
    send_json(res, 200, {{"runs", runs.size()}, {"reports", std::move(list)}, {"table", eval::render_table(reports)}});
  });

  srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  if (!config_.static_dir.empty() && !srv.set_mount_point("/", config_.static_dir.string())) {
    throw Error(ErrorCode::kConfig, fmt::format("static directory {} not found", config_.static_dir.string()));
  }
}

int Service::bind() {
  const int port = config_.port == 0 ? server_->bind_to_any_port(config_.host)
                                     : (server_->bind_to_port(config_.host, config_.port) ? config_.port : -1);
  if (port < 0) throw Error(ErrorCode::kIo, fmt::format("cannot bind {}:{}", config_.host, config_.port));
  return port;
}

int Service::start() {
  const int port = bind();
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::run() {
  bind();
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_->is_running()) server_->stop();
  if (listener_.joinable()) listener_.join();
}

void Service::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && active_ == 0; });
}

void Service::worker_loop() {
  for (;;) {
    Job job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++active_;
    }
    execute(job);
    {
      std::lock_guard lock(mu_);
      pending_.erase(job.config.run_id);
      --active_;
    }
    idle_cv_.notify_all();
  }
}

void Service::execute(Job& job) {
  ServiceObserver observer(store_, [this](const std::string& id) {
    std::lock_guard lock(mu_);
    pending_.erase(id);
  });
  OrchestratorDeps deps{*job.backend, deps_.prices, deps_.calendar, deps_.clock, &observer, nullptr};
  try {
    run_orchestration(job.wrapped, job.config, deps);
  } catch (const std::exception& e) {
    // Anything escaping the loop still leaves a complete, aborted record.
    RunTrace trace;
    trace.run_id = job.config.run_id;
    trace.request = job.config.request_text;
    trace.client_id = job.config.client_id;
    trace.stage = job.config.stage;
    trace.backend = job.backend->name();
    trace.market_date = job.config.market_date;
    trace.zone = job.config.zone;
    trace.started_at = format_iso_utc(deps_.clock.now());
    trace.outcome = RunOutcome::kAborted;
    trace.error = e.what();
    if (store_.load(trace.run_id)) {
      store_.finish(trace);
    } else {
      store_.write_complete(trace);
    }
  }
}

}  // namespace hems
