// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hems/agents.hpp"
#include "hems/security.hpp"
#include "hems/store.hpp"

namespace httplib {
class Server;
}

namespace hems {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "runs";
  std::filesystem::path static_dir;  // UI bundle served under / when set
  std::string default_backend = "scripted";
  PromptStage default_stage = PromptStage::kExplicitWorkflow;
  std::optional<Date> market_date;  // today (UTC) when unset
  std::string zone = "AT";
  int workers = 2;
  security::GatewayConfig gateway;
};

struct ServiceDeps {
  PriceProvider& prices;
  CalendarProvider* calendar = nullptr;
  const Clock& clock;
  std::map<std::string, llm::LlmBackend*> backends;  // by name, e.g. "scripted"
};

// JSON API for the orchestrator. Accepted requests run on a worker pool; the
// trace is read back from the run store while it grows.
class Service {
 public:
  Service(ServiceConfig config, ServiceDeps deps);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread. Returns the bound port.
  int start();
  // Binds and serves on the calling thread until stop().
  void run();
  void stop();
  // Blocks until every accepted run has finished.
  void wait_idle();

  RunStore& store() noexcept { return store_; }

 private:
  struct Job {
    std::string wrapped;
    OrchestratorConfig config;
    llm::LlmBackend* backend = nullptr;
  };

  void install_routes();
  int bind();
  void worker_loop();
  void execute(Job& job);

  ServiceConfig config_;
  ServiceDeps deps_;
  RunStore store_;
  security::SecurityGateway gateway_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Job> queue_;
  std::map<std::string, nlohmann::json> pending_;  // accepted, not started yet
  int active_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace hems
