// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hems/agents.hpp"

namespace hems {

struct StoredRun {
  RunTrace trace;
  bool complete = false;  // summary line written
};

// Append-only run log. Each run is <dir>/<run_id>.jsonl: a header line, one
// line per iteration, a summary line. Committed schedules are written next to
// it as <dir>/<run_id>_<appliance_id>.json.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path dir);

  void begin(const RunTrace& trace);
  void append_iteration(const RunTrace& trace, const Iteration& it);
  void write_schedule(const std::string& run_id, const BinarySchedule& schedule);
  void finish(const RunTrace& trace);
  // Header plus summary in one go, for runs that never started (gateway rejects).
  void write_complete(const RunTrace& trace);

  std::optional<StoredRun> load(const std::string& run_id) const;
  std::vector<BinarySchedule> load_schedules(const std::string& run_id) const;
  // Newest first.
  std::vector<std::string> list_run_ids() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  void append_line(const std::string& run_id, const nlohmann::json& line);
  std::filesystem::path run_path(const std::string& run_id) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// Bridges the orchestrator's hooks to a RunStore.
class StoreObserver final : public RunObserver {
 public:
  explicit StoreObserver(RunStore& store) : store_(store) {}
  void on_start(const RunTrace& t) override { store_.begin(t); }
  void on_iteration(const RunTrace& t, const Iteration& it) override { store_.append_iteration(t, it); }
  void on_schedule(const RunTrace& t, const BinarySchedule& s) override { store_.write_schedule(t.run_id, s); }
  void on_finish(const RunTrace& t) override { store_.finish(t); }

 private:
  RunStore& store_;
};

}  // namespace hems
