// SPDX-License-Identifier: Apache-2.0
#include "hems/store.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "hems/error.hpp"
#include "hems/text.hpp"

namespace hems {
namespace fs = std::filesystem;

namespace {

// Run ids become file names, so only a conservative alphabet is allowed.
void check_run_id(const std::string& run_id) {
  const bool ok = !run_id.empty() && run_id.size() <= 128 &&
                  std::all_of(run_id.begin(), run_id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
                  }) &&
                  run_id.front() != '.';
  if (!ok) throw Error(ErrorCode::kParameter, fmt::format("invalid run id '{}'", run_id));
}

nlohmann::json header_json(const RunTrace& t) {
  auto j = to_json(t);
  for (const char* key : {"iterations", "schedules", "outcome", "final_summary", "error", "iteration_count",
                          "prompt_tokens", "completion_tokens", "total_tokens", "wall_time_ms"}) {
    j.erase(key);
  }
  j["type"] = "header";
  return j;
}

nlohmann::json summary_json(const RunTrace& t) {
  nlohmann::json deadlines = nlohmann::json::array();
  for (const auto& d : t.deadlines) deadlines.push_back(to_json(d));
  return {{"type", "summary"},
          {"outcome", to_string(t.outcome)},
          {"final_summary", t.final_summary},
          {"error", t.error},
          {"iteration_count", t.iterations.size()},
          {"prompt_tokens", t.prompt_tokens},
          {"completion_tokens", t.completion_tokens},
          {"wall_time_ms", t.wall_time_ms},
          {"deadlines", std::move(deadlines)},
          {"verdict", t.verdict ? *t.verdict : nlohmann::json(nullptr)}};
}

}  // namespace

RunStore::RunStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_)) {
    throw Error(ErrorCode::kIo, fmt::format("cannot create data directory {}", dir_.string()));
  }
}

fs::path RunStore::run_path(const std::string& run_id) const {
  check_run_id(run_id);
  return dir_ / (run_id + ".jsonl");
}

void RunStore::append_line(const std::string& run_id, const nlohmann::json& line) {
  const auto path = run_path(run_id);
  const std::string text = line.dump() + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot append to {}", path.string()));
}

void RunStore::begin(const RunTrace& t) { append_line(t.run_id, header_json(t)); }

void RunStore::append_iteration(const RunTrace& t, const Iteration& it) {
  auto j = to_json(it);
  j["type"] = "iteration";
  append_line(t.run_id, j);
}

void RunStore::write_schedule(const std::string& run_id, const BinarySchedule& schedule) {
  check_run_id(run_id);
  const auto path = dir_ / fmt::format("{}_{}.json", run_id, to_string(schedule.appliance_id));
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << to_json(schedule).dump(2) << "\n";
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, fmt::format("cannot write {}", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, fmt::format("cannot move schedule into {}: {}", path.string(), ec.message()));
}

void RunStore::finish(const RunTrace& t) { append_line(t.run_id, summary_json(t)); }

void RunStore::write_complete(const RunTrace& t) {
  begin(t);
  finish(t);
}

std::optional<StoredRun> RunStore::load(const std::string& run_id) const {
  fs::path path;
  try {
    path = run_path(run_id);
  } catch (const Error&) {
    return std::nullopt;
  }
  std::vector<std::string> lines;
  {
    std::lock_guard lock(mu_);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::string line;
    while (std::getline(in, line)) {
      if (!text::trim(line).empty()) lines.push_back(std::move(line));
    }
  }
  if (lines.empty()) return std::nullopt;

  StoredRun run;
  try {
    auto header = nlohmann::json::parse(lines.front());
    header.erase("type");
    run.trace = run_trace_from_json(header);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto j = nlohmann::json::parse(lines[i]);
      const auto type = j.value("type", "");
      if (type == "iteration") {
        auto it = iteration_from_json(j);
        run.trace.prompt_tokens += it.prompt_tokens;
        run.trace.completion_tokens += it.completion_tokens;
        run.trace.iterations.push_back(std::move(it));
      } else if (type == "summary") {
        run.complete = true;
        run.trace.outcome = parse_outcome(j.value("outcome", "aborted")).value_or(RunOutcome::kAborted);
        run.trace.final_summary = j.value("final_summary", "");
        run.trace.error = j.value("error", "");
        run.trace.prompt_tokens = j.value("prompt_tokens", run.trace.prompt_tokens);
        run.trace.completion_tokens = j.value("completion_tokens", run.trace.completion_tokens);
        run.trace.wall_time_ms = j.value("wall_time_ms", 0LL);
        run.trace.deadlines.clear();
        for (const auto& d : j.value("deadlines", nlohmann::json::array())) {
          run.trace.deadlines.push_back(deadline_from_json(d));
        }
        if (j.contains("verdict") && !j.at("verdict").is_null()) run.trace.verdict = j.at("verdict");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("{}: {}", path.string(), e.what()));
  }
  run.trace.schedules = load_schedules(run_id);
  return run;
}

std::vector<BinarySchedule> RunStore::load_schedules(const std::string& run_id) const {
  check_run_id(run_id);
  std::vector<BinarySchedule> out;
  for (const auto id : kAllAppliances) {
    const auto path = dir_ / fmt::format("{}_{}.json", run_id, to_string(id));
    std::ifstream in(path);
    if (!in) continue;
    try {
      out.push_back(schedule_from_json(nlohmann::json::parse(in)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParse, fmt::format("{}: {}", path.string(), e.what()));
    }
  }
  return out;
}

std::vector<std::string> RunStore::list_run_ids() const {
  std::vector<std::pair<fs::file_time_type, std::string>> runs;
  std::lock_guard lock(mu_);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      runs.emplace_back(entry.last_write_time(), entry.path().stem().string());
    }
  }
  // Run ids start with their creation time, so name order is creation order.
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ids;
  for (auto& r : runs) ids.push_back(std::move(r.second));
  return ids;
}

}  // namespace hems
