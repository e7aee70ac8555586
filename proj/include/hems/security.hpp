// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hems/clock.hpp"

namespace hems::security {

enum class RiskLevel { kNone, kLow, kMedium, kHigh, kCritical };

enum class InjectionCategory {
  kInstructionOverride,
  kPromptLeak,
  kCredentialExtraction,
  kRoleManipulation,
  kDelimiterInjection,
  kBehaviorModification,
};

std::string_view to_string(RiskLevel risk);
std::string_view to_string(InjectionCategory category);
std::optional<RiskLevel> parse_risk(std::string_view text);
std::optional<InjectionCategory> parse_category(std::string_view text);

struct InjectionPattern {
  std::string id;
  InjectionCategory category;
  RiskLevel risk;
  std::string source;
  std::regex regex;  // ECMAScript, icase
};

// Read-only after construction; share one instance across threads.
class PatternRegistry {
 public:
  // Line-oriented records "id | category | risk | pattern"; '#' starts a
  // comment line. Throws kParse with the line number on a bad record.
  static PatternRegistry parse(std::string_view text);
  static PatternRegistry load_file(const std::filesystem::path& path);
  // The registry shipped with the library.
  static const PatternRegistry& builtin();

  const std::vector<InjectionPattern>& patterns() const noexcept { return patterns_; }
  std::size_t size() const noexcept { return patterns_.size(); }

 private:
  std::vector<InjectionPattern> patterns_;
};

struct ScanResult {
  RiskLevel risk = RiskLevel::kNone;
  std::vector<std::string> matched_pattern_ids;
  std::vector<InjectionCategory> categories;  // distinct, in registry order
};

ScanResult scan_injection(const PatternRegistry& registry, std::string_view input);

// Untrusted-data preamble followed by <user_input>input</user_input>.
std::string wrap_privileged(std::string_view input);
// Text between the first opening tag and the last closing tag.
std::optional<std::string> unwrap_privileged(std::string_view wrapped);

struct GatewayConfig {
  int rate_per_minute = 20;
  int rate_per_day = 200;
  int max_chars = 150;
  int max_words = 30;

  // HEMS_RATE_PER_MIN, HEMS_RATE_PER_DAY, HEMS_MAX_CHARS, HEMS_MAX_WORDS.
  static GatewayConfig from_env();
};

enum class RateDecision { kAllowed, kMinuteExceeded, kDayExceeded };

// Per-client rolling 60 s window plus one global counter per UTC day.
// try_acquire is an atomic check-and-increment.
class RateLimiter {
 public:
  RateLimiter(int per_minute, int per_day) : per_minute_(per_minute), per_day_(per_day) {}

  RateDecision try_acquire(const std::string& client_id, TimePoint now);

 private:
  int per_minute_;
  int per_day_;
  std::mutex mu_;
  std::map<std::string, std::deque<TimePoint>> per_client_;
  std::chrono::sys_days day_{};
  int day_count_ = 0;
};

enum class Decision { kAccept, kReject };

struct ValidationVerdict {
  Decision decision = Decision::kReject;
  RiskLevel risk = RiskLevel::kNone;
  std::vector<std::string> matched_pattern_ids;
  std::vector<InjectionCategory> categories;
  // rate_limit | empty | malformed | length | word_count | injection | accepted
  std::string reason;
  std::string detail;
  std::optional<std::string> wrapped_input;

  bool accepted() const noexcept { return decision == Decision::kAccept; }
};

nlohmann::json to_json(const ValidationVerdict& verdict);

// Layers run in order: rate limits, emptiness/encoding/length/word count,
// pattern scan, privilege wrapping. Never calls an LLM.
class SecurityGateway {
 public:
  explicit SecurityGateway(GatewayConfig config = {},
                           std::shared_ptr<const PatternRegistry> registry = nullptr);

  ValidationVerdict validate_request(const std::string& client_id, std::string_view input, TimePoint now);

  // Layers 2-4 only; used where rate limiting does not apply.
  ValidationVerdict validate_content(std::string_view input) const;

  const GatewayConfig& config() const noexcept { return config_; }
  const PatternRegistry& registry() const noexcept { return *registry_; }

 private:
  GatewayConfig config_;
  std::shared_ptr<const PatternRegistry> registry_;
  RateLimiter limiter_;
};

}  // namespace hems::security
