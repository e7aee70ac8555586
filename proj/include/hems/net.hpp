// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <string>
#include <string_view>

#include "hems/llm.hpp"
#include "hems/providers.hpp"

namespace hems::net {

// "https://host:port/prefix" -> {"https://host:port", "/prefix"}. Throws
// kConfig for anything that is not an absolute http(s) URL.
struct BaseUrl {
  std::string origin;
  std::string path_prefix;  // no trailing slash
};
BaseUrl split_base_url(std::string_view url);

// Replaces every occurrence of secret with "***". An empty secret is a no-op.
std::string redact(std::string_view text, std::string_view secret);

using Sleeper = std::function<void(std::chrono::milliseconds)>;
void real_sleep(std::chrono::milliseconds d);

struct LiveBackendConfig {
  std::string base_url;
  std::string api_key;
  std::string model;
  int max_retries = 2;
  std::chrono::milliseconds backoff{500};  // doubles per retry
  std::chrono::seconds timeout{60};

  // HEMS_LLM_BASE_URL (required), HEMS_LLM_API_KEY, HEMS_LLM_MODEL.
  static LiveBackendConfig from_env();
};

// Chat-completions client. Transport failures and 5xx answers are retried;
// 429 is reported at once as kRateLimited.
class LiveBackend final : public llm::LlmBackend {
 public:
  explicit LiveBackend(LiveBackendConfig config, Sleeper sleeper = real_sleep);

  llm::ChatResponse complete(const llm::ChatRequest& request) override;
  std::string name() const override { return "live"; }
  int attempts() const noexcept { return attempts_.load(); }

 private:
  LiveBackendConfig config_;
  BaseUrl url_;
  Sleeper sleeper_;
  std::atomic<int> attempts_{0};
};

struct EntsoeConfig {
  std::string token;
  std::string base_url = "https://web-api.tp.entsoe.eu/api";
  std::chrono::seconds timeout{30};

  // ENTSOE_API_TOKEN; kConfig when unset.
  static EntsoeConfig from_env();
};

// Day-ahead prices (document type A44) from the transparency platform.
class EntsoePriceProvider final : public PriceProvider {
 public:
  explicit EntsoePriceProvider(EntsoeConfig config);
  PriceCurve fetch_prices(Date date, std::string_view zone) override;
  std::string name() const override { return "entsoe"; }

 private:
  EntsoeConfig config_;
  BaseUrl url_;
};

struct GoogleCalendarConfig {
  std::string access_token;
  std::string calendar_id = "primary";
  std::string utc_offset = "Z";  // household offset appended to query times
  std::string base_url = "https://www.googleapis.com/calendar/v3";

  // HEMS_CAL_CREDENTIALS: a path to {"access_token","calendar_id","utc_offset"}
  // or the bare token. kConfig when unset or unreadable.
  static GoogleCalendarConfig from_env();
};

class GoogleCalendarProvider final : public CalendarProvider {
 public:
  explicit GoogleCalendarProvider(GoogleCalendarConfig config);
  std::vector<CalendarEvent> fetch_events(LocalMinutes from, LocalMinutes to) override;
  std::string name() const override { return "google"; }

 private:
  GoogleCalendarConfig config_;
  BaseUrl url_;
};

}  // namespace hems::net
