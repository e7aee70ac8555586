// SPDX-License-Identifier: Apache-2.0
#include "hems/net.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "hems/error.hpp"
#include "hems/text.hpp"

namespace hems::net {
namespace {

std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

httplib::Client make_client(const BaseUrl& url, std::chrono::seconds timeout) {
  httplib::Client cli(url.origin);
  cli.set_connection_timeout(std::chrono::seconds{10});
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  cli.set_keep_alive(false);
  return cli;
}

std::string iso_local(LocalMinutes t, const std::string& offset) { return format_local(t) + ":00" + offset; }

}  // namespace

BaseUrl split_base_url(std::string_view url) {
  const auto t = text::trim(url);
  std::size_t scheme_end = std::string_view::npos;
  if (t.rfind("http://", 0) == 0) scheme_end = 7;
  if (t.rfind("https://", 0) == 0) scheme_end = 8;
  if (scheme_end == std::string_view::npos || t.size() == scheme_end) {
    throw Error(ErrorCode::kConfig, fmt::format("not an http(s) URL: '{}'", std::string(t)));
  }
  const auto slash = t.find('/', scheme_end);
  BaseUrl out;
  out.origin = std::string(t.substr(0, slash));
  if (slash != std::string_view::npos) out.path_prefix = std::string(t.substr(slash));
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

std::string redact(std::string_view text, std::string_view secret) {
  std::string out(text);
  if (secret.empty()) return out;
  for (auto pos = out.find(secret); pos != std::string::npos; pos = out.find(secret, pos + 3)) {
    out.replace(pos, secret.size(), "***");
  }
  return out;
}

void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// ---- chat completions -----------------------------------------------------

LiveBackendConfig LiveBackendConfig::from_env() {
  LiveBackendConfig c;
  c.base_url = env_or("HEMS_LLM_BASE_URL");
  if (c.base_url.empty()) throw Error(ErrorCode::kConfig, "HEMS_LLM_BASE_URL is not set");
  c.api_key = env_or("HEMS_LLM_API_KEY");
  c.model = env_or("HEMS_LLM_MODEL");
  return c;
}

LiveBackend::LiveBackend(LiveBackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), url_(split_base_url(config_.base_url)), sleeper_(std::move(sleeper)) {}

llm::ChatResponse LiveBackend::complete(const llm::ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorCode::kParameter, "chat request has no messages");
  auto req = request;
  if (req.model_id.empty() || req.model_id == "scripted") req.model_id = config_.model;
  const std::string body = llm::to_chat_completions_body(req).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const std::string path = url_.path_prefix + "/chat/completions";

  std::string last_failure;
  auto delay = config_.backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      sleeper_(delay);
      delay *= 2;
    }
    ++attempts_;
    const auto t0 = std::chrono::steady_clock::now();
    auto cli = make_client(url_, config_.timeout);
    const auto res = cli.Post(path, headers, body, "application/json");
    const auto latency =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    if (!res) {
      last_failure = fmt::format("transport error: {}", httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 429) throw Error(ErrorCode::kRateLimited, "model endpoint answered 429");
    if (res->status >= 500) {
      last_failure = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kBackendUnavailable,
                  redact(fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 300)), config_.api_key));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      llm::ChatResponse out;
      out.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
      const auto usage = j.value("usage", nlohmann::json::object());
      out.prompt_tokens = usage.value("prompt_tokens", llm::count_prompt_tokens(req));
      out.completion_tokens = usage.value("completion_tokens", static_cast<int>(text::word_count(out.content)));
      out.latency_ms = latency;
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kBackendUnavailable, fmt::format("unreadable completion: {}", e.what()));
    }
  }
  throw Error(ErrorCode::kBackendUnavailable,
              redact(fmt::format("{} after {} attempts", last_failure, config_.max_retries + 1), config_.api_key));
}

// ---- prices ---------------------------------------------------------------

EntsoeConfig EntsoeConfig::from_env() {
  EntsoeConfig c;
  c.token = env_or("ENTSOE_API_TOKEN");
  if (c.token.empty()) throw Error(ErrorCode::kConfig, "ENTSOE_API_TOKEN is not set");
  c.base_url = env_or("HEMS_ENTSOE_URL", c.base_url);
  return c;
}

EntsoePriceProvider::EntsoePriceProvider(EntsoeConfig config)
    : config_(std::move(config)), url_(split_base_url(config_.base_url)) {
  if (config_.token.empty()) throw Error(ErrorCode::kConfig, "ENTSO-E token is empty");
}

PriceCurve EntsoePriceProvider::fetch_prices(Date date, std::string_view zone) {
  const auto area = entsoe_area_code(zone);
  const auto day = market_day_utc(date);
  const httplib::Params params{{"securityToken", config_.token}, {"documentType", "A44"},
                               {"in_Domain", area},              {"out_Domain", area},
                               {"periodStart", entsoe_timestamp(day.start)},
                               {"periodEnd", entsoe_timestamp(day.end)}};
  auto cli = make_client(url_, config_.timeout);
  const auto res = cli.Get(url_.path_prefix.empty() ? "/" : url_.path_prefix, params, httplib::Headers{});
  if (!res) {
    throw Error(ErrorCode::kBackendUnavailable,
                fmt::format("price request failed: {}", httplib::to_string(res.error())));
  }
  if (res->status == 401 || res->status == 403) {
    throw Error(ErrorCode::kConfig, fmt::format("price API refused the token (HTTP {})", res->status));
  }
  if (res->status >= 500) throw Error(ErrorCode::kBackendUnavailable, fmt::format("price API HTTP {}", res->status));
  // Other statuses carry an acknowledgement document, which the parser reports.
  return parse_entsoe_xml(res->body, date);
}

// ---- calendar -------------------------------------------------------------

GoogleCalendarConfig GoogleCalendarConfig::from_env() {
  const auto raw = env_or("HEMS_CAL_CREDENTIALS");
  if (raw.empty()) throw Error(ErrorCode::kConfig, "HEMS_CAL_CREDENTIALS is not set");
  GoogleCalendarConfig c;
  std::ifstream in(raw);
  if (!in) {
    c.access_token = raw;
    return c;
  }
  try {
    const auto j = nlohmann::json::parse(in);
    c.access_token = j.at("access_token").get<std::string>();
    c.calendar_id = j.value("calendar_id", c.calendar_id);
    c.utc_offset = j.value("utc_offset", c.utc_offset);
    c.base_url = j.value("base_url", c.base_url);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, fmt::format("calendar credentials: {}", e.what()));
  }
  return c;
}

GoogleCalendarProvider::GoogleCalendarProvider(GoogleCalendarConfig config)
    : config_(std::move(config)), url_(split_base_url(config_.base_url)) {}

std::vector<CalendarEvent> GoogleCalendarProvider::fetch_events(LocalMinutes from, LocalMinutes to) {
  const httplib::Params params{{"timeMin", iso_local(from, config_.utc_offset)},
                               {"timeMax", iso_local(to, config_.utc_offset)},
                               {"singleEvents", "true"},
                               {"orderBy", "startTime"},
                               {"fields", "items(status,summary,start,end)"}};
  httplib::Headers headers{{"Authorization", "Bearer " + config_.access_token}};
  auto cli = make_client(url_, std::chrono::seconds{30});
  const auto path =
      fmt::format("{}/calendars/{}/events", url_.path_prefix, httplib::detail::encode_url(config_.calendar_id));
  const auto res = cli.Get(path, params, headers);
  if (!res) {
    throw Error(ErrorCode::kBackendUnavailable,
                fmt::format("calendar request failed: {}", httplib::to_string(res.error())));
  }
  if (res->status == 401 || res->status == 403) {
    throw Error(ErrorCode::kConfig, fmt::format("calendar API refused the credentials (HTTP {})", res->status));
  }
  if (res->status != 200) throw Error(ErrorCode::kBackendUnavailable, fmt::format("calendar API HTTP {}", res->status));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, fmt::format("calendar response: {}", e.what()));
  }
  // Same window and ordering rules as the fixture provider.
  return FixtureCalendarProvider(parse_google_events(j)).fetch_events(from, to);
}

}  // namespace hems::net
