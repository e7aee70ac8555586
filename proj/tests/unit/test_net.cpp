// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <cstdlib>

#include "hems/error.hpp"
#include "hems/net.hpp"
#include "local_server.hpp"
#include "oracles.hpp"

using namespace hems;
using namespace hems::net;
using namespace hems::testing;
using std::chrono::milliseconds;

namespace {

constexpr const char* kKey = "sk-test-0123456789";

llm::ChatRequest hello() {
  llm::ChatRequest r;
  r.model_id = "m1";
  r.system_prompt = "sys";
  r.messages.push_back({llm::Role::kUser, "hello there"});
  return r;
}

std::string completion_body(const std::string& content, bool usage = true) {
  nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
  if (usage) j["usage"] = {{"prompt_tokens", 11}, {"completion_tokens", 3}};
  return j.dump();
}

struct Backend {
  std::vector<milliseconds> sleeps;
  LiveBackend make(const std::string& base) {
    LiveBackendConfig c;
    c.base_url = base;
    c.api_key = kKey;
    c.model = "m1";
    c.timeout = std::chrono::seconds{5};
    return LiveBackend(c, [this](milliseconds d) { sleeps.push_back(d); });
  }
};

ErrorCode code_of(const std::function<void()>& f, std::string* what = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.code();
  }
  FAIL("no hems::Error thrown");
  return ErrorCode::kRange;
}

}  // namespace

TEST_SUITE("net") {
  TEST_CASE("url splitting and redaction") {
    const auto u = split_base_url("https://api.example.com:8443/v1/");
    CHECK(u.origin == "https://api.example.com:8443");
    CHECK(u.path_prefix == "/v1");
    CHECK(split_base_url("http://localhost").path_prefix.empty());
    CHECK(code_of([] { (void)split_base_url("ftp://x"); }) == ErrorCode::kConfig);
    CHECK(code_of([] { (void)split_base_url("localhost:80"); }) == ErrorCode::kConfig);
    CHECK(redact("key=abc and abc", "abc") == "key=*** and ***");
    CHECK(redact("unchanged", "") == "unchanged");
  }

  TEST_CASE("chat completion over loopback") {
    LocalServer srv;
    std::string auth, body;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      auth = req.get_header_value("Authorization");
      body = req.body;
      res.set_content(completion_body("ACTION: GET_PRICES"), "application/json");
    });
    srv.start();
    Backend b;
    auto be = b.make(srv.url("/v1"));
    const auto r = be.complete(hello());
    CHECK(r.content == "ACTION: GET_PRICES");
    CHECK(r.prompt_tokens == 11);
    CHECK(r.completion_tokens == 3);
    CHECK(auth == std::string("Bearer ") + kKey);
    const auto sent = nlohmann::json::parse(body);
    CHECK(sent["model"] == "m1");
    CHECK(sent["messages"][0]["role"] == "system");
    CHECK(be.attempts() == 1);
  }

  TEST_CASE("missing usage falls back to word counts") {
    LocalServer srv;
    srv.server.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion_body("three word answer", false), "application/json");
    });
    srv.start();
    Backend b;
    auto be = b.make(srv.url());
    const auto r = be.complete(hello());
    CHECK(r.completion_tokens == 3);
    CHECK(r.prompt_tokens == llm::count_prompt_tokens(hello()));
  }

  TEST_CASE("429 is not retried") {
    LocalServer srv;
    std::atomic<int> hits{0};
    srv.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      ++hits;
      res.status = 429;
    });
    srv.start();
    Backend b;
    auto be = b.make(srv.url());
    CHECK(code_of([&] { (void)be.complete(hello()); }) == ErrorCode::kRateLimited);
    CHECK(hits == 1);
    CHECK(b.sleeps.empty());
  }

  TEST_CASE("5xx is retried with doubling backoff") {
    LocalServer srv;
    std::atomic<int> hits{0};
    srv.server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      if (++hits < 3) {
        res.status = 503;
        return;
      }
      res.set_content(completion_body("ok"), "application/json");
    });
    srv.start();
    Backend b;
    auto be = b.make(srv.url());
    CHECK(be.complete(hello()).content == "ok");
    CHECK(be.attempts() == 3);
    CHECK(b.sleeps == std::vector<milliseconds>{milliseconds{500}, milliseconds{1000}});
  }

  TEST_CASE("persistent 5xx gives up") {
    LocalServer srv;
    srv.server.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) { res.status = 502; });
    srv.start();
    Backend b;
    auto be = b.make(srv.url());
    CHECK(code_of([&] { (void)be.complete(hello()); }) == ErrorCode::kBackendUnavailable);
    CHECK(be.attempts() == 3);
  }

  TEST_CASE("error bodies never leak the key") {
    LocalServer srv;
    srv.server.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.status = 401;
      res.set_content(std::string("invalid key ") + kKey, "text/plain");
    });
    srv.start();
    Backend b;
    auto be = b.make(srv.url());
    std::string what;
    CHECK(code_of([&] { (void)be.complete(hello()); }, &what) == ErrorCode::kBackendUnavailable);
    CHECK(what.find(kKey) == std::string::npos);
    CHECK(what.find("***") != std::string::npos);
  }

  TEST_CASE("unreachable host") {
    int port = 0;
    {
      LocalServer probe;
      probe.start();
      port = probe.port();
    }
    Backend b;
    auto be = b.make("http://127.0.0.1:" + std::to_string(port));
    CHECK(code_of([&] { (void)be.complete(hello()); }) == ErrorCode::kBackendUnavailable);
  }

  TEST_CASE("malformed completion body") {
    LocalServer srv;
    srv.server.Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"choices\": []}", "application/json");
    });
    srv.start();
    Backend b;
    auto be = b.make(srv.url());
    CHECK(code_of([&] { (void)be.complete(hello()); }) == ErrorCode::kBackendUnavailable);
  }

  TEST_CASE("configuration from the environment") {
    ::unsetenv("HEMS_LLM_BASE_URL");
    CHECK(code_of([] { (void)LiveBackendConfig::from_env(); }) == ErrorCode::kConfig);
    ::setenv("HEMS_LLM_BASE_URL", "http://127.0.0.1:9/v1", 1);
    ::setenv("HEMS_LLM_MODEL", "tiny", 1);
    const auto c = LiveBackendConfig::from_env();
    CHECK(c.model == "tiny");
    ::unsetenv("HEMS_LLM_BASE_URL");
    ::unsetenv("HEMS_LLM_MODEL");
    ::unsetenv("ENTSOE_API_TOKEN");
    CHECK(code_of([] { (void)EntsoeConfig::from_env(); }) == ErrorCode::kConfig);
    ::unsetenv("HEMS_CAL_CREDENTIALS");
    CHECK(code_of([] { (void)GoogleCalendarConfig::from_env(); }) == ErrorCode::kConfig);
  }

  TEST_CASE("ENTSO-E client") {
    LocalServer srv;
    httplib::Params seen;
    std::atomic<int> mode{0};
    const auto xml = read_file(source_path("testdata/entsoe/at_2025-10-15_hourly.xml"));
    srv.server.Get("/api", [&](const httplib::Request& req, httplib::Response& res) {
      seen = req.params;
      if (mode == 1) res.status = 401;
      else if (mode == 2) res.status = 503;
      else res.set_content(xml, "application/xml");
    });
    srv.start();
    EntsoeConfig c;
    c.token = "tok";
    c.base_url = srv.url("/api");
    EntsoePriceProvider p(c);
    const auto curve = p.fetch_prices(fixture_date(), "AT");
    CHECK(curve.prices().size() == 96);
    CHECK(seen.find("documentType")->second == "A44");
    CHECK(seen.find("in_Domain")->second == "10YAT-APG------L");
    CHECK(seen.find("periodStart")->second == "202510142200");
    CHECK(seen.find("securityToken")->second == "tok");
    mode = 1;
    CHECK(code_of([&] { (void)p.fetch_prices(fixture_date(), "AT"); }) == ErrorCode::kConfig);
    mode = 2;
    CHECK(code_of([&] { (void)p.fetch_prices(fixture_date(), "AT"); }) == ErrorCode::kBackendUnavailable);
  }

  TEST_CASE("Google calendar client") {
    LocalServer srv;
    std::string auth;
    srv.server.Get("/cal/calendars/primary/events", [&](const httplib::Request& req, httplib::Response& res) {
      auth = req.get_header_value("Authorization");
      const nlohmann::json j = {{"items",
                                 {{{"summary", "Dentist"},
                                   {"start", {{"dateTime", "2025-10-15T07:00:00+02:00"}}},
                                   {"end", {{"dateTime", "2025-10-15T08:00:00+02:00"}}}}}}};
      res.set_content(j.dump(), "application/json");
    });
    srv.start();
    GoogleCalendarConfig c;
    c.access_token = "ya29.x";
    c.base_url = srv.url("/cal");
    GoogleCalendarProvider p(c);
    const auto mid = local_midnight(fixture_date());
    const auto ev = p.fetch_events(mid, mid + std::chrono::days{1});
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].title == "Dentist");
    CHECK(auth == "Bearer ya29.x");
  }
}
