// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "hems/action.hpp"
#include "hems/error.hpp"
#include "hems/oracle.hpp"
#include "hems/providers.hpp"
#include "oracles.hpp"
#include "protocol_gen.hpp"

using namespace hems;
using namespace hems::protocol;
using namespace hems::testing;


TEST_SUITE("protocol") {
  TEST_CASE("thought and action are separated") {
    const auto out = parse_action("Thought: need prices\nACTION: GET_PRICES");
    REQUIRE(out.ok());
    CHECK(out.command->verb == Verb::kGetPrices);
    CHECK(out.thought == "need prices");
    CHECK(out.warnings.empty());
  }

  TEST_CASE("values keep spaces and equals signs") {
    const auto out = parse_action("ACTION: FINISH | summary=a = b, c=d  e");
    REQUIRE(out.ok());
    CHECK(*out.command->arg("summary") == "a = b, c=d  e");
  }

  TEST_CASE("mid-sentence ACTION is not an action line") {
    const auto out = parse_action("I will write ACTION: GET_PRICES later");
    CHECK_FALSE(out.ok());
    CHECK(out.error->kind == ProtocolErrorKind::kNoAction);
  }

  TEST_CASE("errors carry their kind") {
    CHECK(parse_action("ACTION: LAUNCH").error->kind == ProtocolErrorKind::kUnknownAction);
    CHECK(parse_action("ACTION: SCHEDULE | appliance_id=x").error->kind == ProtocolErrorKind::kBadArgs);
    CHECK(parse_action("ACTION: CALCULATE_WINDOW_SUMS | window_size=1.5").error->kind == ProtocolErrorKind::kBadArgs);
    CHECK(parse_action("ACTION: FINISH | nonsense").error->kind == ProtocolErrorKind::kBadArgs);
    CHECK(parse_action("").error->kind == ProtocolErrorKind::kNoAction);
  }

  TEST_CASE("duplicate argument keeps the first value") {
    const auto out = parse_action("ACTION: FINISH | summary=one | summary=two");
    REQUIRE(out.ok());
    CHECK(*out.command->arg("summary") == "one");
    CHECK(out.warnings.size() == 1);
  }

  TEST_CASE("round trip on generated commands") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 2000; ++i) {
      const auto cmd = random_command(rng);
      const auto line = serialize_action(cmd);
      const auto back = parse_action(line);
      REQUIRE_MESSAGE(back.ok(), line);
      CHECK(*back.command == cmd);
      CHECK(serialize_action(*back.command) == line);
    }
  }

  TEST_CASE("parser is total on random bytes") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> len(0, 300);
    for (int i = 0; i < 3000; ++i) {
      std::string s = (i % 3 == 0) ? "ACTION: " : "";
      const int n = len(rng);
      for (int k = 0; k < n; ++k) s.push_back(static_cast<char>(byte(rng)));
      const auto out = parse_action(s);
      CHECK(out.ok() != out.error.has_value());
    }
  }

  TEST_CASE("sanitize_value") {
    CHECK(sanitize_value(" a|b\nc ") == "a/b c");
  }

  TEST_CASE("golden corpus") {
    const auto manifest = nlohmann::json::parse(read_file(source_path("testdata/actions/manifest.json")));
    int n = 0;
    for (const auto& c : manifest.at("recommendations")) {
      const auto text = read_file(source_path("testdata/actions/" + c.at("file").get<std::string>()));
      REQUIRE_MESSAGE(!text.empty(), c.at("file"));
      const auto& spec = canonical_spec(*parse_appliance_id(c.at("appliance").get<std::string>()));
      CAPTURE(c.at("file").get<std::string>());
      if (c.contains("error")) {
        try {
          (void)parse_recommendation(text, spec);
          FAIL("expected a parse error");
        } catch (const Error& e) {
          CHECK(e.code() == ErrorCode::kParse);
          CHECK(std::string(e.what()).find(c.at("error").get<std::string>()) == 0);
        }
      } else {
        const auto rec = parse_recommendation(text, spec);
        CHECK(rec.start_slot.value() == c.at("start_slot").get<int>());
        CHECK(rec.duration_slots == spec.duration_slots);
        if (c.at("price_sum").is_null()) {
          CHECK_FALSE(rec.price_sum);
        } else {
          REQUIRE(rec.price_sum);
          CHECK(*rec.price_sum == doctest::Approx(c.at("price_sum").get<double>()));
        }
        CHECK(rec.notes.size() == c.at("notes").get<std::size_t>());
      }
      ++n;
    }
    for (const auto& c : manifest.at("turns")) {
      const auto text = read_file(source_path("testdata/actions/" + c.at("file").get<std::string>()));
      CAPTURE(c.at("file").get<std::string>());
      const auto out = parse_action(text);
      if (c.contains("error")) {
        REQUIRE(out.error);
        CHECK(to_string(out.error->kind) == c.at("error").get<std::string>());
      } else {
        REQUIRE(out.ok());
        CHECK(to_string(out.command->verb) == c.at("verb").get<std::string>());
        CHECK(out.command->args.size() == c.at("args").size());
        for (const auto& [k, v] : c.at("args").items()) CHECK(*out.command->arg(k) == v.get<std::string>());
        CHECK(out.warnings.size() == c.at("warnings").get<std::size_t>());
      }
      ++n;
    }
    CHECK(n >= 20);
  }

  TEST_CASE("observation golden text") {
    const auto f = load_price_fixture(source_path("fixtures/at_2025-10-15.json"));
    const PriceCurve curve(f.prices, f.market_date, PriceSource::kFixture);
    const auto golden = read_file(source_path("testdata/observations/window_sums_w12.txt"));
    CHECK(render_window_sums(calculate_window_sums(curve, 12)) + "\n" == golden);
    const auto obs = render_prices(curve);
    CHECK(obs.rfind("Observation: prices loaded, 96 slots", 0) == 0);
    CHECK(obs.find("max=") != std::string::npos);
    CHECK(render_error("x") == "Observation: ERROR: x");
  }
}
