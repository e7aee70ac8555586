// SPDX-License-Identifier: Apache-2.0
#include "hems/providers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "hems/error.hpp"
#include "hems/text.hpp"

namespace hems {
namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, fmt::format("{}: {}", path.string(), e.what()));
  }
}

// "HH:MM" to minutes after midnight, 24:00 allowed as an end time.
std::optional<int> parse_clock(std::string_view s) {
  s = text::trim(s);
  if (s.size() != 5 || s[2] != ':') return std::nullopt;
  const auto h = text::parse_int(s.substr(0, 2));
  const auto m = text::parse_int(s.substr(3, 2));
  if (!h || !m || *h < 0 || *m < 0 || *m > 59 || *h > 24 || (*h == 24 && *m != 0)) return std::nullopt;
  return static_cast<int>(*h * 60 + *m);
}

sys_days last_sunday(year y, month m) {
  return sys_days{year_month_weekday_last{y, m, weekday_last{Sunday}}};
}

// UTC offset in hours at local midnight opening the given day.
int cet_offset_at_midnight(sys_days day) {
  const year y = year_month_day{day}.year();
  return (day > last_sunday(y, March) && day <= last_sunday(y, October)) ? 2 : 1;
}

// ---- minimal XML reader -----------------------------------------------------
// Enough for the transparency platform's documents: elements, attributes
// (skipped), text, comments, declarations. Every node keeps its byte offset.

struct XmlNode {
  std::string name;  // local name, namespace prefix removed
  std::string text;
  std::size_t offset = 0;
  std::vector<XmlNode> children;

  const XmlNode* child(std::string_view n) const {
    for (const auto& c : children) {
      if (c.name == n) return &c;
    }
    return nullptr;
  }
};

[[noreturn]] void xml_fail(std::size_t offset, std::string_view what) {
  throw Error(ErrorCode::kParse, fmt::format("XML parse error at byte {}: {}", offset, what));
}

std::string local_name(std::string_view qname) {
  const auto colon = qname.find(':');
  return std::string(colon == std::string_view::npos ? qname : qname.substr(colon + 1));
}

void decode_entities(std::string& s) {
  static const std::pair<std::string_view, char> kEntities[] = {
      {"&lt;", '<'}, {"&gt;", '>'}, {"&amp;", '&'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    bool replaced = false;
    if (s[i] == '&') {
      for (const auto& [ent, ch] : kEntities) {
        if (std::string_view(s).substr(i, ent.size()) == ent) {
          out.push_back(ch);
          i += ent.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(s[i++]);
  }
  s = std::move(out);
}

class XmlReader {
 public:
  explicit XmlReader(std::string_view doc) : d_(doc) {}

  XmlNode parse_document() {
    skip_misc();
    if (pos_ >= d_.size() || d_[pos_] != '<') xml_fail(pos_, "expected root element");
    XmlNode root = parse_element();
    skip_misc();
    if (pos_ != d_.size()) xml_fail(pos_, "content after root element");
    return root;
  }

 private:
  void skip_ws() {
    while (pos_ < d_.size() && std::isspace(static_cast<unsigned char>(d_[pos_]))) ++pos_;
  }

  void skip_until(std::string_view terminator, std::size_t from) {
    const auto end = d_.find(terminator, pos_);
    if (end == std::string_view::npos) xml_fail(from, fmt::format("unterminated construct, missing '{}'", terminator));
    pos_ = end + terminator.size();
  }

  // Declarations, comments, processing instructions and whitespace.
  void skip_misc() {
    for (;;) {
      skip_ws();
      const auto rest = d_.substr(pos_);
      if (rest.starts_with("<?")) {
        skip_until("?>", pos_);
      } else if (rest.starts_with("<!--")) {
        skip_until("-->", pos_);
      } else if (rest.starts_with("<!")) {
        skip_until(">", pos_);
      } else {
        return;
      }
    }
  }

  std::string read_name() {
    const auto start = pos_;
    while (pos_ < d_.size()) {
      const char c = d_[pos_];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '>' || c == '/' || c == '=') break;
      ++pos_;
    }
    if (pos_ == start) xml_fail(start, "expected a name");
    return std::string(d_.substr(start, pos_ - start));
  }

  XmlNode parse_element() {
    XmlNode node;
    node.offset = pos_;
    ++pos_;  // '<'
    const std::string qname = read_name();
    node.name = local_name(qname);
    // Attributes are not needed; skip them while honouring quotes.
    for (;;) {
      skip_ws();
      if (pos_ >= d_.size()) xml_fail(node.offset, "unterminated start tag");
      if (d_[pos_] == '/') {
        if (pos_ + 1 >= d_.size() || d_[pos_ + 1] != '>') xml_fail(pos_, "expected '/>'");
        pos_ += 2;
        return node;
      }
      if (d_[pos_] == '>') {
        ++pos_;
        break;
      }
      read_name();
      skip_ws();
      if (pos_ >= d_.size() || d_[pos_] != '=') xml_fail(pos_, "expected '=' in attribute");
      ++pos_;
      skip_ws();
      if (pos_ >= d_.size() || (d_[pos_] != '"' && d_[pos_] != '\'')) xml_fail(pos_, "expected quoted attribute value");
      const char quote = d_[pos_];
      const auto close = d_.find(quote, pos_ + 1);
      if (close == std::string_view::npos) xml_fail(pos_, "unterminated attribute value");
      pos_ = close + 1;
    }
    for (;;) {
      if (pos_ >= d_.size()) xml_fail(node.offset, fmt::format("element <{}> is never closed", qname));
      if (d_[pos_] != '<') {
        const auto next = d_.find('<', pos_);
        const auto end = next == std::string_view::npos ? d_.size() : next;
        node.text.append(d_.substr(pos_, end - pos_));
        pos_ = end;
        continue;
      }
      const auto rest = d_.substr(pos_);
      if (rest.starts_with("</")) {
        const auto at = pos_;
        pos_ += 2;
        const std::string closing = read_name();
        skip_ws();
        if (pos_ >= d_.size() || d_[pos_] != '>') xml_fail(pos_, "expected '>'");
        ++pos_;
        if (closing != qname) xml_fail(at, fmt::format("</{}> does not close <{}>", closing, qname));
        decode_entities(node.text);
        return node;
      }
      if (rest.starts_with("<!--")) {
        skip_until("-->", pos_);
      } else if (rest.starts_with("<![CDATA[")) {
        const auto start = pos_ + 9;
        skip_until("]]>", pos_);
        node.text.append(d_.substr(start, pos_ - 3 - start));
      } else if (rest.starts_with("<?")) {
        skip_until("?>", pos_);
      } else {
        node.children.push_back(parse_element());
      }
    }
  }

  std::string_view d_;
  std::size_t pos_ = 0;
};

std::optional<sys_seconds> parse_utc_minutes(std::string_view s) {
  // "2025-10-14T22:00Z"
  s = text::trim(s);
  if (s.size() < 17 || s[10] != 'T' || s.back() != 'Z') return std::nullopt;
  const auto date = parse_iso_date(s.substr(0, 10));
  const auto clock = parse_clock(s.substr(11, 5));
  if (!date || !clock) return std::nullopt;
  return sys_days{*date} + minutes{*clock};
}

const XmlNode& require(const XmlNode& parent, std::string_view name) {
  const auto* c = parent.child(name);
  if (!c) xml_fail(parent.offset, fmt::format("<{}> lacks <{}>", parent.name, name));
  return *c;
}

}  // namespace

// ---- price fixtures -------------------------------------------------------

PriceFixture parse_price_fixture(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "price fixture must be a JSON object");
  PriceFixture f;
  try {
    const auto date = parse_iso_date(j.at("market_date").get<std::string>());
    if (!date) throw Error(ErrorCode::kParse, "price fixture market_date is not YYYY-MM-DD");
    f.market_date = *date;
    f.zone = j.value("zone", "AT");
    const std::string unit = j.value("unit", "EUR_MWH");
    double scale = 1.0;
    if (unit == "EUR_KWH") {
      scale = 1000.0;
    } else if (unit != "EUR_MWH") {
      throw Error(ErrorCode::kData, fmt::format("unsupported price unit {}", unit));
    }
    for (const auto& v : j.at("prices")) f.prices.push_back(v.get<double>() * scale);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("price fixture: {}", e.what()));
  }
  if (f.prices.size() != kSlotsPerDay) {
    throw Error(ErrorCode::kData, fmt::format("price fixture needs {} prices, got {}", kSlotsPerDay, f.prices.size()));
  }
  for (std::size_t i = 0; i < f.prices.size(); ++i) {
    if (!std::isfinite(f.prices[i])) throw Error(ErrorCode::kData, fmt::format("price {} is not finite", i));
  }
  return f;
}

PriceFixture load_price_fixture(const fs::path& path) { return parse_price_fixture(read_json_file(path)); }

nlohmann::json to_json(const PriceFixture& f) {
  return {{"market_date", to_iso(f.market_date)}, {"zone", f.zone}, {"unit", "EUR_MWH"}, {"prices", f.prices}};
}

FixturePriceProvider::FixturePriceProvider(const fs::path& file_or_dir) {
  if (fs::is_directory(file_or_dir)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(file_or_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add(load_price_fixture(f));
  } else {
    add(load_price_fixture(file_or_dir));
  }
}

void FixturePriceProvider::add(PriceFixture fixture) {
  auto key = std::make_pair(fixture.zone, to_iso(fixture.market_date));
  by_key_.insert_or_assign(std::move(key), std::move(fixture));
}

PriceCurve FixturePriceProvider::fetch_prices(Date date, std::string_view zone) {
  const auto it = by_key_.find({std::string(zone), to_iso(date)});
  if (it == by_key_.end()) {
    throw Error(ErrorCode::kNotFound, fmt::format("no price fixture for zone {} on {}", zone, to_iso(date)));
  }
  return PriceCurve(it->second.prices, it->second.market_date, PriceSource::kFixture);
}

std::vector<std::pair<std::string, Date>> FixturePriceProvider::available() const {
  std::vector<std::pair<std::string, Date>> out;
  for (const auto& [key, f] : by_key_) out.emplace_back(f.zone, f.market_date);
  return out;
}

PriceCurve InMemoryPriceProvider::fetch_prices(Date date, std::string_view zone) {
  ++fetches_;
  if (date != curve_.market_date()) {
    throw Error(ErrorCode::kNotFound, fmt::format("no prices for zone {} on {}", zone, to_iso(date)));
  }
  return curve_;
}

// ---- ENTSO-E --------------------------------------------------------------

std::string entsoe_area_code(std::string_view zone) {
  static const std::map<std::string, std::string, std::less<>> kCodes = {
      {"AT", "10YAT-APG------L"}, {"DE-LU", "10Y1001A1001A82H"}, {"DE", "10Y1001A1001A82H"},
      {"CH", "10YCH-SWISSGRIDZ"}, {"FR", "10YFR-RTE------C"},    {"NL", "10YNL----------L"},
      {"BE", "10YBE----------2"}, {"CZ", "10YCZ-CEPS-----N"},    {"SI", "10YSI-ELES-----O"},
      {"HU", "10YHU-MAVIR----U"}};
  const std::string upper = [&] {
    std::string s(text::trim(zone));
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  }();
  if (const auto it = kCodes.find(upper); it != kCodes.end()) return it->second;
  if (upper.size() == 16) return upper;
  throw Error(ErrorCode::kConfig, fmt::format("unknown bidding zone {}", zone));
}

UtcInterval market_day_utc(Date date) {
  const sys_days day{date};
  const sys_days next = day + days{1};
  return {sys_seconds{day} - hours{cet_offset_at_midnight(day)},
          sys_seconds{next} - hours{cet_offset_at_midnight(next)}};
}

std::string entsoe_timestamp(sys_seconds t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  return fmt::format("{:04d}{:02d}{:02d}{:02d}{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()), hms.hours().count(), hms.minutes().count());
}

PriceCurve parse_entsoe_xml(std::string_view xml, Date market_date) {
  const XmlNode root = XmlReader(xml).parse_document();
  if (root.name == "Acknowledgement_MarketDocument") {
    std::string reason = "no data";
    if (const auto* r = root.child("Reason")) {
      if (const auto* t = r->child("text")) reason = std::string(text::trim(t->text));
    }
    throw Error(ErrorCode::kData, fmt::format("transparency platform returned an acknowledgement: {}", reason));
  }
  if (root.name != "Publication_MarketDocument") {
    xml_fail(root.offset, fmt::format("unexpected root element <{}>", root.name));
  }

  const auto day = market_day_utc(market_date);
  const auto day_slots = static_cast<int>((day.end - day.start) / minutes{kMinutesPerSlot});
  std::vector<std::optional<double>> slots(static_cast<std::size_t>(std::max(day_slots, 0)));

  for (const auto& series : root.children) {
    if (series.name != "TimeSeries") continue;
    double scale = 1.0;
    if (const auto* unit = series.child("price_Measure_Unit.name")) {
      const auto u = text::trim(unit->text);
      if (u == "KWH") scale = 1000.0;
      else if (u != "MWH") xml_fail(unit->offset, fmt::format("unsupported price unit {}", u));
    }
    for (const auto& period : series.children) {
      if (period.name != "Period") continue;
      const auto& interval = require(period, "timeInterval");
      const auto start = parse_utc_minutes(require(interval, "start").text);
      if (!start) xml_fail(interval.offset, "bad timeInterval start");
      const auto& res_node = require(period, "resolution");
      const auto res = text::trim(res_node.text);
      int step = 0;
      if (res == "PT15M") step = 1;
      else if (res == "PT30M") step = 2;
      else if (res == "PT60M" || res == "PT1H") step = 4;
      else xml_fail(res_node.offset, fmt::format("unsupported resolution {}", res));

      const auto first_slot = static_cast<long long>((*start - day.start) / minutes{kMinutesPerSlot});
      std::vector<std::pair<long long, double>> points;
      for (const auto& point : period.children) {
        if (point.name != "Point") continue;
        const auto& pos_node = require(point, "position");
        const auto pos = text::parse_int(text::trim(pos_node.text));
        if (!pos || *pos < 1) xml_fail(pos_node.offset, "position must be a positive integer");
        const auto& amount = require(point, "price.amount");
        const std::string amount_text(text::trim(amount.text));
        double value = 0.0;
        try {
          std::size_t used = 0;
          value = std::stod(amount_text, &used);
          if (used != amount_text.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          xml_fail(amount.offset, fmt::format("price.amount '{}' is not a number", amount_text));
        }
        if (!std::isfinite(value)) xml_fail(amount.offset, "price.amount is not finite");
        points.emplace_back(*pos, value * scale);
      }
      std::sort(points.begin(), points.end());
      // Curve type A03 omits positions whose value repeats; fill them forward
      // up to the end of the period.
      const auto end = parse_utc_minutes(require(interval, "end").text);
      if (!end) xml_fail(interval.offset, "bad timeInterval end");
      const auto period_positions = static_cast<long long>((*end - *start) / minutes{kMinutesPerSlot * step});
      std::size_t next = 0;
      std::optional<double> current;
      for (long long p = 1; p <= period_positions; ++p) {
        if (next < points.size() && points[next].first == p) current = points[next++].second;
        if (!current) continue;
        for (int k = 0; k < step; ++k) {
          const long long slot = first_slot + (p - 1) * step + k;
          if (slot >= 0 && slot < static_cast<long long>(slots.size()) && !slots[slot]) slots[slot] = current;
        }
      }
    }
  }

  std::vector<double> prices;
  for (const auto& s : slots) {
    if (s) prices.push_back(*s);
  }
  if (prices.size() != kSlotsPerDay || slots.size() != kSlotsPerDay) {
    throw Error(ErrorCode::kData, fmt::format("expected {} quarter-hour prices for {}, got {} of {}", kSlotsPerDay,
                                              to_iso(market_date), prices.size(), slots.size()));
  }
  return PriceCurve(std::move(prices), market_date, PriceSource::kLiveApi);
}

// ---- calendar ---------------------------------------------------------------

std::optional<LocalMinutes> parse_local_datetime(std::string_view s) {
  s = text::trim(s);
  if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ')) return std::nullopt;
  const auto date = parse_iso_date(s.substr(0, 10));
  const auto clock = parse_clock(s.substr(11, 5));
  if (!date || !clock || *clock >= 24 * 60) return std::nullopt;
  auto rest = s.substr(16);
  if (rest.starts_with(":")) {
    if (rest.size() < 3 || !std::isdigit(static_cast<unsigned char>(rest[1])) ||
        !std::isdigit(static_cast<unsigned char>(rest[2]))) {
      return std::nullopt;
    }
    rest.remove_prefix(3);
    if (rest.starts_with(".")) {
      rest.remove_prefix(1);
      while (!rest.empty() && std::isdigit(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
    }
  }
  const bool offset_ok = rest.empty() || rest == "Z" ||
                         (rest.size() == 6 && (rest[0] == '+' || rest[0] == '-') && parse_clock(rest.substr(1)));
  if (!offset_ok) return std::nullopt;
  return LocalMinutes{local_days{*date}.time_since_epoch()} + minutes{*clock};
}

std::string format_local(LocalMinutes t) {
  const auto day = floor<days>(t);
  const year_month_day ymd{sys_days{day.time_since_epoch()}};
  const auto mins = (t - day).count();
  return fmt::format("{}T{:02d}:{:02d}", to_iso(ymd), mins / 60, mins % 60);
}

nlohmann::json to_json(const CalendarEvent& e) {
  return {{"title", e.title}, {"start", format_local(e.start)}, {"end", format_local(e.end)}};
}

FixtureCalendarProvider::FixtureCalendarProvider(std::vector<CalendarEvent> events) : events_(std::move(events)) {
  for (const auto& e : events_) {
    if (!(e.start < e.end)) {
      throw Error(ErrorCode::kData, fmt::format("calendar event '{}' does not start before it ends", e.title));
    }
  }
  std::sort(events_.begin(), events_.end(), [](const CalendarEvent& a, const CalendarEvent& b) {
    return std::tie(a.start, a.title, a.end) < std::tie(b.start, b.title, b.end);
  });
}

FixtureCalendarProvider FixtureCalendarProvider::from_json(const nlohmann::json& j, Date anchor) {
  const nlohmann::json& list = j.is_object() && j.contains("events") ? j.at("events") : j;
  if (!list.is_array()) throw Error(ErrorCode::kParse, "calendar fixture must be a list of events");
  static const std::map<std::string, weekday, std::less<>> kDays = {
      {"mon", Monday}, {"tue", Tuesday}, {"wed", Wednesday}, {"thu", Thursday},
      {"fri", Friday}, {"sat", Saturday}, {"sun", Sunday}};

  std::vector<CalendarEvent> events;
  try {
    for (const auto& item : list) {
      const std::string title = item.at("title").get<std::string>();
      if (item.contains("weekdays")) {
        std::set<unsigned> wanted;
        for (const auto& d : item.at("weekdays")) {
          const auto key = text::to_lower(d.get<std::string>()).substr(0, 3);
          const auto it = kDays.find(key);
          if (it == kDays.end()) throw Error(ErrorCode::kParse, fmt::format("unknown weekday in '{}'", title));
          wanted.insert(it->second.c_encoding());
        }
        const auto from = parse_clock(item.at("start_time").get<std::string>());
        const auto to = parse_clock(item.at("end_time").get<std::string>());
        if (!from || !to) throw Error(ErrorCode::kParse, fmt::format("bad start_time/end_time in '{}'", title));
        for (int offset = -7; offset <= 7; ++offset) {
          const sys_days day = sys_days{anchor} + days{offset};
          if (!wanted.count(weekday{day}.c_encoding())) continue;
          const LocalMinutes midnight{day.time_since_epoch()};
          events.push_back({title, midnight + minutes{*from}, midnight + minutes{*to}});
        }
      } else {
        const auto start = parse_local_datetime(item.at("start").get<std::string>());
        const auto end = parse_local_datetime(item.at("end").get<std::string>());
        if (!start || !end) throw Error(ErrorCode::kParse, fmt::format("bad start/end in '{}'", title));
        events.push_back({title, *start, *end});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("calendar fixture: {}", e.what()));
  }
  return FixtureCalendarProvider(std::move(events));
}

FixtureCalendarProvider FixtureCalendarProvider::load(const fs::path& path, Date anchor) {
  return from_json(read_json_file(path), anchor);
}

std::vector<CalendarEvent> FixtureCalendarProvider::fetch_events(LocalMinutes from, LocalMinutes to) {
  std::vector<CalendarEvent> out;
  for (const auto& e : events_) {
    if (e.start < to && e.end > from) out.push_back(e);
  }
  return out;
}

std::vector<CalendarEvent> parse_google_events(const nlohmann::json& j) {
  std::vector<CalendarEvent> out;
  if (!j.contains("items")) return out;
  const auto when = [](const nlohmann::json& node) -> std::optional<LocalMinutes> {
    if (node.contains("dateTime")) return parse_local_datetime(node.at("dateTime").get<std::string>());
    if (node.contains("date")) {
      const auto d = parse_iso_date(node.at("date").get<std::string>());
      if (d) return LocalMinutes{local_days{*d}.time_since_epoch()};
    }
    return std::nullopt;
  };
  try {
    for (const auto& item : j.at("items")) {
      if (item.value("status", "") == "cancelled") continue;
      const auto start = when(item.at("start"));
      const auto end = when(item.at("end"));
      if (!start || !end || !(*start < *end)) continue;
      out.push_back({item.value("summary", "(untitled)"), *start, *end});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("calendar response: {}", e.what()));
  }
  std::sort(out.begin(), out.end(), [](const CalendarEvent& a, const CalendarEvent& b) {
    return std::tie(a.start, a.title) < std::tie(b.start, b.title);
  });
  return out;
}

}  // namespace hems
