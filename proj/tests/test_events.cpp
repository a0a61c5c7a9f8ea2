#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "sfc/events.hpp"
#include "sfc/generator.hpp"

using namespace sfc;

namespace {

FeatureSchema small_schema() {
  return FeatureSchema({{"age", {"20-30", "30-40", "unknown"}}, {"gender", {"female", "male", "unknown"}}},
                       {"stream", "mail"});
}

ImpressionEvent sample_event() {
  ImpressionEvent e;
  e.timestamp = 1514764800;
  e.user = {"u7", {1, 0}};
  e.ad = {"cr3", "ca1", "ad0", {}};
  e.section = 1;
  e.click = 1;
  return e;
}

}  // namespace

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(FeatureSchema({{"age", {"a"}}}, {"s"}), SchemaError);  // K < 2
  CHECK_THROWS_AS(FeatureSchema({{"age", {"a", "a"}}, {"g", {"x"}}}, {"s"}), SchemaError);
  CHECK_THROWS_AS(FeatureSchema({{"age", {"a b"}}, {"g", {"x"}}}, {"s"}), SchemaError);
  CHECK_THROWS_AS(FeatureSchema({{"age", {"a"}}, {"g", {"x"}}}, {}), SchemaError);
}

TEST_CASE("schema header round-trips") {
  const FeatureSchema s({{"age", {"a", "b"}}, {"geo", {"us", "eu"}}}, {"stream"}, {"category"});
  const auto h = s.header_line();
  CHECK(h == "#schema\tuser:age=a,b\tuser:geo=us,eu\tsection=stream\tad_extra:category");
  CHECK(FeatureSchema::parse_header(h) == s);
  CHECK(FeatureSchema::parse_header(h).hash() == s.hash());
}

TEST_CASE("schema mismatch names the differing field") {
  const FeatureSchema a({{"age", {"a", "b"}}, {"geo", {"us"}}}, {"s"});
  const FeatureSchema b({{"age", {"a", "b"}}, {"geo", {"us", "eu"}}}, {"s"});
  const FeatureSchema c({{"age", {"a", "b"}}, {"gender", {"us"}}}, {"s"});
  CHECK(a.mismatch(a).empty());
  CHECK(a.mismatch(b).find("geo") != std::string::npos);
  CHECK(a.mismatch(c).find("geo") != std::string::npos);
}

TEST_CASE("well-formed line with click=1 parses") {
  const auto schema = small_schema();
  const std::string line = "1514764800\tu7\t30-40\tfemale\tad0\tca1\tcr3\tmail\t1";
  const auto e = parse_event_line(line, schema);
  CHECK(e.click == 1);
  CHECK(e == sample_event());
  CHECK(write_event_line(e, schema) == line);
}

TEST_CASE("field order is fixed regardless of construction order") {
  const auto schema = small_schema();
  ImpressionEvent a = sample_event();
  ImpressionEvent b;
  b.click = 1;
  b.section = 1;
  b.ad.advertiser_id = "ad0";
  b.ad.creative_id = "cr3";
  b.ad.campaign_id = "ca1";
  b.user.feature_values = {1, 0};
  b.user.user_id = "u7";
  b.timestamp = 1514764800;
  CHECK(write_event_line(a, schema) == write_event_line(b, schema));
}

TEST_CASE("distinct events give distinct lines") {
  const auto schema = small_schema();
  auto a = sample_event();
  auto b = a;
  b.ad.creative_id = "cr4";
  CHECK(write_event_line(a, schema) != write_event_line(b, schema));
}

TEST_CASE("parse errors name line and field") {
  const auto schema = small_schema();
  auto field_of = [&](const std::string& line) {
    try {
      parse_event_line(line, schema, 12);
    } catch (const ParseError& e) {
      CHECK(e.line_no == 12);
      return e.field_name;
    }
    return std::string("<none>");
  };
  CHECK(field_of("1514764800\tu7\t30-40\tfemale\tad0\tca1\tcr3\tmail\t2") == "label");
  CHECK(field_of("1514764800\tu7\t30-40\tfemale\tad0\tca1\tcr3\tmail") == "field count");
  CHECK(field_of("15147648x0\tu7\t30-40\tfemale\tad0\tca1\tcr3\tmail\t1") == "timestamp");
  CHECK(field_of("-5\tu7\t30-40\tfemale\tad0\tca1\tcr3\tmail\t1") == "timestamp");
  CHECK(field_of("1514764800\tu7\t90-99\tfemale\tad0\tca1\tcr3\tmail\t1") == "age");
  CHECK(field_of("1514764800\tu7\t30-40\tother\tad0\tca1\tcr3\tmail\t1") == "gender");
  CHECK(field_of("1514764800\tu7\t30-40\tfemale\tad0\tca1\tcr3\tsports\t1") == "section_id");
  CHECK(field_of("1514764800\t\t30-40\tfemale\tad0\tca1\tcr3\tmail\t1") == "user_id");
}

TEST_CASE("write(parse(L)) == L over generator output") {
  auto cfg = default_generator_config();
  cfg.n_users = 300;
  cfg.days = 1;
  cfg.events_per_day = 1000;
  cfg.n_ad_categories = 5;
  cfg.schema = FeatureSchema(cfg.schema.user_types(), cfg.schema.sections(), {"category"});
  cfg.value_weights = default_value_weights(cfg.schema);
  const auto events = generate_stream(cfg);
  REQUIRE(events.size() == 1000);
  for (const auto& e : events) {
    const auto line = write_event_line(e, cfg.schema);
    const auto back = parse_event_line(line, cfg.schema);
    CHECK(write_event_line(back, cfg.schema) == line);
    CHECK(back == e);
  }
}

TEST_CASE("event log read/write and hierarchy check") {
  const auto schema = small_schema();
  std::vector<ImpressionEvent> events{sample_event(), sample_event()};
  events[1].timestamp += 10;
  events[1].click = 0;
  std::stringstream ss;
  write_event_log(ss, schema, events);
  const auto log = read_event_log(ss);
  CHECK(log.schema == schema);
  CHECK(log.events == events);

  auto bad = events;
  bad[1].ad.campaign_id = "ca2";  // same creative, different campaign
  std::stringstream ss2;
  write_event_log(ss2, schema, bad);
  CHECK_THROWS_AS(read_event_log(ss2), ParseError);
}

TEST_CASE("trailing numeric columns are split off") {
  const auto schema = small_schema();
  std::stringstream ss;
  ss << schema.header_line() << "\n#columns\tprediction\tfrequency\n"
     << write_event_line(sample_event(), schema) << "\t0.25\t3\n";
  const auto log = read_event_log(ss);
  REQUIRE(log.events.size() == 1);
  CHECK(log.events[0] == sample_event());
  REQUIRE(log.columns.size() == 2);
  CHECK(log.columns[0][0] == 0.25);
  CHECK(log.columns[1][0] == 3);
}
