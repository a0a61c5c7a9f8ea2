#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "sfc/config.hpp"

using namespace sfc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sfc_config_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("key value parsing and typed getters") {
  auto kv = KeyValueConfig::parse(
      "# comment\n"
      "a = 1\n"
      "b = 2.5\n"
      "flag = off\n"
      "list = x, y ,z\n"
      "nums = 1,0.5,0.25\n"
      "a = 3\n");
  CHECK(kv.get_int("a", 0) == 3);
  CHECK(kv.entries().front().first == "a");  // override keeps first position
  CHECK(kv.get_double("b", 0) == 2.5);
  CHECK_FALSE(kv.get_bool("flag", true));
  CHECK(kv.get_list("list") == std::vector<std::string>{"x", "y", "z"});
  CHECK(kv.get_double_list("nums") == std::vector<double>{1, 0.5, 0.25});
  CHECK(kv.get_int("missing", 9) == 9);
  CHECK_THROWS_AS(kv.require("missing"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("just words\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("x = abc\n").get_int("x", 0), ConfigError);
}

TEST_CASE("with_prefix strips the prefix in order") {
  auto kv = KeyValueConfig::parse("sim.a = 1\nother = 2\nsim.b.c = 3\n");
  auto p = kv.with_prefix("sim");
  REQUIRE(p.size() == 2);
  CHECK(p[0].first == "a");
  CHECK(p[1].first == "b.c");
}

TEST_CASE("#include resolves relative to the including file") {
  auto d = scratch_dir("include");
  fs::create_directories(d / "shared");
  write(d / "shared" / "schema.cfg", "schema.sections = a,b\nseed = 4\n");
  write(d / "run.cfg", "#include shared/schema.cfg\nseed = 5\n");
  auto kv = KeyValueConfig::load(d / "run.cfg");
  CHECK(kv.get_string("schema.sections", "") == "a,b");
  CHECK(kv.get_int("seed", 0) == 5);
  CHECK(kv.canonical() == "schema.sections = a,b\nseed = 5\n");
}

TEST_CASE("#include cycles are rejected") {
  auto d = scratch_dir("cycle");
  write(d / "a.cfg", "#include b.cfg\n");
  write(d / "b.cfg", "#include a.cfg\n");
  CHECK_THROWS_AS(KeyValueConfig::load(d / "a.cfg"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::load(d / "nope.cfg"), ConfigError);
}
