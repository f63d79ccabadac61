#include "raest/csv.hpp"
#include "raest/error.hpp"
#include "raest/rng.hpp"

#include <doctest.h>

#include <charconv>
#include <cmath>
#include <fstream>

using namespace raest;

namespace {

std::filesystem::path temp_csv(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("raest_unit_" + name + ".csv");
}

void write_raw(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  // Chaining equals hashing the concatenation.
  CHECK(fnv1a64("bar", fnv1a64("foo")) == fnv1a64("foobar"));
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("format_double round-trips") {
  Rng rng(8);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.below(80)) - 40);
    const std::string s = format_double(x);
    double y = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), y);
    CHECK(y == x);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("writer and reader agree") {
  const auto p = temp_csv("roundtrip");
  CsvMeta meta{"demo", 2, "00ff", 42, {{"k", "v"}}};
  {
    CsvWriter w(p, meta, {"a", "b"});
    w.row({"1", "x"});
    w.row({"2", "y"});
    CHECK_THROWS_AS(w.row({"3"}), Error);
    w.close();
  }
  const CsvTable t = read_csv(p, "demo", 2, {"a", "b"});
  CHECK(t.meta.spec_hash == "00ff");
  CHECK(t.meta.seed == 42);
  CHECK(t.meta.extra.at("k") == "v");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1] == std::vector<std::string>{"2", "y"});

  std::ifstream in(p);
  std::string first;
  std::getline(in, first);
  CHECK(first == "# raest schema=demo/2 spec=00ff seed=42 k=v");
  std::filesystem::remove(p);
}

TEST_CASE("schema mismatches are hard errors") {
  const auto p = temp_csv("mismatch");
  write_raw(p, "# raest schema=demo/1 spec=0 seed=1\na,b\n1,2\n");
  CHECK_NOTHROW(read_csv(p, "demo", 1, {"a", "b"}));
  CHECK_THROWS_AS(read_csv(p, "other", 1, {"a", "b"}), ValidationError);
  CHECK_THROWS_AS(read_csv(p, "demo", 2, {"a", "b"}), ValidationError);
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "c"}), ValidationError);
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "b", "c"}), ValidationError);

  write_raw(p, "a,b\n1,2\n");
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "b"}), ValidationError);
  write_raw(p, "# raest schema=demo/1 spec=0 seed=1\na,b\n1,2,3\n");
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "b"}), ValidationError);
  write_raw(p, "# raest schema=demo/x spec=0 seed=1\na,b\n");
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "b"}), ValidationError);
  write_raw(p, "# raest schema=demo/1 spec=0 seed=-4\na,b\n");
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "b"}), ValidationError);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(read_csv(p, "demo", 1, {"a", "b"}), ValidationError);
}
