#include "fedhub/common/append_log.h"
#include "fedhub/common/error.h"
#include "fedhub/common/hash.h"
#include "fedhub/common/text.h"
#include "fedhub/common/time.h"
#include "fedhub/kernels/scoring.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace fedhub;
using fedhub::testing::TempDir;

TEST_CASE("rfc3339: parse and format round trip", "[time]") {
  const auto t = parse_rfc3339("2025-03-01T09:00:00Z");
  REQUIRE(t);
  CHECK(format_rfc3339(*t) == "2025-03-01T09:00:00Z");
  CHECK(t->seconds == 1740819600);
}

TEST_CASE("rfc3339: offsets normalize to UTC and fractions truncate", "[time]") {
  CHECK(format_rfc3339(*parse_rfc3339("2025-03-01T19:30:00+10:30")) == "2025-03-01T09:00:00Z");
  CHECK(format_rfc3339(*parse_rfc3339("2025-03-01T09:00:00.987Z")) == "2025-03-01T09:00:00Z");
}

TEST_CASE("rfc3339: malformed input is rejected", "[time]") {
  CHECK_FALSE(parse_rfc3339("2025-03-01"));
  CHECK_FALSE(parse_rfc3339("2025-13-01T00:00:00Z"));
  CHECK_FALSE(parse_rfc3339("2025-02-30T00:00:00Z"));
  CHECK_THROWS_AS(parse_rfc3339_or_throw("yesterday"), Error);
}

TEST_CASE("iso dates: leap years", "[time]") {
  CHECK(parse_iso_date("2024-02-29"));
  CHECK_FALSE(parse_iso_date("2023-02-29"));
  CHECK(format_iso_date(*parse_iso_date("1970-01-01")) == "1970-01-01");
  CHECK(*parse_iso_date("1970-01-02") == 1);
}

TEST_CASE("sha256: known digest", "[hash]") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("hash_fields: field boundaries matter", "[hash]") {
  CHECK(hash_fields({"ab", "c"}) != hash_fields({"a", "bc"}));
  CHECK(hash_fields({"ab", "c"}) == hash_fields({"ab", "c"}));
}

TEST_CASE("text: trim, split and case", "[text]") {
  CHECK(text::trim("  a b \t") == "a b");
  CHECK(text::split("a,,b", ',') == std::vector<std::string>{"a", "", "b"});
  CHECK(text::split_whitespace("  John   Smith ") == std::vector<std::string>{"John", "Smith"});
  CHECK(text::to_lower("MiXeD") == "mixed");
}

TEST_CASE("text: numeric parsing is strict", "[text]") {
  CHECK(text::parse_integer("42") == 42);
  CHECK_FALSE(text::parse_integer("42x"));
  CHECK(text::parse_decimal("0.5") == 0.5);
  CHECK_FALSE(text::parse_decimal(""));
  CHECK(text::format_decimal(0.1) == "0.1");
}

TEST_CASE("tokenize_line: quotes, columns and comments", "[text]") {
  const auto toks = text::tokenize_line(R"x(rule r1 cite "s 3E(1)" # trailing)x", 1);
  REQUIRE(toks.size() == 4);
  CHECK(toks[3].value == "s 3E(1)");
  CHECK(toks[3].quoted);
  CHECK(toks[1].column == 6);
  CHECK_THROWS_AS(text::tokenize_line(R"(a "unterminated)", 3), ParseError);
}

TEST_CASE("parse_csv: quoted fields with commas and escaped quotes", "[text]") {
  const auto t = text::parse_csv("id,name\n1,\"Nguyen, Thi\"\n2,\"say \"\"hi\"\"\"\n");
  CHECK(t.header == std::vector<std::string>{"id", "name"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "Nguyen, Thi");
  CHECK(t.rows[1][1] == "say \"hi\"");
}

TEST_CASE("append_log: lines survive reopen", "[append_log]") {
  TempDir dir;
  {
    std::vector<std::string> lines;
    auto log = AppendLog::open(dir / "x.log", lines);
    CHECK(lines.empty());
    log.append("one");
    log.append(std::vector<std::string>{"two", "three"});
  }
  std::vector<std::string> lines;
  auto log = AppendLog::open(dir / "x.log", lines);
  CHECK(lines == std::vector<std::string>{"one", "two", "three"});
  CHECK(log.dropped_bytes() == 0);
}

TEST_CASE("append_log: a torn tail is dropped, never replayed", "[append_log]") {
  TempDir dir;
  {
    std::ofstream out(dir / "x.log", std::ios::binary);
    out << "complete\n{\"half";
  }
  std::vector<std::string> lines;
  auto log = AppendLog::open(dir / "x.log", lines);
  CHECK(lines == std::vector<std::string>{"complete"});
  CHECK(log.dropped_bytes() == 6);
  log.append("next");
  std::vector<std::string> again;
  AppendLog::open(dir / "x.log", again);
  CHECK(again == std::vector<std::string>{"complete", "next"});
}

TEST_CASE("append_log: newline inside a line is refused", "[append_log]") {
  TempDir dir;
  std::vector<std::string> lines;
  auto log = AppendLog::open(dir / "x.log", lines);
  CHECK_THROWS_AS(log.append("a\nb"), Error);
}

TEST_CASE("kernels: parallel scoring matches serial", "[kernels]") {
  auto f = [](std::size_t i) { return static_cast<double>((i * 7919) % 101) / 100.0; };
  CHECK(kernels::score_all(5000, f) == kernels::serial::score_all(5000, f));
  auto g = [](std::size_t i, std::size_t j) { return static_cast<double>(i * 31 + j) / 1000.0; };
  const auto par = kernels::score_pairs(60, g);
  CHECK(par == kernels::serial::score_pairs(60, g));
  CHECK(par.size() == 60 * 59 / 2);
  CHECK(par[kernels::pair_index(60, 3, 10)] == g(3, 10));
}
