#include "fedhub/common/error.h"
#include "fedhub/kernels/redaction.h"
#include "fedhub/security/redact.h"
#include "fedhub/security/visibility.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

using namespace fedhub;
using namespace fedhub::security;

namespace {

bool sees(const std::string& expr, std::set<std::string> tokens) {
  return authorize(VisibilityExpr::parse(expr), AuthContext("p", std::move(tokens)));
}

}  // namespace

TEST_CASE("visibility: empty expression is public", "[visibility]") {
  const auto e = VisibilityExpr::parse("  ");
  CHECK(e.is_public());
  CHECK(e.print().empty());
  CHECK(authorize(e, AuthContext{}));
}

TEST_CASE("visibility: & binds tighter than |", "[visibility]") {
  const auto e = VisibilityExpr::parse("A|B&C");
  REQUIRE(e.root().kind == VisNode::Kind::any_of);
  CHECK(sees("A|B&C", {"A"}));
  CHECK_FALSE(sees("A|B&C", {"B"}));
  CHECK(sees("A|B&C", {"B", "C"}));
  CHECK_FALSE(sees("(A|B)&C", {"A"}));
}

TEST_CASE("visibility: canonical print flattens and sorts", "[visibility]") {
  CHECK(VisibilityExpr::parse("TF&LE").print() == "LE&TF");
  CHECK(VisibilityExpr::parse("(A&B)&C").print() == "A&B&C");
  CHECK(VisibilityExpr::parse("C|(B|A)").print() == "A|B|C");
  CHECK(VisibilityExpr::parse("(B|A)&C").print() == "(A|B)&C");
  CHECK(VisibilityExpr::parse("((X))").print() == "X");
}

TEST_CASE("visibility: malformed expressions are parse errors", "[visibility]") {
  for (const char* bad : {"A&", "|A", "(A", "A)", "A B", "A&&B", "A|!B", "()"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(VisibilityExpr::parse(bad), ParseError);
  }
}

TEST_CASE("visibility: parse error offset points at the problem", "[visibility]") {
  try {
    VisibilityExpr::parse("LE&(TF|");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 7);
  }
}

TEST_CASE("visibility: token syntax", "[visibility]") {
  CHECK(is_valid_token("LE"));
  CHECK(is_valid_token("team.alpha:rw-1_x"));
  CHECK_FALSE(is_valid_token(""));
  CHECK_FALSE(is_valid_token("a b"));
  CHECK_FALSE(is_valid_token("a&b"));
}

TEST_CASE("visibility: monotone in the token set", "[visibility]") {
  CHECK_FALSE(sees("LE&TF", {"LE"}));
  CHECK(sees("LE&TF", {"LE", "TF"}));
  CHECK(sees("LE&TF", {"LE", "TF", "X"}));
}

TEST_CASE("auth: intersect narrows to granted tokens", "[visibility]") {
  const AuthContext presented("peer", {"LE", "TF"});
  const auto eff = presented.intersect({"LE", "FR"});
  CHECK(eff.tokens == std::set<std::string>{"LE"});
  CHECK(eff.principal == "peer");
}

TEST_CASE("conjoin: drops public operands and canonicalizes", "[visibility]") {
  CHECK(conjoin({}).is_public());
  CHECK(conjoin({VisibilityExpr{}, VisibilityExpr{}}).is_public());
  CHECK(conjoin({VisibilityExpr::parse("TF"), VisibilityExpr{}, VisibilityExpr::parse("LE")}).print() ==
        "LE&TF");
  CHECK(conjoin({VisibilityExpr::parse("A|B"), VisibilityExpr::parse("C")}).print() == "(A|B)&C");
}

TEST_CASE("redact_facts: keeps exactly the authorized facts in order", "[redact]") {
  const auto act = testing::test_activity();
  std::vector<Fact> facts;
  const char* labels[] = {"", "LE", "TF", "LE&TF", "LE|TF", "FR"};
  for (int i = 0; i < 6; ++i) {
    facts.push_back(testing::literal_fact(make_entity_id("Person", std::to_string(i)), "label",
                                          text_value("x"), act, labels[i]));
  }
  const auto out = redact_facts(facts, AuthContext("p", {"LE"}));
  REQUIRE(out.size() == 3);
  CHECK(out[0].id == facts[0].id);
  CHECK(out[1].id == facts[1].id);
  CHECK(out[2].id == facts[4].id);
}

TEST_CASE("redaction kernel: parallel mask equals serial", "[redact][kernels]") {
  const auto act = testing::test_activity();
  std::vector<Fact> facts;
  std::mt19937 rng(7);
  const char* labels[] = {"", "A", "B", "A&B", "A|C", "(A|B)&C", "D"};
  for (int i = 0; i < 20000; ++i) {
    facts.push_back(testing::literal_fact(make_entity_id("Person", std::to_string(i)), "label",
                                          text_value("x"), act, labels[rng() % 7]));
  }
  const AuthContext auth("p", {"A", "C"});
  const auto par = kernels::visibility_mask(facts, auth);
  CHECK(par == kernels::serial::visibility_mask(facts, auth));
  CHECK(kernels::gather(facts, par) == redact_facts(facts, auth));
}
