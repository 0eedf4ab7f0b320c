#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/hubstore/hubstore.h"
#include "fedhub/model/codec.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace fedhub;
using namespace fedhub::testing;
using fedhub::hubstore::HubStore;
using fedhub::security::AuthContext;

namespace {

std::string person(int i) { return make_entity_id("Person", "p" + std::to_string(i)); }

struct Seeded {
  HubStore store{bundled_ontology()};
  Activity act = test_activity();

  Seeded() { store.record_activity(act); }

  std::string put(const std::string& subject, const std::string& pred, Value v, const std::string& vis = "") {
    return store.put_fact(literal_fact(subject, pred, std::move(v), act, vis));
  }
};

}  // namespace

TEST_CASE("put_fact: identical put is a no-op with the same id", "[hubstore]") {
  Seeded s;
  const auto a = s.put(person(1), "name", txt("John Smith"));
  const auto b = s.put(person(1), "name", txt("John Smith"));
  CHECK(a == b);
  CHECK(s.store.fact_count() == 1);
}

TEST_CASE("put_fact: rejects malformed envelopes and ontology violations", "[hubstore]") {
  Seeded s;
  auto f = literal_fact(person(1), "name", txt("x"), s.act);
  SECTION("confidence out of range") {
    f.envelope.confidence = 1.3;
    CHECK_THROWS_AS(s.store.put_fact(f), Error);
  }
  SECTION("unrecorded activity") {
    f.envelope.activity = "ingest:ffffffffffffffff";
    CHECK_THROWS_AS(s.store.put_fact(f), Error);
  }
  SECTION("inverted validity interval") {
    f.envelope.valid_from = ts("2020-01-01T00:00:00Z");
    f.envelope.valid_to = ts("2019-01-01T00:00:00Z");
    CHECK_THROWS_AS(s.store.put_fact(f), Error);
  }
  SECTION("wrong datatype") {
    f.predicate = "dob";
    CHECK_THROWS_AS(s.store.put_fact(f), Error);
  }
  CHECK(s.store.fact_count() == 0);
}

TEST_CASE("put_fact: 100 distinct facts get 100 distinct ids", "[hubstore]") {
  Seeded s;
  std::set<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.insert(s.put(person(i % 10), "label", txt("v" + std::to_string(i))));
  CHECK(ids.size() == 100);
}

TEST_CASE("put_batch: one bad fact rejects the whole batch", "[hubstore]") {
  HubStore store(bundled_ontology());
  const auto act = test_activity();
  std::vector<Fact> facts{literal_fact(person(1), "name", txt("A"), act),
                          literal_fact(person(1), "dob", txt("not a date"), act)};
  CHECK_THROWS_AS(store.put_batch({act}, facts), Error);
  CHECK(store.fact_count() == 0);
  CHECK_FALSE(store.activity(act.id));
}

TEST_CASE("record_activity: reusing an id with other content conflicts", "[hubstore]") {
  HubStore store(bundled_ontology());
  auto a = test_activity();
  store.record_activity(a);
  store.record_activity(a);
  a.agent = "someone else";
  CHECK_THROWS_AS(store.record_activity(a), Error);
}

TEST_CASE("get_entity: per-fact redaction and unknown ids", "[hubstore]") {
  Seeded s;
  s.put(person(1), "name", txt("A"));
  s.put(person(1), "label", txt("le"), "LE");
  s.put(person(1), "label", txt("tf"), "TF");
  CHECK(s.store.get_entity(person(1), AuthContext{}).facts.size() == 1);
  const auto le = s.store.get_entity(person(1), AuthContext("u", {"LE"}));
  REQUIRE(le.facts.size() == 2);
  CHECK(le.concept_name == "Person");
  CHECK(s.store.get_entity(person(99), AuthContext("u", {"LE"})).empty());
}

TEST_CASE("get_entity: as_of uses half-open validity", "[hubstore]") {
  Seeded s;
  auto f = literal_fact(person(1), "label", txt("tenant"), s.act);
  f.envelope.valid_from = ts("2016-01-01T00:00:00Z");
  f.envelope.valid_to = ts("2017-01-01T00:00:00Z");
  s.store.put_fact(f);
  s.put(person(1), "name", txt("always"));
  const AuthContext pub;
  CHECK(s.store.get_entity(person(1), pub, ts("2016-06-01T00:00:00Z")).facts.size() == 2);
  CHECK(s.store.get_entity(person(1), pub, ts("2016-01-01T00:00:00Z")).facts.size() == 2);
  CHECK(s.store.get_entity(person(1), pub, ts("2017-01-01T00:00:00Z")).facts.size() == 1);
  CHECK(s.store.get_entity(person(1), pub, ts("2015-12-31T23:59:59Z")).facts.size() == 1);
  CHECK(s.store.get_entity(person(1), pub).facts.size() == 2);
}

TEST_CASE("keyword_search: ranking equals a full-scan oracle", "[hubstore]") {
  Seeded s;
  const char* firsts[] = {"John", "Mary", "Ahmed", "Lee", "Thi"};
  const char* lasts[] = {"Smith", "Jones", "Karimi", "Wong", "Nguyen"};
  std::mt19937 rng(11);
  for (int i = 0; i < 50; ++i) {
    const std::string name = std::string(firsts[rng() % 5]) + " " + lasts[rng() % 5];
    s.put(person(i), "name", txt(name), i % 7 == 0 ? "LE" : "");
  }
  const AuthContext auth;
  const auto hits = s.store.keyword_search("JOHN smith", auth);

  // Oracle: scan every visible fact, count distinct query tokens per entity.
  std::map<std::string, std::set<std::string>> matched;
  for (const auto& f : s.store.all_facts()) {
    if (!security::authorize(f.envelope.visibility, auth)) continue;
    for (const auto& tok : hubstore::keyword_tokens(f.object.lexical)) {
      if (tok == "john" || tok == "smith") matched[f.subject].insert(tok);
    }
  }
  std::vector<std::pair<std::string, std::size_t>> expected;
  for (const auto& [id, toks] : matched) expected.emplace_back(id, toks.size());
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  REQUIRE(hits.size() == expected.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CHECK(hits[i].entity == expected[i].first);
    CHECK(hits[i].matched_tokens == expected[i].second);
  }
  CHECK(HubStore(bundled_ontology()).keyword_search("smith", auth).empty());
}

TEST_CASE("structured_query: predicates see visible facts only", "[hubstore]") {
  Seeded s;
  s.put(person(1), "name", txt("Lee"));
  s.put(person(2), "name", txt("Lee"), "LE");
  s.put(person(3), "name", txt("Kim"));
  hubstore::StructuredQuery q{"Person", {{"name", hubstore::CompareOp::eq, "Lee"}}, std::nullopt};
  CHECK(s.store.structured_query(q, AuthContext{}) == std::vector<std::string>{person(1)});
  auto both = s.store.structured_query(q, AuthContext("u", {"LE"}));
  CHECK(both.size() == 2);
  CHECK(std::is_sorted(both.begin(), both.end()));
}

TEST_CASE("structured_query: traversal equals a nested-loop join", "[hubstore]") {
  Seeded s;
  std::mt19937 rng(5);
  std::vector<std::string> vehicles;
  for (int v = 0; v < 12; ++v) {
    const auto id = make_entity_id("Vehicle", "v" + std::to_string(v));
    vehicles.push_back(id);
    s.put(id, "plate", txt(v % 3 == 0 ? "XYZ" : "ABC" + std::to_string(v)), v % 4 == 1 ? "LE" : "");
  }
  for (int p = 0; p < 20; ++p) {
    s.put(person(p), "name", txt("P" + std::to_string(p)));
    const int n = static_cast<int>(rng() % 3);
    for (int k = 0; k < n; ++k) {
      s.put(person(p), "ownsVehicle", entity_value(vehicles[rng() % vehicles.size()]), p % 5 == 0 ? "TF" : "");
    }
  }
  hubstore::StructuredQuery q{"Person", {}, hubstore::Traversal{"ownsVehicle", "Vehicle", {{"plate", hubstore::CompareOp::eq, "XYZ"}}}};
  for (const auto& auth : {AuthContext{}, AuthContext("u", {"LE"}), AuthContext("u", {"LE", "TF"})}) {
    std::set<std::string> expected;
    const auto facts = s.store.all_facts();
    for (const auto& link : facts) {
      if (link.predicate != "ownsVehicle" || !security::authorize(link.envelope.visibility, auth)) continue;
      for (const auto& plate : facts) {
        if (plate.subject == link.object.lexical && plate.predicate == "plate" &&
            plate.object.lexical == "XYZ" && security::authorize(plate.envelope.visibility, auth)) {
          expected.insert(link.subject);
        }
      }
    }
    const auto got = s.store.structured_query(q, auth);
    CHECK(std::vector<std::string>(expected.begin(), expected.end()) == got);
  }
}

TEST_CASE("check_query: unknown names are rejected", "[hubstore]") {
  HubStore store(bundled_ontology());
  CHECK_THROWS_AS(store.check_query({"Ghost", {}, std::nullopt}), Error);
  CHECK_THROWS_AS(store.check_query({"Person", {{"shoeSize", hubstore::CompareOp::eq, "9"}}, std::nullopt}), Error);
  CHECK_THROWS_AS(store.check_query({"Person", {}, hubstore::Traversal{"flies", "Vehicle", {}}}), Error);
  CHECK_NOTHROW(store.check_query({"Person", {{"name", hubstore::CompareOp::contains, "x"}}, std::nullopt}));
}

TEST_CASE("predicate_matches: typed comparisons", "[hubstore]") {
  using hubstore::AttributePredicate;
  using hubstore::CompareOp;
  CHECK(hubstore::predicate_matches({"h", CompareOp::gt, "170"}, typed(ValueKind::integer, "180"), ValueKind::integer));
  CHECK_FALSE(hubstore::predicate_matches({"h", CompareOp::gt, "170"}, typed(ValueKind::integer, "99"), ValueKind::integer));
  CHECK(hubstore::predicate_matches({"d", CompareOp::lt, "1990-01-01"}, typed(ValueKind::date, "1980-01-31"), ValueKind::date));
  CHECK(hubstore::predicate_matches({"n", CompareOp::contains, "SMITH"}, txt("John Smith"), ValueKind::text));
  CHECK(hubstore::parse_attribute_predicate("heightCm>=170").op == CompareOp::ge);
  CHECK_THROWS_AS(hubstore::parse_attribute_predicate("=x"), Error);
}

TEST_CASE("promote: curated copy with a promote activity", "[hubstore]") {
  Seeded s;
  const auto id = s.put(person(1), "name", txt("A"));
  const auto curated = s.store.promote(id, "analyst-1", ts("2025-05-01T00:00:00Z"));
  CHECK(curated.partition == Partition::curated);
  CHECK(curated.id != id);
  CHECK(curated.subject == person(1));
  CHECK(s.store.fact(id));
  const auto chain = s.store.provenance_chain(curated.id);
  REQUIRE(chain.size() == 2);
  CHECK(chain[0].kind == ActivityKind::promote);
  CHECK(chain[0].agent == "analyst-1");
  CHECK(chain[1].kind == ActivityKind::ingest);
  CHECK_THROWS_AS(s.store.promote(id, "analyst-1", ts("2025-05-02T00:00:00Z")), Error);
  CHECK_THROWS_AS(s.store.promote(curated.id, "analyst-1", ts("2025-05-02T00:00:00Z")), Error);
  CHECK_THROWS_AS(s.store.promote("nope", "analyst-1", ts("2025-05-02T00:00:00Z")), Error);
}

TEST_CASE("provenance_chain: direct ingest is a single step", "[hubstore]") {
  Seeded s;
  const auto id = s.put(person(1), "name", txt("A"));
  const auto chain = s.store.provenance_chain(id);
  REQUIRE(chain.size() == 1);
  CHECK(chain[0].inputs == std::vector<std::string>{"test-src"});
  CHECK_THROWS_AS(s.store.provenance_chain("unknown"), Error);
}

TEST_CASE("documents: content addressed and redacted", "[hubstore]") {
  HubStore store(bundled_ontology());
  DocumentBlob b;
  b.media_type = "application/octet-stream";
  b.bytes.resize(1 << 20);
  for (std::size_t i = 0; i < b.bytes.size(); ++i) b.bytes[i] = static_cast<char>(i * 31);
  b.envelope.source = "s";
  b.envelope.activity = "ingest:0000000000000000";
  b.envelope.visibility = security::VisibilityExpr::parse("LE");
  const auto id = store.put_document(b);
  CHECK(store.put_document(b) == id);
  CHECK(store.get_document(id, AuthContext("u", {"LE"})).bytes == b.bytes);
  CHECK_THROWS_AS(store.get_document(id, AuthContext{}), Error);
  CHECK_THROWS_AS(store.get_document("missing", AuthContext{}), Error);
}

TEST_CASE("persistence: replay reproduces the snapshot", "[hubstore]") {
  TempDir dir;
  std::string before;
  {
    auto store = HubStore::open(bundled_ontology(), dir.path());
    const auto act = test_activity();
    store->record_activity(act);
    for (int i = 0; i < 30; ++i) store->put_fact(literal_fact(person(i), "name", txt("N" + std::to_string(i)), act));
    store->promote(store->all_facts().front().id, "curator", ts("2025-01-01T00:00:00Z"));
    before = store->snapshot();
    store->write_snapshot(dir / "snap.jsonl");
  }
  auto again = HubStore::open(bundled_ontology(), dir.path());
  CHECK(again->snapshot() == before);
  CHECK(text::read_file((dir / "snap.jsonl").string()) == before);
  CHECK(again->fact_count() == 31);
}

TEST_CASE("persistence: a corrupt complete line refuses to open", "[hubstore]") {
  TempDir dir;
  {
    auto store = HubStore::open(bundled_ontology(), dir.path());
    const auto act = test_activity();
    store->record_activity(act);
    store->put_fact(literal_fact(person(1), "name", txt("A"), act));
    store->put_fact(literal_fact(person(2), "name", txt("B"), act));
  }
  auto content = text::read_file((dir / "facts.log").string());
  const auto pos = content.find("\"B\"");
  REQUIRE(pos != std::string::npos);
  content[pos + 1] = 'C';  // hash no longer matches
  {
    std::ofstream out(dir / "facts.log", std::ios::binary | std::ios::trunc);
    out << content;
  }
  try {
    HubStore::open(bundled_ontology(), dir.path());
    FAIL("expected corruption to be reported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::corrupt);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("codec: fact record round-trips", "[hubstore][codec]") {
  const auto act = test_activity();
  auto f = literal_fact(person(1), "dob", typed(ValueKind::date, "1980-01-31"), act, "LE|TF");
  f.envelope.valid_from = ts("2020-01-01T00:00:00Z");
  f.envelope.external_refs = {{"cms", "P001"}};
  f = with_id(f);
  CHECK(codec::fact_from_line(codec::fact_to_line(f)) == f);
}
