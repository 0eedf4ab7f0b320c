#include "fedhub/common/error.h"
#include "fedhub/federation/federation.h"
#include "fedhub/security/redact.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

#include <thread>

using namespace fedhub;
using namespace fedhub::testing;
using namespace fedhub::federation;
using fedhub::hubstore::HubStore;
using fedhub::security::AuthContext;
using namespace std::chrono_literals;

namespace {

class FixedAdapter : public SourceAdapter {
 public:
  explicit FixedAdapter(std::vector<Fact> facts, std::chrono::milliseconds delay = 0ms)
      : facts_(std::move(facts)), delay_(delay) {}
  std::vector<Fact> fetch(const Query&, const AuthContext&, std::chrono::milliseconds) override {
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    return facts_;
  }

 private:
  std::vector<Fact> facts_;
  std::chrono::milliseconds delay_;
};

class FailingAdapter : public SourceAdapter {
 public:
  std::vector<Fact> fetch(const Query&, const AuthContext&, std::chrono::milliseconds) override {
    throw Error(ErrorCode::unavailable, "connection refused");
  }
};

ResolvedSource peer_desc(const std::string& id, const std::string& vis = "",
                         std::set<Capability> caps = {Capability::keyword, Capability::structured}) {
  ResolvedSource r;
  r.desc.id = id;
  r.desc.kind = SourceKind::peer_hub;
  r.desc.endpoint = "http://127.0.0.1:1";
  r.desc.capabilities = std::move(caps);
  r.desc.default_visibility = security::VisibilityExpr::parse(vis);
  return r;
}

SourceRegistry registry() { return SourceRegistry(AdapterSettings{"hub", &bundled_ontology()}); }

Query keyword(const std::string& k) {
  Query q;
  q.keyword = k;
  return q;
}

std::vector<Fact> person(const std::string& key, const std::string& name, const std::string& dob,
                         const std::string& source, const std::string& vis = "") {
  const auto act = test_activity(source);
  const auto id = make_entity_id("Person", source + "|" + key);
  return {literal_fact(id, "name", txt(name), act, vis, source),
          literal_fact(id, "dob", typed(ValueKind::date, dob), act, vis, source)};
}

linker::SimilarityConfig sim() {
  return linker::SimilarityConfig::load_file(data_path("linker/person.sim").string());
}

PartialResult ok_partial(const std::string& source, std::vector<Fact> facts) {
  PartialResult p;
  p.source = source;
  p.facts = restamp(std::move(facts), peer_desc(source).desc, "activity:" + source);
  std::sort(p.facts.begin(), p.facts.end(), [](const Fact& a, const Fact& b) { return a.id < b.id; });
  Activity act;
  act.id = "activity:" + source;
  act.kind = ActivityKind::remote_query;
  act.inputs = {source};
  p.activity = act;
  return p;
}

}  // namespace

TEST_CASE("query json: round trip and rejection", "[federation]") {
  const auto j = nlohmann::json::parse(R"({"concept":"Person","where":[{"attribute":"name","op":"~","value":"smith"}],
    "via":{"relation":"residesAt","concept":"Location","where":[]},"as_of":"2025-01-01T00:00:00Z"})");
  const auto q = query_from_json(j);
  CHECK(q.kind == Query::Kind::structured);
  CHECK(q.structured.predicates.at(0).op == hubstore::CompareOp::contains);
  CHECK(q.structured.traversal->relation == "residesAt");
  CHECK(query_from_json(nlohmann::json::parse(query_to_json(q).dump())) == q);
  CHECK(query_from_json(nlohmann::json::parse(R"({"keyword":"John"})")).keyword == "John");
  CHECK_THROWS_AS(query_from_json(nlohmann::json::parse(R"({"keyword":"  "})")), Error);
  CHECK_THROWS_AS(query_from_json(nlohmann::json::parse(R"({"where":[]})")), Error);
  CHECK_THROWS_AS(query_from_json(nlohmann::json::parse(R"({"concept":"Person","where":[{"attribute":"a","op":"<>","value":"1"}]})")), Error);
  CHECK_THROWS_AS(query_from_json(nlohmann::json::parse(R"([1])")), Error);
}

TEST_CASE("registry: duplicate ids are rejected", "[federation]") {
  auto reg = registry();
  reg.add(peer_desc("b"), std::make_shared<FixedAdapter>(std::vector<Fact>{}));
  reg.add(peer_desc("a"), std::make_shared<FixedAdapter>(std::vector<Fact>{}));
  try {
    reg.add(peer_desc("a"), std::make_shared<FixedAdapter>(std::vector<Fact>{}));
    FAIL("expected a conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }
  REQUIRE(reg.size() == 2);
  CHECK(reg.entries()[0].source.desc.id == "a");
  CHECK_FALSE(reg.find("zzz"));
}

TEST_CASE("registry: csv sources are resolved on registration", "[federation]") {
  auto reg = registry();
  SourceDescriptor d;
  d.id = "people";
  d.kind = SourceKind::csv_file;
  d.endpoint = data_path("fixtures/people/persons.csv").string();
  d.mapping = data_path("fixtures/people/persons.map").string();
  d.capabilities = {Capability::keyword};
  reg.register_source(d);
  const auto e = reg.find("people");
  REQUIRE(e);
  CHECK(e->source.mapping);
  const auto facts = e->adapter->fetch(keyword("mary"), AuthContext{}, 1000ms);
  CHECK(facts.size() == 2);

  d.id = "broken";
  d.mapping = "/nonexistent.map";
  CHECK_THROWS_AS(reg.register_source(d), Error);
  CHECK_FALSE(reg.find("broken"));
}

TEST_CASE("descriptor json round trip", "[federation]") {
  auto d = peer_desc("west", "LE").desc;
  CHECK(descriptor_from_json(nlohmann::json::parse(descriptor_to_json(d).dump())) == d);
  CHECK_THROWS_AS(descriptor_from_json(nlohmann::json::parse(R"({"id":"x","kind":"ftp"})")), Error);
}

TEST_CASE("restamp: source identity, conjoined visibility and external ref", "[federation]") {
  const auto original = person("1", "Ann Lee", "1990-01-01", "west-cases", "TF");
  const auto out = restamp(original, peer_desc("west", "LE").desc, "activity:q");
  REQUIRE(out.size() == 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].envelope.source == "west");
    CHECK(out[i].envelope.activity == "activity:q");
    CHECK(out[i].envelope.visibility.print() == "LE&TF");
    REQUIRE(out[i].envelope.external_refs.size() == 1);
    CHECK(out[i].envelope.external_refs[0].system == "west");
    CHECK(out[i].id == compute_fact_id(out[i]));
    CHECK(out[i].subject == original[i].subject);
  }
}

TEST_CASE("dispatch: ok, error and timeout partials in registry order", "[federation]") {
  auto reg = registry();
  reg.add(peer_desc("a-ok"), std::make_shared<FixedAdapter>(person("1", "Ann Lee", "1990-01-01", "x")));
  reg.add(peer_desc("b-fail"), std::make_shared<FailingAdapter>());
  reg.add(peer_desc("c-slow"), std::make_shared<FixedAdapter>(std::vector<Fact>{}, 2000ms));
  reg.add(peer_desc("d-nocap", "", {Capability::structured}), std::make_shared<FailingAdapter>());
  const auto t0 = std::chrono::steady_clock::now();
  const auto parts = dispatch(keyword("ann"), AuthContext("u", {}), reg, DispatchOptions{200ms, 8});
  const auto waited = std::chrono::steady_clock::now() - t0;
  CHECK(waited < 1500ms);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].source == "a-ok");
  CHECK(parts[0].status == PartialStatus::ok);
  CHECK(parts[0].facts.size() == 2);
  REQUIRE(parts[0].activity);
  CHECK(parts[0].activity->kind == ActivityKind::remote_query);
  CHECK(parts[0].facts[0].envelope.activity == parts[0].activity->id);
  CHECK(parts[1].status == PartialStatus::error);
  CHECK(parts[1].error.find("refused") != std::string::npos);
  CHECK(parts[2].status == PartialStatus::timeout);
  CHECK(parts[2].facts.empty());
}

TEST_CASE("dispatch: no capable sources gives no partials", "[federation]") {
  auto reg = registry();
  reg.add(peer_desc("s", "", {Capability::structured}), std::make_shared<FailingAdapter>());
  CHECK(dispatch(keyword("x"), AuthContext{}, reg, DispatchOptions{}).empty());
}

TEST_CASE("serve_remote: grant intersection and unknown peers", "[federation]") {
  HubStore store(bundled_ontology());
  store.record_activity(test_activity());
  const auto act = test_activity();
  const auto id = make_entity_id("Person", "k");
  store.put_fact(literal_fact(id, "name", txt("Kim Park"), act));
  store.put_fact(literal_fact(id, "gender", txt("F"), act, "LE"));
  store.put_fact(literal_fact(id, "heightCm", typed(ValueKind::integer, "170"), act, "TF"));
  const PeerGrants grants{{"west", {"LE"}}};
  const auto q = keyword("kim");
  CHECK(serve_remote(store, q, "east", {"LE", "TF"}, grants).empty());
  CHECK(serve_remote(store, q, "west", {"LE", "TF"}, grants).size() == 2);
  CHECK(serve_remote(store, q, "west", {"TF"}, grants).size() == 1);
  CHECK(serve_remote(store, q, "west", {}, grants).size() == 1);
  for (const auto& f : serve_remote(store, q, "west", {"LE", "TF", "bad token"}, grants)) {
    CHECK(security::authorize(f.envelope.visibility, AuthContext("west", {"LE"})));
  }
}

TEST_CASE("collate: same person from two sources becomes one entity", "[federation]") {
  const auto p1 = ok_partial("east", person("7", "John Smith", "1980-01-31", "east-db"));
  const auto p2 = ok_partial("west", person("x9", "John Smith", "1980-01-31", "west-db"));
  const auto p3 = ok_partial("north", person("2", "Mary Jones", "1975-07-14", "north-db"));
  const auto r = collate({p1, p2, p3}, {}, sim(), AuthContext("u", {}), bundled_ontology(),
                         keyword("smith"));
  REQUIRE(r.entities.size() == 2);
  CHECK(r.entities[0].members.size() == 2);
  CHECK(r.entities[0].facts.size() == 4);
  CHECK(r.entities[0].id == r.entities[0].members[0]);
  CHECK(r.entities[0].score > r.entities[1].score);
  REQUIRE(r.links_applied.size() == 1);
  CHECK(r.links_applied[0].score == 1.0);
  CHECK(r.activities.size() == 3);
  CHECK(r.per_source.size() == 3);
  CHECK(r.per_source[0].source == "east");
}

TEST_CASE("collate: degraded mode keeps the answers that arrived", "[federation]") {
  PartialResult slow;
  slow.source = "slow";
  slow.status = PartialStatus::timeout;
  slow.error = "no reply";
  PartialResult broken;
  broken.source = "broken";
  broken.status = PartialStatus::error;
  broken.error = "refused";
  broken.facts = person("9", "Leak Ed", "1970-01-01", "b");  // ignored: not ok
  const auto local = person("1", "Ann Lee", "1990-01-01", "local");
  const auto r = collate({slow, broken}, local, sim(), AuthContext{}, bundled_ontology(), keyword("ann"));
  REQUIRE(r.entities.size() == 1);
  CHECK(r.entities[0].facts.size() == 2);
  REQUIRE(r.per_source.size() == 2);
  CHECK(r.per_source[0].source == "broken");
  CHECK(r.per_source[0].status == PartialStatus::error);
  CHECK(r.per_source[0].facts == 0);
  CHECK(r.per_source[1].status == PartialStatus::timeout);
}

TEST_CASE("collate: result redacted under the caller's tokens", "[federation]") {
  const auto p = ok_partial("west", person("1", "Secret Sam", "1960-06-06", "w", "TF"));
  CHECK(collate({p}, {}, sim(), AuthContext("u", {"LE"}), bundled_ontology(), keyword("sam")).entities.empty());
  CHECK(collate({p}, {}, sim(), AuthContext("u", {"TF"}), bundled_ontology(), keyword("sam")).entities.size() == 1);
}

TEST_CASE("collate: independent of partial order", "[federation]") {
  std::vector<PartialResult> parts{
      ok_partial("a", person("1", "John Smith", "1980-01-31", "a")),
      ok_partial("b", person("2", "Jon Smith", "1980-01-31", "b")),
      ok_partial("c", person("3", "John Smith", "1980-01-31", "c")),
      ok_partial("d", person("4", "Mary Jones", "1975-07-14", "d"))};
  // The same fact under two sources' partials must resolve identically.
  parts[3].facts.push_back(parts[0].facts[0]);
  std::sort(parts[3].facts.begin(), parts[3].facts.end(), [](const Fact& a, const Fact& b) { return a.id < b.id; });
  std::vector<int> idx{0, 1, 2, 3};
  std::optional<std::string> first;
  do {
    std::vector<PartialResult> perm;
    for (int i : idx) perm.push_back(parts[i]);
    const auto r = collate(perm, {}, sim(), AuthContext{}, bundled_ontology(), keyword("smith"));
    const auto dumped = consolidated_to_json(r).dump();
    if (!first) first = dumped;
    CHECK(dumped == *first);
  } while (std::next_permutation(idx.begin(), idx.end()));
}

TEST_CASE("collate: structured queries rank by probe similarity", "[federation]") {
  Query q;
  q.kind = Query::Kind::structured;
  q.structured.concept_name = "Person";
  q.structured.predicates = {{"name", hubstore::CompareOp::eq, "John Smith"}};
  const auto r = collate({ok_partial("a", person("1", "Jon Smith", "1980-01-31", "a")),
                          ok_partial("b", person("2", "John Smith", "1999-09-09", "b"))},
                         {}, sim(), AuthContext{}, bundled_ontology(), q);
  REQUIRE(r.entities.size() == 2);
  CHECK(r.entities[0].score == Catch::Approx(1.0));
  CHECK(r.entities[1].score == Catch::Approx(0.5));
}
