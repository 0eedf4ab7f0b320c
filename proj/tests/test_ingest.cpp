#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/federation/source.h"
#include "fedhub/ingest/mapping.h"
#include "fedhub/ingest/pipeline.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace fedhub;
using namespace fedhub::testing;
using namespace fedhub::ingest;
using fedhub::federation::SourceDescriptor;
using fedhub::federation::SourceKind;
using fedhub::hubstore::HubStore;
using fedhub::security::AuthContext;

namespace {

const auto kStart = Timestamp{1740000000};

federation::ResolvedSource csv_source(const std::string& id, const std::string& csv,
                                      const std::string& map, const std::string& vis = "") {
  SourceDescriptor d;
  d.id = id;
  d.kind = SourceKind::csv_file;
  d.endpoint = csv;
  d.mapping = map;
  d.capabilities = {federation::Capability::keyword, federation::Capability::structured};
  d.default_visibility = security::VisibilityExpr::parse(vis);
  return federation::resolve_source(d, bundled_ontology());
}

federation::ResolvedSource people_source() {
  return csv_source("people", data_path("fixtures/people/persons.csv").string(),
                    data_path("fixtures/people/persons.map").string());
}

linker::SimilarityConfig sim() {
  return linker::SimilarityConfig::load_file(data_path("linker/person.sim").string());
}

void write(const std::filesystem::path& p, const std::string& body) {
  std::ofstream(p) << body;
}

std::size_t parse_error_line(const std::string& doc) {
  try {
    parse_mappings(doc, bundled_ontology());
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("transforms: parse and print round trip", "[ingest]") {
  for (const char* t : {"trim", "upper", "date-parse(DD/MM/YYYY)", "split(;)", "split(\",\")"}) {
    CAPTURE(t);
    CHECK(parse_transform(t).print() == t);
  }
  const auto c = parse_transform(R"(concat(surname," "))");
  CHECK(c.kind == TransformKind::concat);
  CHECK(c.other == "surname");
  CHECK(c.sep == " ");
  CHECK(parse_transform(c.print()) == c);
  CHECK_THROWS_AS(parse_transform("lowercase"), Error);
  CHECK_THROWS_AS(parse_transform("split()"), Error);
  CHECK_THROWS_AS(parse_transform("date-parse(MM/YYYY)"), Error);
}

TEST_CASE("transforms: application", "[ingest]") {
  CHECK(apply_transform(parse_transform("trim"), "  a b ") == std::vector<std::string>{"a b"});
  CHECK(apply_transform(parse_transform("upper"), "abc") == std::vector<std::string>{"ABC"});
  CHECK(apply_transform(parse_transform("split(;)"), "C1; C2;;") == std::vector<std::string>{"C1", "C2"});
  CHECK(apply_transform(parse_transform("concat(last, )"), "John", "Smith") ==
        std::vector<std::string>{"John Smith"});
  CHECK(apply_transform(parse_transform("date-parse(DD/MM/YYYY)"), "31/01/1980") ==
        std::vector<std::string>{"1980-01-31"});
  CHECK_THROWS_AS(apply_transform(parse_transform("date-parse(DD/MM/YYYY)"), "1980-01-31"), Error);
}

TEST_CASE("parse_date_with_pattern: rejects impossible dates", "[ingest]") {
  CHECK(parse_date_with_pattern("29/02/2024", "DD/MM/YYYY") == "2024-02-29");
  CHECK_FALSE(parse_date_with_pattern("29/02/2023", "DD/MM/YYYY"));
  CHECK_FALSE(parse_date_with_pattern("31/04/2023", "DD/MM/YYYY"));
  CHECK_FALSE(parse_date_with_pattern("1/1/2023", "DD/MM/YYYY"));
  CHECK(parse_date_with_pattern("2023.12.01", "YYYY.MM.DD") == "2023-12-01");
}

TEST_CASE("mapping DSL: resolves names and reports positions", "[ingest]") {
  const auto set = parse_mappings(R"(# comment
entity Person key(person_id)
map name -> Person.name trim conf=0.9
map dob -> Person.dob date-parse(YYYY-MM-DD) vis="LE&TF"
map addr -> residesAt ref=addresses
)",
                                  bundled_ontology());
  CHECK(set.source_concept == "Person");
  CHECK(set.key_fields == std::vector<std::string>{"person_id"});
  REQUIRE(set.rules.size() == 3);
  CHECK(set.rules[0].confidence == 0.9);
  CHECK(set.rules[1].datatype == ValueKind::date);
  CHECK(set.rules[1].visibility->print() == "LE&TF");
  CHECK(set.rules[2].is_relation);
  CHECK(set.rules[2].ref_source == "addresses");
  CHECK(set.rules[2].line == 5);

  CHECK(parse_error_line("entity Person key(id)\nmap a Person.name\n") == 2);
  CHECK(parse_error_line("map a -> Person.name\n") == 1);
  CHECK(parse_error_line("entity Person key(id)\nentity Person key(id)\n") == 2);
  CHECK(parse_error_line("entity Person key(id)\nmap a -> Person.name\nfrob\n") == 3);
  CHECK(parse_error_line("entity Person key(id)\nmap a -> Person.name vis=\"LE&\"\n") == 2);
  CHECK(parse_error_line("entity Person key(id)\nmap a -> Person.name date-parse(YYYY-MM-DD)\n") == 2);
  CHECK(parse_error_line("entity Person key(id)\n") != 0);
  CHECK_THROWS_MATCHES(parse_mappings("entity Person key(id)\nmap a -> Person.shoeSize\n", bundled_ontology()),
                       Error, Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("shoeSize")));
  CHECK_THROWS_AS(parse_mappings("entity Unicorn key(id)\nmap a -> Entity.label\n", bundled_ontology()), Error);
  CHECK_THROWS_AS(parse_mappings("entity Person key(id)\nmap a -> Location.suburb\n", bundled_ontology()), Error);
  CHECK_THROWS_AS(parse_mappings("entity Person key(id)\nmap a -> residesAt ref=x/Person\n", bundled_ontology()), Error);
  CHECK_THROWS_AS(parse_mappings("entity Person key(id)\nmap a -> Person.name ref=x\n", bundled_ontology()), Error);
}

TEST_CASE("transform: a bad row fails as a whole", "[ingest]") {
  const auto rules = parse_mappings(
      "entity Person key(id)\nmap name -> Person.name\nmap dob -> Person.dob date-parse(YYYY-MM-DD)\n",
      bundled_ontology());
  const auto table = text::parse_csv("id,name,dob\n1,Ann,2000-01-01\n2,Bob,not-a-date\n3,,2001-02-03\n");
  TransformContext ctx{"s", "activity:x", "tester", kStart, {}};
  const auto out = transform(table, rules, ctx);
  REQUIRE(out.errors.size() == 1);
  CHECK(out.errors[0].item == "row 2");
  CHECK(out.facts.size() == 3);  // row 3 has no name, only a dob
  CHECK(out.entities.size() == 2);
  for (const auto& f : out.facts) {
    CHECK(f.id == compute_fact_id(f));
    CHECK(f.envelope.recorded_at == kStart);
  }
}

TEST_CASE("transform: recorded_at column and default visibility", "[ingest]") {
  const auto rules = parse_mappings("entity Person key(id)\nmap name -> Person.name\nmap g -> Person.gender vis=\"TF\"\n",
                                    bundled_ontology());
  const auto table = text::parse_csv("id,name,g,recorded_at\n1,Ann,F,2024-05-01T10:00:00Z\n");
  TransformContext ctx{"s", "activity:x", "tester", kStart, security::VisibilityExpr::parse("LE")};
  const auto out = transform(table, rules, ctx);
  REQUIRE(out.facts.size() == 2);
  for (const auto& f : out.facts) {
    CHECK(f.envelope.recorded_at == ts("2024-05-01T10:00:00Z"));
    CHECK(f.envelope.visibility.print() == (f.predicate == "gender" ? "TF" : "LE"));
  }
}

TEST_CASE("pipeline: person fixture counts and stage order", "[ingest]") {
  HubStore store(bundled_ontology());
  Pipeline p(store, sim(), stepping_clock(kStart));
  const auto run = p.run(people_source(), "");
  CHECK(run.counts.records_read == 10);
  CHECK(run.counts.facts_emitted == 20);
  CHECK(run.counts.errors == 0);
  CHECK(run.stages == std::vector<std::string>{"acquire", "transform", "annotate", "index", "link"});
  CHECK(store.fact_count() == 20 + run.counts.links_proposed);
  const auto act = store.activity(run.activity);
  REQUIRE(act);
  CHECK(act->inputs == std::vector<std::string>{"people"});
}

TEST_CASE("pipeline: re-ingesting an unchanged batch leaves the store byte-identical", "[ingest]") {
  HubStore store(bundled_ontology());
  Pipeline p(store, sim(), stepping_clock(kStart));
  const auto first = p.run(people_source(), "");
  const auto snap = store.snapshot();
  const auto second = p.run(people_source(), "");
  CHECK(second.counts == first.counts);
  CHECK(second.activity != first.activity);
  CHECK(store.snapshot() == snap);
}

TEST_CASE("pipeline: unreadable batch fails before any write", "[ingest]") {
  HubStore store(bundled_ontology());
  Pipeline p(store, sim(), stepping_clock(kStart));
  CHECK_THROWS_AS(p.run(people_source(), "/nonexistent/x.csv"), Error);
  CHECK(store.fact_count() == 0);
  CHECK(p.runs().empty());
}

TEST_CASE("pipeline: ref= links resolve to the referenced source's entities", "[ingest]") {
  TempDir dir;
  write(dir / "a.csv", "aid,addr\nA1,1 Main St\n");
  write(dir / "a.map", "entity Address key(aid)\nmap addr -> Location.address\n");
  write(dir / "p.csv", "pid,name,aid\nP1,Ann,A1\n");
  write(dir / "p.map", "entity Person key(pid)\nmap name -> Person.name\nmap aid -> residesAt ref=addr-src/Address\n");
  HubStore store(bundled_ontology());
  Pipeline p(store, sim(), stepping_clock(kStart));
  p.run(csv_source("addr-src", (dir / "a.csv").string(), (dir / "a.map").string()), "");
  p.run(csv_source("people-src", (dir / "p.csv").string(), (dir / "p.map").string()), "");
  const auto person = record_entity_id("Person", "people-src", "P1");
  const auto addr = record_entity_id("Address", "addr-src", "A1");
  const auto view = store.get_entity(person, AuthContext{});
  bool found = false;
  for (const auto& f : view.facts) {
    if (f.predicate == "residesAt") found = f.object.lexical == addr;
  }
  CHECK(found);
  CHECK_FALSE(store.get_entity(addr, AuthContext{}).empty());
}

TEST_CASE("pipeline: document extraction", "[ingest]") {
  SourceDescriptor d;
  d.id = "docs";
  d.kind = SourceKind::directory_of_documents;
  d.endpoint = data_path("fixtures/docs").string();
  d.gazetteer = data_path("linker/gazetteer.txt").string();
  d.capabilities = {federation::Capability::keyword};
  const auto src = federation::resolve_source(d, bundled_ontology());
  HubStore store(bundled_ontology());
  Pipeline p(store, sim(), stepping_clock(kStart));
  const auto run = p.run(src, "");
  CHECK(run.counts.records_read == 3);
  CHECK(run.counts.errors == 0);
  // 0412: John Smith, Northbridge Holdings. 0419: Mary Jones, 12 Wattle Street,
  // Fremantle, J. Smith. post: Glock 19, Ahmed Karimi.
  CHECK(run.counts.extractions == 8);
  std::size_t mentions = 0;
  for (const auto& f : store.all_facts()) mentions += f.predicate == "mentions";
  CHECK(mentions == 8);
  const auto note = record_entity_id("Document", "docs", "case-note-0412.txt");
  const auto view = store.get_entity(note, AuthContext{});
  std::string blob;
  for (const auto& f : view.facts) {
    if (f.predicate == "blobId") blob = f.object.lexical;
  }
  const auto doc = store.get_document(blob, AuthContext{});
  CHECK(doc.bytes.find("Northbridge Holdings") != std::string::npos);
  const auto john = extracted_entity_id("Person", "John Smith");
  CHECK_FALSE(store.get_entity(john, AuthContext{}).empty());
}

TEST_CASE("pipeline: run log round trip", "[ingest]") {
  TempDir dir;
  HubStore store(bundled_ontology());
  Pipeline p(store, sim(), stepping_clock(kStart), dir / "runs.log");
  const auto run = p.run(people_source(), "");
  const auto lines = text::split(text::read_file((dir / "runs.log").string()), '\n');
  REQUIRE_FALSE(lines.empty());
  const auto back = run_from_json(nlohmann::json::parse(lines[0]));
  CHECK(back.id == run.id);
  CHECK(back.counts == run.counts);
  CHECK(back.stages == run.stages);
}
