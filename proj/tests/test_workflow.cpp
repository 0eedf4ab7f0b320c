#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/workflow/audit.h"
#include "fedhub/workflow/rules.h"
#include "fedhub/workflow/workflow.h"
#include "support.h"

#include <catch2/catch_amalgamated.hpp>

#include <fstream>

using namespace fedhub;
using namespace fedhub::testing;
using namespace fedhub::workflow;
using fedhub::hubstore::HubStore;
using fedhub::security::AuthContext;

namespace {

const Timestamp kT0{1750000000};

WorkflowEvent ev(const std::string& kind, Timestamp at, Payload payload = {}) {
  WorkflowEvent e;
  e.kind = kind;
  e.occurred_at = at;
  e.payload = std::move(payload);
  return e;
}

RuleSet warrant_rules() {
  return RuleSet::load_file(data_path("rules/search_warrant_s3e.rules").string(), &bundled_ontology());
}

TemplateLibrary templates() {
  return TemplateLibrary::load_file(data_path("workflow/investigation.tpl").string(), &bundled_ontology());
}

GateDecision decide(const RuleSet& rs, const std::vector<WorkflowEvent>& events) {
  const PlanState st{&events, nullptr, &bundled_ontology()};
  return rs.evaluate_gate("issue-warrant", st, kT0);
}

// Events satisfying the rules selected by `mask` (bit i -> rule r(i+1)).
std::vector<WorkflowEvent> warrant_events(unsigned mask) {
  std::vector<WorkflowEvent> out;
  Timestamp t = kT0;
  auto next = [&] { return t = Timestamp{t.seconds + 60}; };
  if (mask & 1u) out.push_back(ev("sworn-statement-recorded", next()));
  // Grounds are always asserted; they only satisfy r2 when present now.
  out.push_back(ev("grounds-asserted", next(), {{"present_now", *make_value(ValueKind::boolean, (mask & 2u) ? "true" : "false")}}));
  if (mask & 4u) out.push_back(ev("offence-described", next()));
  if (mask & 8u) out.push_back(ev("premises-described", next()));
  if (mask & 16u) out.push_back(ev("material-kinds-listed", next()));
  return out;
}

// John Smith with one conviction and one firearm.
void seed_subject(HubStore& store) {
  const auto act = test_activity("case-db");
  store.record_activity(act);
  const auto js = make_entity_id("Person", "js");
  const auto conv = make_entity_id("Conviction", "c1");
  const auto gun = make_entity_id("Firearm", "f1");
  store.put_fact(literal_fact(js, "name", txt("John Smith"), act, "", "case-db"));
  store.put_fact(literal_fact(js, "convictedOf", entity_value(conv), act, "LE", "case-db"));
  store.put_fact(literal_fact(conv, "convictedOn", typed(ValueKind::date, "2019-05-05"), act, "LE", "case-db"));
  store.put_fact(literal_fact(js, "ownsWeapon", entity_value(gun), act, "", "case-db"));
  store.put_fact(literal_fact(gun, "serial", txt("SN-1"), act, "", "case-db"));
}

}  // namespace

TEST_CASE("predicates: parse and print round trip", "[workflow][rules]") {
  for (const char* text :
       {"event(a)", "not(event(a))", "all(event(a), any(event(b), event(c)))", "payload(a.x) = true",
        "payload(a.n) >= 3", "payload(a.s) != \"no\"", "within_hours(a, b, 72)", "within_hours(a, b.at, 1.5)",
        "fact(Person, name)"}) {
    CAPTURE(text);
    const auto p = parse_predicate(text);
    CHECK(parse_predicate(p.print()) == p);
  }
  for (const char* bad : {"", "event()", "all()", "payload(a) = 1", "within_hours(a, b, 0)", "event(a) junk",
                          "frob(a)", "payload(a.x) = "}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_predicate(bad), Error);
  }
}

TEST_CASE("predicates: payload comparisons are typed", "[workflow][rules]") {
  const std::vector<WorkflowEvent> events{
      ev("a", kT0, {{"n", *make_value(ValueKind::integer, "10")}, {"b", *make_value(ValueKind::boolean, "true")},
                    {"s", txt("yes")}})};
  const PlanState st{&events, nullptr, nullptr};
  CHECK(evaluate(parse_predicate("payload(a.n) > 9.5"), st));
  CHECK(evaluate(parse_predicate("payload(a.n) = 10"), st));
  CHECK_FALSE(evaluate(parse_predicate("payload(a.n) < 2"), st));
  CHECK(evaluate(parse_predicate("payload(a.b) = true"), st));
  CHECK_FALSE(evaluate(parse_predicate("payload(a.s) = true"), st));
  CHECK(evaluate(parse_predicate("payload(a.s) = \"yes\""), st));
  CHECK_FALSE(evaluate(parse_predicate("payload(a.missing) = 1"), st));
  CHECK_FALSE(evaluate(parse_predicate("payload(zz.n) = 10"), st));
}

TEST_CASE("predicates: the latest event of a kind counts", "[workflow][rules]") {
  const std::vector<WorkflowEvent> events{ev("a", kT0, {{"ok", *make_value(ValueKind::boolean, "true")}}),
                                          ev("a", Timestamp{kT0.seconds + 1}, {{"ok", *make_value(ValueKind::boolean, "false")}})};
  const PlanState st{&events, nullptr, nullptr};
  CHECK_FALSE(evaluate(parse_predicate("payload(a.ok) = true"), st));
}

TEST_CASE("within_hours: 72 h is inclusive, 72 h + 1 s is not", "[workflow][rules]") {
  const auto p = parse_predicate("within_hours(s, g.expected_at, 72)");
  auto check = [&](std::int64_t offset) {
    const std::vector<WorkflowEvent> events{
        ev("s", kT0), ev("g", Timestamp{kT0.seconds + 1}, {{"expected_at", *make_value(ValueKind::timestamp, format_rfc3339(Timestamp{kT0.seconds + offset}))}})};
    return evaluate(p, PlanState{&events, nullptr, nullptr});
  };
  CHECK(check(0));
  CHECK(check(72 * 3600));
  CHECK_FALSE(check(72 * 3600 + 1));
  CHECK_FALSE(check(-1));
  const auto plain = parse_predicate("within_hours(s, g, 1)");
  const std::vector<WorkflowEvent> late{ev("s", kT0), ev("g", Timestamp{kT0.seconds + 3601})};
  CHECK_FALSE(evaluate(plain, PlanState{&late, nullptr, nullptr}));
}

TEST_CASE("fact predicate honours the concept hierarchy", "[workflow][rules]") {
  const auto act = test_activity();
  const std::vector<Fact> evidence{literal_fact(make_entity_id("Suspect", "1"), "name", txt("X"), act)};
  const PlanState st{nullptr, &evidence, &bundled_ontology()};
  CHECK(evaluate(parse_predicate("fact(Person, name)"), st));
  CHECK(evaluate(parse_predicate("fact(Suspect, name)"), st));
  CHECK_FALSE(evaluate(parse_predicate("fact(Location, name)"), st));
  CHECK_FALSE(evaluate(parse_predicate("fact(Person, dob)"), st));
}

TEST_CASE("rule packs: declarations are enforced", "[workflow][rules]") {
  CHECK_THROWS_AS(RuleSet::parse("gate g\nrule r cite \"c\" require event(undeclared)\n"), Error);
  CHECK_THROWS_AS(RuleSet::parse("kinds a\nrule r cite \"c\" require event(a)\n"), Error);
  CHECK_THROWS_AS(RuleSet::parse("kinds a\ngate g\nrule r cite \"c\" require event(a)\nrule r cite \"d\" require event(a)\n"), Error);
  CHECK_THROWS_AS(RuleSet::parse("kinds a\ngate g\nrule r cite \"c\" require fact(Unicorn, name)\n", &bundled_ontology()), Error);
  auto a = RuleSet::parse("kinds a\ngate g\nrule r1 cite \"c\" require event(a)\n");
  const auto b = RuleSet::parse("kinds a\ngate g\nrule r1 cite \"c\" require event(a)\n");
  CHECK_THROWS_AS(a.merge(b), Error);
  const auto rs = warrant_rules();
  CHECK(rs.gates() == std::vector<std::string>{"issue-warrant"});
  CHECK(rs.rules_for("issue-warrant").size() == 5);
  CHECK(rs.gates_referencing("grounds-asserted") == std::set<std::string>{"issue-warrant"});
  CHECK(rs.gates_referencing("warrant-issued").empty());
  CHECK_FALSE(decide(rs, {}).open);
  CHECK_THROWS_AS(rs.evaluate_gate("nope", PlanState{}, kT0), Error);
}

TEST_CASE("warrant gate: truth table over the five conditions", "[workflow][rules]") {
  const auto rs = warrant_rules();
  for (unsigned mask = 0; mask < 32; ++mask) {
    CAPTURE(mask);
    const auto d = decide(rs, warrant_events(mask));
    CHECK(d.open == (mask == 31u));
    std::vector<std::string> expected_missing;
    for (unsigned i = 0; i < 5; ++i) {
      if (!(mask & (1u << i))) expected_missing.push_back("r" + std::to_string(i + 1));
    }
    std::vector<std::string> missing;
    for (const auto& [id, why] : d.missing) {
      missing.push_back(id);
      CHECK(why.find("Crimes Act 1914") != std::string::npos);
    }
    CHECK(missing == expected_missing);
  }
}

TEST_CASE("warrant gate: grounds within 72 hours of the sworn statement", "[workflow][rules]") {
  const auto rs = warrant_rules();
  auto events_with_expected = [](std::int64_t offset) {
    auto events = warrant_events(31u & ~2u);
    for (auto& e : events) {
      if (e.kind == "grounds-asserted") {
        e.payload["expected_at"] = *make_value(ValueKind::timestamp,
                                               format_rfc3339(Timestamp{events[0].occurred_at.seconds + offset}));
      }
    }
    return events;
  };
  CHECK(decide(rs, events_with_expected(72 * 3600)).open);
  CHECK_FALSE(decide(rs, events_with_expected(72 * 3600 + 1)).open);
}

TEST_CASE("audit log: chain verifies and detects a flipped byte", "[workflow][audit]") {
  TempDir dir;
  const auto path = dir / "audit.log";
  {
    auto log = AuditLog::open(path);
    for (int i = 0; i < 5; ++i) log->append("alice", "op" + std::to_string(i), "{}", "{}", Timestamp{kT0.seconds + i});
    CHECK(log->last_seq() == 5);
    CHECK(log->records()[0].prev_hash == kGenesisHash);
    CHECK(log->records()[1].prev_hash == log->records()[0].this_hash);
  }
  const auto v = verify_audit(path);
  CHECK(v.ok);
  CHECK(v.records == 5);

  auto content = text::read_file(path.string());
  const auto lines = text::split(content, '\n');
  const auto third = lines[0].size() + lines[1].size() + 2;
  const auto pos = content.find("op2", third);
  REQUIRE(pos != std::string::npos);
  content[pos + 2] = '9';
  const auto bad = verify_audit_lines(content);
  CHECK_FALSE(bad.ok);
  CHECK(bad.first_corrupt_seq == 3);
  CHECK(bad.records == 2);

  CHECK(verify_audit_lines(content.substr(0, content.size() - 1)).ok == false);
  CHECK(verify_audit_lines("").ok);
}

TEST_CASE("audit log: every hashed field is covered", "[workflow][audit]") {
  AuditLog log;
  const auto r = log.append("alice", "op", "{\"a\":1}", "{}", kT0);
  CHECK(compute_audit_hash(r) == r.this_hash);
  auto changed = r;
  changed.at = Timestamp{kT0.seconds + 1};
  CHECK(compute_audit_hash(changed) != r.this_hash);
  changed = r;
  changed.actor = "bob";
  CHECK(compute_audit_hash(changed) != r.this_hash);
  changed = r;
  changed.arg_digest[0] = changed.arg_digest[0] == 'a' ? 'b' : 'a';
  CHECK(compute_audit_hash(changed) != r.this_hash);
}

TEST_CASE("audit log: torn tail is dropped, a broken chain refuses to open", "[workflow][audit]") {
  TempDir dir;
  const auto path = dir / "audit.log";
  {
    auto log = AuditLog::open(path);
    log->append("a", "x", "", "", kT0);
    log->append("a", "y", "", "", Timestamp{kT0.seconds + 1});
  }
  { std::ofstream(path, std::ios::app) << "{\"seq\":3,\"at"; }
  {
    auto log = AuditLog::open(path);
    CHECK(log->last_seq() == 2);
    log->append("a", "z", "", "", Timestamp{kT0.seconds + 2});
  }
  CHECK(verify_audit(path).records == 3);

  auto content = text::read_file(path.string());
  content[content.find("\"y\"") + 1] = 'q';
  { std::ofstream(path, std::ios::trunc) << content; }
  try {
    AuditLog::open(path);
    FAIL("expected corrupt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::corrupt);
  }
}

TEST_CASE("templates: bundled library, slots and binding", "[workflow][templates]") {
  const auto lib = templates();
  REQUIRE(lib.find("search-warrant"));
  CHECK(lib.find("search-warrant")->gate == std::optional<std::string>("issue-warrant"));
  CHECK(lib.slots("search-warrant") == std::set<std::string>{"subject"});
  CHECK(lib.slots("residents-at-address") == std::set<std::string>{"address"});
  const auto& req = lib.find("criminal-history")->requirements.at(0);
  CHECK_THROWS_AS(req.bind({}), Error);
  const auto q = req.bind({{"subject", "John Smith"}});
  CHECK(q.predicates.at(0).value == "John Smith");
  CHECK(q.traversal->relation == "convictedOf");
}

TEST_CASE("templates: cycles and dangling sub-goals are rejected", "[workflow][templates]") {
  CHECK_THROWS_AS(TemplateLibrary::parse("template a goal \"A\"\nsubgoal b\ntemplate b goal \"B\"\nsubgoal a\n"), Error);
  CHECK_THROWS_AS(TemplateLibrary::parse("template a goal \"A\"\nsubgoal a\n"), Error);
  CHECK_THROWS_AS(TemplateLibrary::parse("template a goal \"A\"\nsubgoal missing\n"), Error);
  CHECK_THROWS_AS(TemplateLibrary::parse("subgoal a\n"), ParseError);
  CHECK_THROWS_AS(TemplateLibrary::parse("template a goal \"A\"\nrequire query concept=Unicorn\n", &bundled_ontology()), Error);
  CHECK_NOTHROW(TemplateLibrary::parse("template a goal \"A\"\nsubgoal b\ntemplate b goal \"B\"\ntemplate c goal \"C\"\nsubgoal b\n"));
}

TEST_CASE("workflow: a template naming an undeclared gate is refused", "[workflow]") {
  HubStore store(bundled_ontology());
  CHECK_THROWS_AS(Workflow(store, TemplateLibrary::parse("template a goal \"A\"\ngate nowhere\n"), warrant_rules(),
                           stepping_clock(kT0)),
                  Error);
}

TEST_CASE("workflow: search-warrant plan expands depth-first and gathers evidence", "[workflow]") {
  HubStore store(bundled_ontology());
  seed_subject(store);
  Workflow wf(store, templates(), warrant_rules(), stepping_clock(kT0));
  const auto plan = wf.create_plan("CASE-1", "det.brown");
  CHECK_THROWS_AS(wf.instantiate_goal(plan.id, "search-warrant", {}, "det.brown"), Error);
  CHECK_THROWS_AS(wf.instantiate_goal(plan.id, "no-such", {}, "det.brown"), Error);

  const AuthContext le("det.brown", {"LE"});
  const auto p = wf.instantiate_goal(plan.id, "search-warrant", {{"subject", "John Smith"}}, "det.brown", {}, &le);
  std::vector<std::string> templ;
  for (const auto& e : p.elements) templ.push_back(e.template_id);
  CHECK(templ == std::vector<std::string>{"search-warrant", "premises-owner-check", "criminal-history",
                                          "criminal-history", "firearm-ownership", "firearm-ownership",
                                          "prior-warrants", "prior-warrants"});
  for (const auto& e : p.elements) {
    if (e.kind == ElementKind::info_requirement) CHECK(e.status == ElementStatus::satisfied);
  }
  CHECK(p.elements[0].status == ElementStatus::blocked);
  CHECK(p.elements[1].status == ElementStatus::satisfied);
  const auto& history = p.evidence.at(p.elements[3].id);
  CHECK(history.size() == 4);  // name, convictedOf, ownsWeapon and the conviction date

  // The evidence facts cite the plan step in their provenance.
  const auto chain = store.provenance_chain(history[0]);
  bool used = false;
  for (const auto& a : chain) used = used || a.id == p.elements[3].activity;
  CHECK(used);

  // Without LE the conviction link is invisible, so the subject no longer matches.
  const auto narrow = wf.execute_info_requirement(plan.id, p.elements[3].id, AuthContext("intern", {}), "intern");
  CHECK(narrow.empty());
  CHECK(wf.plan(plan.id)->evidence.at(p.elements[3].id).empty());
  CHECK_THROWS_AS(wf.execute_info_requirement(plan.id, p.elements[0].id, le, "x"), Error);
}

TEST_CASE("workflow: events drive the gate and dry runs change nothing", "[workflow]") {
  HubStore store(bundled_ontology());
  Workflow wf(store, templates(), warrant_rules(), fixed_clock(Timestamp{kT0.seconds + 100000}));
  const auto plan = wf.create_plan("CASE-2", "det");
  auto p = wf.instantiate_goal(plan.id, "search-warrant", {{"subject", "Nobody"}}, "det");
  const auto all = warrant_events(31);
  for (std::size_t i = 0; i + 1 < all.size(); ++i) p = wf.record_event(plan.id, all[i], "det");
  CHECK_FALSE(p.gates.at("issue-warrant").open);
  CHECK(p.gates.at("issue-warrant").missing.size() == 1);

  const auto before = *wf.plan(plan.id);
  const auto audit_before = wf.audit().last_seq();
  const auto dry = wf.dry_run_gate(plan.id, "issue-warrant", {all.back()});
  CHECK(dry.open);
  CHECK(*wf.plan(plan.id) == before);
  CHECK(wf.audit().last_seq() == audit_before);
  CHECK_FALSE(wf.evaluate_gate(plan.id, "issue-warrant").open);

  p = wf.record_event(plan.id, all.back(), "det");
  CHECK(p.gates.at("issue-warrant").open);
  CHECK(p.events.back().actor == "det");
}

TEST_CASE("workflow: event ordering and validation", "[workflow]") {
  HubStore store(bundled_ontology());
  Workflow wf(store, templates(), warrant_rules(), fixed_clock(Timestamp{kT0.seconds + 1000}));
  const auto plan = wf.create_plan("CASE-3", "det");
  wf.record_event(plan.id, ev("offence-described", Timestamp{kT0.seconds + 10}), "det");
  try {
    wf.record_event(plan.id, ev("premises-described", Timestamp{kT0.seconds + 10}), "det");
    FAIL("expected a conflict");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }
  CHECK_THROWS_AS(wf.record_event(plan.id, ev("premises-described", Timestamp{kT0.seconds + 5000}), "det"), Error);
  CHECK_THROWS_AS(wf.record_event(plan.id, ev("", Timestamp{kT0.seconds + 20}), "det"), Error);
  auto linked = ev("premises-described", Timestamp{kT0.seconds + 20});
  linked.linked_facts = {"fact:missing"};
  CHECK_THROWS_AS(wf.record_event(plan.id, linked, "det"), Error);
  CHECK_THROWS_AS(wf.dry_run_gate(plan.id, "issue-warrant", {ev("a", Timestamp{kT0.seconds})}), Error);
  CHECK(wf.dry_run_gate(plan.id, "issue-warrant", {ev("premises-described", Timestamp{kT0.seconds + 99999})}).open == false);
  CHECK(wf.plan(plan.id)->events.size() == 1);
  CHECK_THROWS_AS(wf.record_event("plan:none", ev("a", kT0), "det"), Error);
}

TEST_CASE("workflow: plans and audit survive a restart", "[workflow]") {
  TempDir dir;
  HubStore store(bundled_ontology());
  seed_subject(store);
  InvestigationPlan saved;
  {
    Workflow wf(store, templates(), warrant_rules(), stepping_clock(kT0), dir.path());
    const auto plan = wf.create_plan("CASE-4", "det");
    const AuthContext le("det", {"LE"});
    wf.instantiate_goal(plan.id, "search-warrant", {{"subject", "John Smith"}}, "det", {}, &le);
    wf.record_event(plan.id, ev("sworn-statement-recorded", Timestamp{kT0.seconds - 10}), "det");
    saved = *wf.plan(plan.id);
  }
  Workflow again(store, templates(), warrant_rules(), stepping_clock(kT0), dir.path());
  REQUIRE(again.plan_ids() == std::vector<std::string>{saved.id});
  CHECK(*again.plan(saved.id) == saved);
  CHECK(plan_from_json(nlohmann::json::parse(plan_to_json(saved).dump())) == saved);
  const auto v = verify_audit(dir / "audit.log");
  CHECK(v.ok);
  CHECK(v.records == again.audit().last_seq());
  CHECK(v.records >= 6);  // create, goal, three executions, event
}

TEST_CASE("workflow: corrupt plan log refuses to load", "[workflow]") {
  TempDir dir;
  HubStore store(bundled_ontology());
  { std::ofstream(dir / "plans.log") << "{\"id\":\"plan:x\"}\nnot json\n"; }
  try {
    Workflow wf(store, templates(), warrant_rules(), stepping_clock(kT0), dir.path());
    FAIL("expected corrupt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::corrupt);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("event json: payload types survive", "[workflow]") {
  const auto j = nlohmann::json::parse(
      R"({"kind":"k","occurred_at":"2025-01-01T00:00:00Z","payload":{"b":true,"n":3,"d":2.5,"s":"x"},"linked_facts":[]})");
  const auto e = event_from_json(j);
  CHECK(e.payload.at("b").kind == ValueKind::boolean);
  CHECK(e.payload.at("n").kind == ValueKind::integer);
  CHECK(e.payload.at("d").kind == ValueKind::decimal);
  CHECK(e.payload.at("s").kind == ValueKind::text);
  CHECK(event_from_json(nlohmann::json::parse(event_to_json(e).dump())) == e);
  CHECK_THROWS_AS(event_from_json(nlohmann::json::parse(R"({"kind":"k","occurred_at":"2025-01-01T00:00:00Z","payload":{"o":[1]}})")), Error);
}
