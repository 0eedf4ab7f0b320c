#include "criteria.h"
#include "support.h"

#include "fedhub/workflow/workflow.h"

#include <sstream>

namespace fedhub::acceptance {

using namespace fedhub::workflow;

namespace {

constexpr std::int64_t kHour = 3600;
const Timestamp kBase{1750000000};

struct Case {
  std::vector<WorkflowEvent> events;
};

WorkflowEvent event(const std::string& kind, Timestamp at, Payload payload = {}) {
  WorkflowEvent e;
  e.kind = kind;
  e.occurred_at = at;
  e.payload = std::move(payload);
  return e;
}

Value boolean(bool b) { return *make_value(ValueKind::boolean, b ? "true" : "false"); }
Value instant(Timestamp t) { return *make_value(ValueKind::timestamp, format_rfc3339(t)); }

// How the grounds condition is (or is not) met.
enum class Grounds { present_now, expected_within, expected_at_boundary, absent, not_present, expected_late, expected_before };

Case build(unsigned mask, Grounds grounds, std::mt19937_64& rng) {
  Case c;
  Timestamp t = kBase;
  auto next = [&] { return t = t.plus_seconds(std::uniform_int_distribution<int>(1, 600)(rng)); };
  std::optional<Timestamp> sworn;
  if (mask & 1u) {
    c.events.push_back(event("sworn-statement-recorded", next()));
    sworn = t;
  }
  const Timestamp anchor = sworn.value_or(kBase);
  switch (grounds) {
    case Grounds::present_now:
      c.events.push_back(event("grounds-asserted", next(), {{"present_now", boolean(true)}}));
      break;
    case Grounds::expected_within:
      c.events.push_back(event("grounds-asserted", next(),
                               {{"present_now", boolean(false)},
                                {"expected_at", instant(anchor.plus_seconds(std::uniform_int_distribution<std::int64_t>(0, 72 * kHour)(rng)))}}));
      break;
    case Grounds::expected_at_boundary:
      c.events.push_back(event("grounds-asserted", next(), {{"expected_at", instant(anchor.plus_seconds(72 * kHour))}}));
      break;
    case Grounds::absent:
      break;
    case Grounds::not_present:
      c.events.push_back(event("grounds-asserted", next(), {{"present_now", boolean(false)}}));
      break;
    case Grounds::expected_late:
      c.events.push_back(event("grounds-asserted", next(), {{"expected_at", instant(anchor.plus_seconds(72 * kHour + 1))}}));
      break;
    case Grounds::expected_before:
      c.events.push_back(event("grounds-asserted", next(), {{"expected_at", instant(anchor.plus_seconds(-1))}}));
      break;
  }
  if (mask & 4u) c.events.push_back(event("offence-described", next()));
  if (mask & 8u) c.events.push_back(event("premises-described", next()));
  if (mask & 16u) c.events.push_back(event("material-kinds-listed", next()));
  return c;
}

const WorkflowEvent* latest(const std::vector<WorkflowEvent>& events, const std::string& kind) {
  const WorkflowEvent* out = nullptr;
  for (const auto& e : events) {
    if (e.kind == kind && (!out || out->occurred_at <= e.occurred_at)) out = &e;
  }
  return out;
}

// The five issue conditions read straight off the event history: sworn
// information; grounds that the material is at the premises now or will be
// within the next 72 hours of the sworn information; and descriptions of the
// offence, the premises and the kinds of material.
std::vector<std::string> oracle_missing(const std::vector<WorkflowEvent>& events) {
  const auto* sworn = latest(events, "sworn-statement-recorded");
  const auto* grounds = latest(events, "grounds-asserted");
  bool r2 = false;
  if (grounds) {
    const auto now = grounds->payload.find("present_now");
    if (now != grounds->payload.end() && now->second.kind == ValueKind::boolean && now->second.lexical == "true") r2 = true;
    const auto when = grounds->payload.find("expected_at");
    if (sworn && when != grounds->payload.end()) {
      const auto t = parse_rfc3339(when->second.lexical);
      if (t) {
        const auto delta = t->seconds - sworn->occurred_at.seconds;
        r2 = r2 || (delta >= 0 && delta <= 72 * kHour);
      }
    }
  }
  std::vector<std::string> missing;
  if (!sworn) missing.push_back("r1");
  if (!r2) missing.push_back("r2");
  if (!latest(events, "offence-described")) missing.push_back("r3");
  if (!latest(events, "premises-described")) missing.push_back("r4");
  if (!latest(events, "material-kinds-listed")) missing.push_back("r5");
  return missing;
}

}  // namespace

Outcome check_warrant_gate() {
  const auto& onto = testing::bundled_ontology();
  hubstore::HubStore store(onto);
  Workflow wf(store, TemplateLibrary::load_file((data_dir() / "workflow/investigation.tpl").string(), &onto),
              RuleSet::load_file((data_dir() / "rules/search_warrant_s3e.rules").string(), &onto),
              testing::fixed_clock(kBase.plus_seconds(30 * 24 * kHour)));
  std::mt19937_64 rng(0x5eed0007);

  std::size_t cases = 0, disagreements = 0, dry_run_diff = 0, table_rows_ok = 0;
  auto run_case = [&](const Case& c) {
    ++cases;
    const auto plan = wf.create_plan("CASE-" + std::to_string(cases), "det");
    wf.instantiate_goal(plan.id, "search-warrant", {{"subject", "John Smith"}}, "det");
    const auto dry = wf.dry_run_gate(plan.id, "issue-warrant", c.events);
    for (const auto& e : c.events) wf.record_event(plan.id, e, "det");
    const auto decision = wf.evaluate_gate(plan.id, "issue-warrant");
    std::vector<std::string> got;
    for (const auto& [rule, why] : decision.missing) got.push_back(rule);
    const auto want = oracle_missing(c.events);
    if (got != want || decision.open != want.empty()) ++disagreements;
    if (dry.open != decision.open || dry.missing != decision.missing) ++dry_run_diff;
    return want;
  };

  const std::vector<Grounds> variants{Grounds::present_now,  Grounds::expected_within, Grounds::expected_at_boundary,
                                      Grounds::absent,       Grounds::not_present,     Grounds::expected_late,
                                      Grounds::expected_before};
  for (unsigned mask = 0; mask < 32; ++mask) {
    for (const auto g : variants) {
      // The grounds bit of the mask selects satisfying or failing variants.
      const bool satisfying = g == Grounds::present_now || g == Grounds::expected_within || g == Grounds::expected_at_boundary;
      if (satisfying != bool(mask & 2u)) continue;
      const auto want = run_case(build(mask, g, rng));
      if (g == Grounds::present_now || g == Grounds::absent) {
        // Independent grounds: the oracle's table row is exactly the mask.
        std::vector<std::string> from_mask;
        for (unsigned i = 0; i < 5; ++i) {
          if (!(mask & (1u << i))) from_mask.push_back("r" + std::to_string(i + 1));
        }
        table_rows_ok += want == from_mask;
      }
    }
  }

  // The 72-hour boundary on its own: inclusive at 72 h, exclusive one second later.
  const bool at_72 = run_case(build(31u, Grounds::expected_at_boundary, rng)).empty();
  const bool past_72 = run_case(build(31u, Grounds::expected_late, rng)) == std::vector<std::string>{"r2"};
  const auto boundary_plan_ok = [&](std::int64_t offset) {
    const auto plan = wf.create_plan("BOUNDARY", "det");
    auto c = build(31u, Grounds::expected_at_boundary, rng);
    c.events[1].payload["expected_at"] = instant(c.events[0].occurred_at.plus_seconds(offset));
    for (const auto& e : c.events) wf.record_event(plan.id, e, "det");
    return wf.evaluate_gate(plan.id, "issue-warrant").open;
  };
  const bool lib_72 = boundary_plan_ok(72 * kHour);
  const bool lib_72_1 = boundary_plan_ok(72 * kHour + 1);

  std::ostringstream d;
  d << cases << " gate evaluations over all 32 rule states, " << disagreements << " disagree with the oracle, "
    << dry_run_diff << " dry runs differ, " << table_rows_ok << "/32 independent rows match their mask; 72 h "
    << (lib_72 ? "open" : "closed") << ", 72 h + 1 s " << (lib_72_1 ? "open" : "closed");
  return {disagreements == 0 && dry_run_diff == 0 && table_rows_ok == 32 && at_72 && past_72 && lib_72 && !lib_72_1,
          d.str()};
}

}  // namespace fedhub::acceptance
