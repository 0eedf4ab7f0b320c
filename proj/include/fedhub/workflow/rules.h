#pragma once

#include "fedhub/hubstore/hubstore.h"
#include "fedhub/model/fact.h"
#include "fedhub/ontology/ontology.h"

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fedhub::workflow {

// Payload values keep their JSON type: boolean, integer, decimal or text.
using Payload = std::map<std::string, Value>;

struct WorkflowEvent {
  std::string id;
  std::string kind;
  Timestamp occurred_at;
  std::string actor;
  Payload payload;
  std::vector<std::string> linked_facts;

  friend bool operator==(const WorkflowEvent&, const WorkflowEvent&) = default;
};

// Requirement predicates:
//   all(p, ...) | any(p, ...) | not(p)
//   event(<kind>)
//   payload(<kind>.<field>) <op> <literal>     op: = != < <= > >=
//   within_hours(<kind>, <kind>[.<field>], <hours>)
//   fact(<Concept>, <predicate>)
struct Predicate {
  enum class Kind { all, any, negate, event, payload, within_hours, fact };

  Kind kind = Kind::event;
  std::vector<Predicate> children;
  std::string event_kind;   // event, payload, within_hours (first kind)
  std::string field;        // payload; within_hours (second kind's field, may be empty)
  std::string other_kind;   // within_hours second kind
  hubstore::CompareOp op = hubstore::CompareOp::eq;
  Value literal;            // payload comparison operand
  double hours = 0.0;
  std::string concept_name;  // fact
  std::string predicate;     // fact

  std::string print() const;
  void collect_kinds(std::set<std::string>& out) const;

  friend bool operator==(const Predicate&, const Predicate&) = default;
};

Predicate parse_predicate(std::string_view text);

struct ComplianceRule {
  std::string id;
  std::string citation;
  std::string gate;
  Predicate requirement;
};

struct GateDecision {
  std::string gate;
  bool open = false;
  std::vector<std::pair<std::string, std::string>> missing;  // (rule id, "citation: requirement")
  Timestamp evaluated_at;

  friend bool operator==(const GateDecision&, const GateDecision&) = default;
};

// State a requirement is evaluated against. Events are in occurrence order;
// `evidence` holds the facts linked to the plan.
struct PlanState {
  const std::vector<WorkflowEvent>* events = nullptr;
  const std::vector<Fact>* evidence = nullptr;
  const ontology::Ontology* onto = nullptr;
};

bool evaluate(const Predicate& p, const PlanState& state);

// Rule-pack file:
//   kinds <kind> [<kind> ...]
//   gate <name>
//   rule <id> cite "<citation>" require <predicate>
// Rules belong to the most recent `gate` line. Every event kind a predicate
// names must be declared by a `kinds` line.
class RuleSet {
 public:
  static RuleSet parse(std::string_view doc, const ontology::Ontology* onto = nullptr);
  static RuleSet load_file(const std::string& path, const ontology::Ontology* onto = nullptr);

  // Merges another pack; duplicate rule ids are a conflict.
  void merge(const RuleSet& other);

  bool has_gate(std::string_view gate) const;
  std::vector<std::string> gates() const;
  std::vector<const ComplianceRule*> rules_for(std::string_view gate) const;
  const std::vector<ComplianceRule>& rules() const { return rules_; }
  const std::set<std::string>& kinds() const { return kinds_; }
  // Gates with at least one rule that mentions `kind`.
  std::set<std::string> gates_referencing(std::string_view kind) const;

  // Throws Error(not_found) for an undeclared gate. Pure.
  GateDecision evaluate_gate(std::string_view gate, const PlanState& state, Timestamp now) const;

 private:
  std::set<std::string> gate_names_;
  std::set<std::string> kinds_;
  std::vector<ComplianceRule> rules_;
};

}  // namespace fedhub::workflow
