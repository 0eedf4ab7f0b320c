#pragma once

#include "fedhub/federation/federation.h"
#include "fedhub/hubstore/hubstore.h"
#include "fedhub/workflow/audit.h"
#include "fedhub/workflow/rules.h"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace fedhub::workflow {

// --- task templates ----------------------------------------------------------------

// A structured query whose predicate values may be `$slot` placeholders.
struct QueryTemplate {
  hubstore::StructuredQuery query;

  std::set<std::string> slots() const;
  // Throws Error(invalid) naming the first unbound slot.
  hubstore::StructuredQuery bind(const std::map<std::string, std::string>& params) const;
};

struct TaskTemplate {
  std::string id;
  std::string goal;
  std::vector<std::string> sub_goals;
  std::vector<QueryTemplate> requirements;
  std::optional<std::string> gate;
};

// Template file:
//   template <id> goal "<text>"
//   subgoal <template id>
//   require query concept=<C> [<attr>[<op>]<value|$slot> ...] [via=<relation>:<Concept>]
//   gate <name>
// Lines after a `template` line belong to it. Sub-goal references must resolve
// and the template graph must be acyclic.
class TemplateLibrary {
 public:
  static TemplateLibrary parse(std::string_view doc, const ontology::Ontology* onto = nullptr);
  static TemplateLibrary load_file(const std::string& path, const ontology::Ontology* onto = nullptr);

  const TaskTemplate* find(std::string_view id) const;
  std::vector<std::string> ids() const;
  // Slots needed by the template and everything beneath it.
  std::set<std::string> slots(std::string_view id) const;

 private:
  std::map<std::string, TaskTemplate, std::less<>> templates_;
};

// --- plans -----------------------------------------------------------------------------

enum class ElementKind { goal, info_requirement };
enum class ElementStatus { pending, running, satisfied, blocked };
const char* to_string(ElementKind k);
const char* to_string(ElementStatus s);

struct PlanElement {
  std::string id;
  ElementKind kind = ElementKind::goal;
  std::string template_id;
  std::string label;  // goal text or printed query
  std::string parent;  // empty for roots
  std::vector<std::string> children;
  ElementStatus status = ElementStatus::pending;
  std::optional<hubstore::StructuredQuery> query;  // info requirements
  std::optional<std::string> gate;                 // goals
  std::string activity;  // plan-step activity of the last execution
  std::map<std::string, std::string> params;

  friend bool operator==(const PlanElement&, const PlanElement&) = default;
};

struct InvestigationPlan {
  std::string id;
  std::string case_ref;
  std::string created_by;
  Timestamp created_at;
  std::vector<PlanElement> elements;  // depth-first order
  std::map<std::string, std::vector<std::string>> evidence;  // element id -> fact ids
  std::vector<WorkflowEvent> events;
  std::map<std::string, GateDecision> gates;  // latest automatic evaluation

  const PlanElement* element(std::string_view id) const;
  PlanElement* element(std::string_view id);
  std::set<std::string> declared_gates() const;

  friend bool operator==(const InvestigationPlan&, const InvestigationPlan&) = default;
};

nlohmann::ordered_json plan_to_json(const InvestigationPlan& p);
InvestigationPlan plan_from_json(const nlohmann::json& j);
nlohmann::ordered_json decision_to_json(const GateDecision& d);
nlohmann::ordered_json event_to_json(const WorkflowEvent& e);
// Payload JSON types map to boolean/integer/decimal/text values.
WorkflowEvent event_from_json(const nlohmann::json& j);

// --- engine ----------------------------------------------------------------------------

class Workflow {
 public:
  // With a non-empty `dir`, plans persist to dir/plans.log and the audit
  // chain to dir/audit.log.
  Workflow(hubstore::HubStore& store, TemplateLibrary templates, RuleSet rules, Clock clock,
           const std::filesystem::path& dir = {}, bool fsync = false);

  InvestigationPlan create_plan(const std::string& case_ref, const std::string& actor);

  // Expands the template depth-first under `parent` (or as a new root). When
  // `auth` is given, the bound info requirements are executed right away.
  InvestigationPlan instantiate_goal(const std::string& plan_id, const std::string& template_id,
                                     const std::map<std::string, std::string>& params,
                                     const std::string& actor, const std::string& parent = {},
                                     const security::AuthContext* auth = nullptr);

  // Runs the requirement's query on the hub and links every returned fact as
  // evidence through a plan-step activity. Returns the evidence fact ids.
  std::vector<std::string> execute_info_requirement(const std::string& plan_id,
                                                    const std::string& element_id,
                                                    const security::AuthContext& auth,
                                                    const std::string& actor);

  // Appends an event (strictly after the previous one, not in the future) and
  // re-evaluates gates whose rules mention its kind.
  InvestigationPlan record_event(const std::string& plan_id, WorkflowEvent event,
                                 const std::string& actor);

  GateDecision evaluate_gate(const std::string& plan_id, const std::string& gate) const;
  // Evaluates against the plan plus hypothetical events; changes nothing.
  GateDecision dry_run_gate(const std::string& plan_id, const std::string& gate,
                            std::vector<WorkflowEvent> hypothetical) const;

  std::optional<InvestigationPlan> plan(const std::string& id) const;
  std::vector<std::string> plan_ids() const;

  AuditLog& audit() { return *audit_; }
  const TemplateLibrary& templates() const { return templates_; }
  const RuleSet& rules() const { return rules_; }

 private:
  struct Slot {
    std::mutex mu;  // one mutator per plan
    InvestigationPlan plan;
  };
  Slot& slot(const std::string& id) const;
  void persist(const InvestigationPlan& p);
  void refresh_statuses(InvestigationPlan& p) const;
  std::vector<Fact> evidence_facts(const InvestigationPlan& p) const;
  void validate_event(const InvestigationPlan& p, const WorkflowEvent& e, Timestamp now) const;
  std::vector<std::string> run_requirement(InvestigationPlan& p, PlanElement& e,
                                           const security::AuthContext& auth,
                                           const std::string& actor);

  hubstore::HubStore& store_;
  TemplateLibrary templates_;
  RuleSet rules_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Slot>> plans_;
  std::unique_ptr<AuditLog> audit_;
  AppendLog plan_log_;
};

}  // namespace fedhub::workflow
