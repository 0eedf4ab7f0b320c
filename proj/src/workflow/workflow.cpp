#include "fedhub/workflow/workflow.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/model/codec.h"

#include <algorithm>
#include <functional>
#include <limits>
#include <random>
#include <set>

namespace fedhub::workflow {

using hubstore::AttributePredicate;
using hubstore::CompareOp;
using hubstore::StructuredQuery;
using nlohmann::ordered_json;
using security::AuthContext;

// --- query templates ---------------------------------------------------------------

std::set<std::string> QueryTemplate::slots() const {
  std::set<std::string> out;
  auto scan = [&](const std::vector<AttributePredicate>& ps) {
    for (const auto& p : ps) {
      if (text::starts_with(p.value, "$")) out.insert(p.value.substr(1));
    }
  };
  scan(query.predicates);
  if (query.traversal) scan(query.traversal->predicates);
  return out;
}

StructuredQuery QueryTemplate::bind(const std::map<std::string, std::string>& params) const {
  StructuredQuery q = query;
  auto fill = [&](std::vector<AttributePredicate>& ps) {
    for (auto& p : ps) {
      if (!text::starts_with(p.value, "$")) continue;
      const auto it = params.find(p.value.substr(1));
      if (it == params.end()) throw Error(ErrorCode::invalid, "unbound slot '" + p.value + "'");
      p.value = it->second;
    }
  };
  fill(q.predicates);
  if (q.traversal) fill(q.traversal->predicates);
  return q;
}

namespace {

std::string print_query(const StructuredQuery& q) {
  std::string out = "concept=" + q.concept_name;
  for (const auto& p : q.predicates) out += " " + p.attribute + hubstore::to_string(p.op) + p.value;
  if (q.traversal) {
    out += " via=" + q.traversal->relation + ":" + q.traversal->target_concept;
    for (const auto& p : q.traversal->predicates) {
      out += " via." + p.attribute + hubstore::to_string(p.op) + p.value;
    }
  }
  return out;
}

}  // namespace

TemplateLibrary TemplateLibrary::parse(std::string_view doc, const ontology::Ontology* onto) {
  TemplateLibrary lib;
  TaskTemplate* cur = nullptr;
  std::map<std::string, std::size_t> defined_at;
  std::vector<std::tuple<std::string, std::string, std::size_t>> refs;  // template, sub, line
  std::size_t line_no = 0;
  for (const auto& line : text::split(doc, '\n')) {
    ++line_no;
    const auto toks = text::tokenize_line(line, line_no);
    if (toks.empty()) continue;
    const auto& head = toks[0].value;
    if (head == "template") {
      if (toks.size() != 4 || toks[2].value != "goal" || !toks[3].quoted) {
        throw ParseError("expected: template <id> goal \"<text>\"", line_no, toks[0].column);
      }
      const auto& id = toks[1].value;
      if (lib.templates_.count(id)) throw ParseError("duplicate template '" + id + "'", line_no, toks[1].column);
      TaskTemplate t;
      t.id = id;
      t.goal = toks[3].value;
      cur = &lib.templates_.emplace(id, std::move(t)).first->second;
      defined_at[id] = line_no;
      continue;
    }
    if (!cur) throw ParseError("'" + head + "' outside a template", line_no, toks[0].column);
    if (head == "subgoal") {
      if (toks.size() != 2) throw ParseError("expected: subgoal <template id>", line_no, toks[0].column);
      cur->sub_goals.push_back(toks[1].value);
      refs.emplace_back(cur->id, toks[1].value, line_no);
    } else if (head == "gate") {
      if (toks.size() != 2) throw ParseError("expected: gate <name>", line_no, toks[0].column);
      cur->gate = toks[1].value;
    } else if (head == "require") {
      if (toks.size() < 3 || toks[1].value != "query") {
        throw ParseError("expected: require query concept=<C> ...", line_no, toks[0].column);
      }
      QueryTemplate qt;
      for (std::size_t i = 2; i < toks.size(); ++i) {
        const auto& v = toks[i].value;
        try {
          if (text::starts_with(v, "concept=")) {
            qt.query.concept_name = v.substr(8);
          } else if (text::starts_with(v, "via=")) {
            const auto colon = v.find(':', 4);
            if (colon == std::string::npos) throw Error(ErrorCode::invalid, "expected via=<relation>:<Concept>");
            hubstore::Traversal t;
            t.relation = v.substr(4, colon - 4);
            t.target_concept = v.substr(colon + 1);
            if (qt.query.traversal) t.predicates = qt.query.traversal->predicates;
            qt.query.traversal = std::move(t);
          } else if (text::starts_with(v, "via.")) {
            if (!qt.query.traversal) throw Error(ErrorCode::invalid, "via.<attr> before via=");
            qt.query.traversal->predicates.push_back(hubstore::parse_attribute_predicate(v.substr(4)));
          } else {
            qt.query.predicates.push_back(hubstore::parse_attribute_predicate(v));
          }
        } catch (const ParseError&) {
          throw;
        } catch (const Error& e) {
          throw ParseError(e.what(), line_no, toks[i].column);
        }
      }
      if (qt.query.concept_name.empty()) throw ParseError("require query needs concept=", line_no, toks[0].column);
      if (onto) {
        hubstore::HubStore probe(*onto);
        try {
          probe.check_query(qt.query);
        } catch (const Error& e) {
          throw Error(e.code(), std::string(e.what()) + " at line " + std::to_string(line_no));
        }
      }
      cur->requirements.push_back(std::move(qt));
    } else {
      throw ParseError("unknown directive '" + head + "'", line_no, toks[0].column);
    }
  }
  for (const auto& [from, to, line] : refs) {
    if (!lib.templates_.count(to)) {
      throw Error(ErrorCode::invalid, "template '" + from + "' names unknown sub-goal '" + to +
                                          "' at line " + std::to_string(line));
    }
  }
  // Cycle check by depth-first search with colours.
  std::map<std::string, int> colour;
  std::vector<std::string> path;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    colour[id] = 1;
    path.push_back(id);
    for (const auto& s : lib.templates_.at(id).sub_goals) {
      if (colour[s] == 1) {
        std::string cycle;
        auto it = std::find(path.begin(), path.end(), s);
        for (; it != path.end(); ++it) cycle += *it + " -> ";
        throw Error(ErrorCode::invalid, "template cycle: " + cycle + s);
      }
      if (colour[s] == 0) visit(s);
    }
    path.pop_back();
    colour[id] = 2;
  };
  for (const auto& [id, t] : lib.templates_) {
    if (colour[id] == 0) visit(id);
  }
  return lib;
}

TemplateLibrary TemplateLibrary::load_file(const std::string& path, const ontology::Ontology* onto) {
  return parse(text::read_file(path), onto);
}

const TaskTemplate* TemplateLibrary::find(std::string_view id) const {
  const auto it = templates_.find(id);
  return it == templates_.end() ? nullptr : &it->second;
}

std::vector<std::string> TemplateLibrary::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, t] : templates_) out.push_back(id);
  return out;
}

std::set<std::string> TemplateLibrary::slots(std::string_view id) const {
  std::set<std::string> out;
  const auto* t = find(id);
  if (!t) return out;
  for (const auto& r : t->requirements) {
    const auto s = r.slots();
    out.insert(s.begin(), s.end());
  }
  for (const auto& sub : t->sub_goals) {
    const auto s = slots(sub);
    out.insert(s.begin(), s.end());
  }
  return out;
}

// --- plan model ------------------------------------------------------------------------

const char* to_string(ElementKind k) {
  return k == ElementKind::goal ? "goal" : "info-requirement";
}

const char* to_string(ElementStatus s) {
  switch (s) {
    case ElementStatus::pending: return "pending";
    case ElementStatus::running: return "running";
    case ElementStatus::satisfied: return "satisfied";
    case ElementStatus::blocked: return "blocked";
  }
  return "pending";
}

namespace {

ElementStatus status_from_string(const std::string& s) {
  if (s == "pending") return ElementStatus::pending;
  if (s == "running") return ElementStatus::running;
  if (s == "satisfied") return ElementStatus::satisfied;
  if (s == "blocked") return ElementStatus::blocked;
  throw Error(ErrorCode::corrupt, "unknown element status '" + s + "'");
}

ordered_json predicates_json(const std::vector<AttributePredicate>& ps) {
  auto arr = ordered_json::array();
  for (const auto& p : ps) {
    arr.push_back({{"attribute", p.attribute}, {"op", hubstore::to_string(p.op)}, {"value", p.value}});
  }
  return arr;
}

std::vector<AttributePredicate> predicates_from(const nlohmann::json& j) {
  std::vector<AttributePredicate> out;
  for (const auto& p : j) {
    AttributePredicate ap;
    ap.attribute = p.at("attribute").get<std::string>();
    const auto op = hubstore::compare_op_from_string(p.at("op").get<std::string>());
    if (!op) throw Error(ErrorCode::corrupt, "unknown operator");
    ap.op = *op;
    ap.value = p.at("value").get<std::string>();
    out.push_back(std::move(ap));
  }
  return out;
}

ordered_json value_json(const Value& v) {
  switch (v.kind) {
    case ValueKind::boolean: return v.lexical == "true";
    case ValueKind::integer: return std::stoll(v.lexical);
    case ValueKind::decimal: return *text::parse_decimal(v.lexical);
    default: return v.lexical;
  }
}

Value value_from(const nlohmann::json& j) {
  if (j.is_boolean()) return *make_value(ValueKind::boolean, j.get<bool>() ? "true" : "false");
  if (j.is_number_integer()) return *make_value(ValueKind::integer, std::to_string(j.get<long long>()));
  if (j.is_number_float()) return *make_value(ValueKind::decimal, text::format_decimal(j.get<double>()));
  if (j.is_string()) return text_value(j.get<std::string>());
  throw Error(ErrorCode::parse, "payload values must be booleans, numbers or strings");
}

std::string nonce() {
  static std::mt19937_64 rng{std::random_device{}()};
  static std::mutex mu;
  std::lock_guard lock(mu);
  return std::to_string(rng());
}

}  // namespace

const PlanElement* InvestigationPlan::element(std::string_view id) const {
  for (const auto& e : elements) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

PlanElement* InvestigationPlan::element(std::string_view id) {
  for (auto& e : elements) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

std::set<std::string> InvestigationPlan::declared_gates() const {
  std::set<std::string> out;
  for (const auto& e : elements) {
    if (e.gate) out.insert(*e.gate);
  }
  return out;
}

ordered_json decision_to_json(const GateDecision& d) {
  ordered_json j;
  j["gate"] = d.gate;
  j["open"] = d.open;
  auto missing = ordered_json::array();
  for (const auto& [id, text] : d.missing) missing.push_back({{"rule", id}, {"requirement", text}});
  j["missing"] = missing;
  j["evaluated_at"] = format_rfc3339(d.evaluated_at);
  return j;
}

namespace {

GateDecision decision_from(const nlohmann::json& j) {
  GateDecision d;
  d.gate = j.at("gate").get<std::string>();
  d.open = j.at("open").get<bool>();
  for (const auto& m : j.at("missing")) {
    d.missing.emplace_back(m.at("rule").get<std::string>(), m.at("requirement").get<std::string>());
  }
  d.evaluated_at = parse_rfc3339_or_throw(j.at("evaluated_at").get<std::string>());
  return d;
}

}  // namespace

ordered_json event_to_json(const WorkflowEvent& e) {
  ordered_json j;
  j["id"] = e.id;
  j["kind"] = e.kind;
  j["occurred_at"] = format_rfc3339(e.occurred_at);
  j["actor"] = e.actor;
  ordered_json payload = ordered_json::object();
  for (const auto& [k, v] : e.payload) payload[k] = value_json(v);
  j["payload"] = payload;
  j["linked_facts"] = e.linked_facts;
  return j;
}

WorkflowEvent event_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::parse, "event must be a JSON object");
  try {
    WorkflowEvent e;
    e.id = j.value("id", "");
    e.kind = j.at("kind").get<std::string>();
    e.occurred_at = parse_rfc3339_or_throw(j.at("occurred_at").get<std::string>());
    e.actor = j.value("actor", "");
    if (j.contains("payload") && !j["payload"].is_null()) {
      if (!j["payload"].is_object()) throw Error(ErrorCode::parse, "payload must be an object");
      for (const auto& [k, v] : j["payload"].items()) e.payload[k] = value_from(v);
    }
    if (j.contains("linked_facts") && !j["linked_facts"].is_null()) {
      e.linked_facts = j["linked_facts"].get<std::vector<std::string>>();
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::parse, std::string("malformed event: ") + ex.what());
  }
}

ordered_json plan_to_json(const InvestigationPlan& p) {
  ordered_json j;
  j["id"] = p.id;
  j["case_ref"] = p.case_ref;
  j["created_by"] = p.created_by;
  j["created_at"] = format_rfc3339(p.created_at);
  auto elements = ordered_json::array();
  for (const auto& e : p.elements) {
    ordered_json je;
    je["id"] = e.id;
    je["kind"] = to_string(e.kind);
    je["template"] = e.template_id;
    je["label"] = e.label;
    je["parent"] = e.parent;
    je["children"] = e.children;
    je["status"] = to_string(e.status);
    if (e.query) {
      ordered_json q;
      q["concept"] = e.query->concept_name;
      q["where"] = predicates_json(e.query->predicates);
      if (e.query->traversal) {
        q["via"] = {{"relation", e.query->traversal->relation},
                    {"concept", e.query->traversal->target_concept},
                    {"where", predicates_json(e.query->traversal->predicates)}};
      }
      je["query"] = q;
    }
    if (e.gate) je["gate"] = *e.gate;
    if (!e.activity.empty()) je["activity"] = e.activity;
    je["params"] = e.params;
    elements.push_back(std::move(je));
  }
  j["elements"] = elements;
  ordered_json evidence = ordered_json::object();
  for (const auto& [id, facts] : p.evidence) evidence[id] = facts;
  j["evidence"] = evidence;
  auto events = ordered_json::array();
  for (const auto& e : p.events) events.push_back(event_to_json(e));
  j["events"] = events;
  auto gates = ordered_json::object();
  for (const auto& [name, d] : p.gates) gates[name] = decision_to_json(d);
  j["gates"] = gates;
  return j;
}

InvestigationPlan plan_from_json(const nlohmann::json& j) {
  try {
    InvestigationPlan p;
    p.id = j.at("id").get<std::string>();
    p.case_ref = j.at("case_ref").get<std::string>();
    p.created_by = j.at("created_by").get<std::string>();
    p.created_at = parse_rfc3339_or_throw(j.at("created_at").get<std::string>());
    for (const auto& je : j.at("elements")) {
      PlanElement e;
      e.id = je.at("id").get<std::string>();
      e.kind = je.at("kind").get<std::string>() == "goal" ? ElementKind::goal : ElementKind::info_requirement;
      e.template_id = je.at("template").get<std::string>();
      e.label = je.at("label").get<std::string>();
      e.parent = je.at("parent").get<std::string>();
      e.children = je.at("children").get<std::vector<std::string>>();
      e.status = status_from_string(je.at("status").get<std::string>());
      if (je.contains("query")) {
        const auto& q = je["query"];
        StructuredQuery sq;
        sq.concept_name = q.at("concept").get<std::string>();
        sq.predicates = predicates_from(q.at("where"));
        if (q.contains("via")) {
          hubstore::Traversal t;
          t.relation = q["via"].at("relation").get<std::string>();
          t.target_concept = q["via"].at("concept").get<std::string>();
          t.predicates = predicates_from(q["via"].at("where"));
          sq.traversal = std::move(t);
        }
        e.query = std::move(sq);
      }
      if (je.contains("gate")) e.gate = je["gate"].get<std::string>();
      e.activity = je.value("activity", "");
      e.params = je.at("params").get<std::map<std::string, std::string>>();
      p.elements.push_back(std::move(e));
    }
    for (const auto& [id, facts] : j.at("evidence").items()) {
      p.evidence[id] = facts.get<std::vector<std::string>>();
    }
    for (const auto& e : j.at("events")) p.events.push_back(event_from_json(e));
    for (const auto& [name, d] : j.at("gates").items()) p.gates[name] = decision_from(d);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::corrupt, std::string("malformed plan record: ") + e.what());
  }
}

// --- engine ----------------------------------------------------------------------------

Workflow::Workflow(hubstore::HubStore& store, TemplateLibrary templates, RuleSet rules, Clock clock,
                   const std::filesystem::path& dir, bool fsync)
    : store_(store), templates_(std::move(templates)), rules_(std::move(rules)), clock_(std::move(clock)) {
  for (const auto& id : templates_.ids()) {
    const auto* t = templates_.find(id);
    if (t->gate && !rules_.has_gate(*t->gate)) {
      throw Error(ErrorCode::invalid, "template '" + id + "' names gate '" + *t->gate +
                                          "' that no rule pack declares");
    }
  }
  if (dir.empty()) {
    audit_ = std::make_unique<AuditLog>();
    return;
  }
  std::filesystem::create_directories(dir);
  audit_ = AuditLog::open(dir / "audit.log", fsync);
  std::vector<std::string> lines;
  plan_log_ = AppendLog::open(dir / "plans.log", lines, fsync);
  std::size_t n = 0;
  for (const auto& line : lines) {
    ++n;
    InvestigationPlan p;
    try {
      p = plan_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::corrupt, (dir / "plans.log").string() + " line " + std::to_string(n) +
                                          ": " + e.what());
    }
    auto& s = plans_[p.id];
    if (!s) s = std::make_unique<Slot>();
    s->plan = std::move(p);
  }
}

Workflow::Slot& Workflow::slot(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = plans_.find(id);
  if (it == plans_.end()) throw Error(ErrorCode::not_found, "unknown plan '" + id + "'");
  return *it->second;
}

void Workflow::persist(const InvestigationPlan& p) { plan_log_.append(plan_to_json(p).dump()); }

std::vector<Fact> Workflow::evidence_facts(const InvestigationPlan& p) const {
  std::vector<Fact> out;
  std::set<std::string> seen;
  for (const auto& [el, ids] : p.evidence) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second) continue;
      if (auto f = store_.fact(id)) out.push_back(std::move(*f));
    }
  }
  for (const auto& e : p.events) {
    for (const auto& id : e.linked_facts) {
      if (!seen.insert(id).second) continue;
      if (auto f = store_.fact(id)) out.push_back(std::move(*f));
    }
  }
  return out;
}

void Workflow::refresh_statuses(InvestigationPlan& p) const {
  const auto evidence = evidence_facts(p);
  const PlanState state{&p.events, &evidence, &store_.ontology()};
  // Children follow their parent in depth-first order, so a reverse sweep sees
  // every child before its goal.
  for (auto it = p.elements.rbegin(); it != p.elements.rend(); ++it) {
    auto& e = *it;
    if (e.kind == ElementKind::info_requirement) continue;
    bool done = true;
    for (const auto& c : e.children) {
      const auto* child = p.element(c);
      if (!child || child->status != ElementStatus::satisfied) done = false;
    }
    bool gate_open = true;
    if (e.gate) {
      const auto d = rules_.evaluate_gate(*e.gate, state, clock_());
      gate_open = d.open;
      p.gates[*e.gate] = d;
    }
    e.status = !gate_open ? ElementStatus::blocked
               : done     ? ElementStatus::satisfied
                          : ElementStatus::pending;
  }
}

InvestigationPlan Workflow::create_plan(const std::string& case_ref, const std::string& actor) {
  if (actor.empty()) throw Error(ErrorCode::invalid, "plan creation requires an actor");
  InvestigationPlan p;
  p.case_ref = case_ref;
  p.created_by = actor;
  p.created_at = clock_();
  p.id = "plan:" + make_activity_id(ActivityKind::plan_step, case_ref + "|" + actor + "|" +
                                                                 format_rfc3339(p.created_at) + "|" + nonce())
                       .substr(std::string("plan-step:").size());
  {
    std::lock_guard lock(mu_);
    auto s = std::make_unique<Slot>();
    s->plan = p;
    plans_.emplace(p.id, std::move(s));
  }
  persist(p);
  audit_->append(actor, "plan.create", ordered_json{{"case_ref", case_ref}}.dump(),
                 plan_to_json(p).dump(), p.created_at);
  return p;
}

InvestigationPlan Workflow::instantiate_goal(const std::string& plan_id, const std::string& template_id,
                                             const std::map<std::string, std::string>& params,
                                             const std::string& actor, const std::string& parent,
                                             const AuthContext* auth) {
  auto& s = slot(plan_id);
  std::lock_guard lock(s.mu);
  InvestigationPlan p = s.plan;
  if (!templates_.find(template_id)) {
    throw Error(ErrorCode::not_found, "unknown template '" + template_id + "'");
  }
  for (const auto& slot_name : templates_.slots(template_id)) {
    if (!params.count(slot_name)) throw Error(ErrorCode::invalid, "unbound slot '$" + slot_name + "'");
  }
  if (!parent.empty()) {
    const auto* par = p.element(parent);
    if (!par) throw Error(ErrorCode::not_found, "unknown element '" + parent + "'");
    if (par->kind != ElementKind::goal) throw Error(ErrorCode::invalid, "parent must be a goal");
  }

  std::vector<std::string> queued;
  std::function<std::string(const std::string&, const std::string&)> expand =
      [&](const std::string& tid, const std::string& under) {
        const auto* t = templates_.find(tid);
        PlanElement g;
        g.id = "e" + std::to_string(p.elements.size() + 1);
        g.kind = ElementKind::goal;
        g.template_id = tid;
        g.label = t->goal;
        g.parent = under;
        g.gate = t->gate;
        g.params = params;
        const auto gid = g.id;
        p.elements.push_back(std::move(g));
        if (!under.empty()) p.element(under)->children.push_back(gid);
        for (const auto& r : t->requirements) {
          PlanElement e;
          e.id = "e" + std::to_string(p.elements.size() + 1);
          e.kind = ElementKind::info_requirement;
          e.template_id = tid;
          e.query = r.bind(params);
          e.label = print_query(*e.query);
          e.parent = gid;
          e.params = params;
          queued.push_back(e.id);
          p.element(gid)->children.push_back(e.id);
          p.elements.push_back(std::move(e));
        }
        for (const auto& sub : t->sub_goals) expand(sub, gid);
        return gid;
      };
  // A new subtree under an existing goal is inserted after that goal's
  // descendants so the element list stays in depth-first order.
  const auto before = p.elements.size();
  const auto root = expand(template_id, parent);
  if (!parent.empty()) {
    std::vector<PlanElement> added(p.elements.begin() + static_cast<std::ptrdiff_t>(before), p.elements.end());
    p.elements.resize(before);
    std::set<std::string> subtree{parent};
    std::size_t insert_at = 0;
    for (std::size_t i = 0; i < p.elements.size(); ++i) {
      if (subtree.count(p.elements[i].id) || subtree.count(p.elements[i].parent)) {
        subtree.insert(p.elements[i].id);
        insert_at = i + 1;
      }
    }
    p.elements.insert(p.elements.begin() + static_cast<std::ptrdiff_t>(insert_at), added.begin(), added.end());
  }

  refresh_statuses(p);
  s.plan = p;
  persist(p);
  ordered_json args{{"plan", plan_id}, {"template", template_id}, {"params", params}, {"parent", parent}};
  audit_->append(actor, "plan.goal", args.dump(), plan_to_json(p).dump(), clock_());

  if (auth) {
    for (const auto& id : queued) {
      auto& el = *s.plan.element(id);
      run_requirement(s.plan, el, *auth, actor);
    }
    refresh_statuses(s.plan);
    persist(s.plan);
  }
  (void)root;
  return s.plan;
}

std::vector<std::string> Workflow::run_requirement(InvestigationPlan& p, PlanElement& e,
                                                   const AuthContext& auth, const std::string& actor) {
  e.status = ElementStatus::running;
  const auto started = clock_();
  std::set<std::string> ids;
  try {
    for (const auto& entity : store_.structured_query(*e.query, auth)) {
      for (const auto& f : store_.get_entity(entity, auth).facts) {
        ids.insert(f.id);
        // The related entities reached through the traversal are evidence too.
        if (e.query->traversal && f.predicate == e.query->traversal->relation &&
            f.object.kind == ValueKind::entity) {
          for (const auto& tf : store_.get_entity(f.object.lexical, auth).facts) ids.insert(tf.id);
        }
      }
    }
  } catch (...) {
    e.status = ElementStatus::pending;
    throw;
  }
  std::vector<std::string> evidence(ids.begin(), ids.end());

  Activity act;
  act.kind = ActivityKind::plan_step;
  act.id = make_activity_id(act.kind, p.id + "|" + e.id + "|" + format_rfc3339(started) + "|" + nonce());
  act.started_at = started;
  act.ended_at = std::max(started, clock_());
  act.agent = actor;
  act.inputs = evidence;
  store_.record_activity(act);

  e.activity = act.id;
  e.status = ElementStatus::satisfied;  // an empty answer is still an answer
  p.evidence[e.id] = evidence;
  ordered_json args{{"plan", p.id}, {"element", e.id}, {"principal", auth.principal}};
  ordered_json result{{"activity", act.id}, {"evidence", evidence}};
  audit_->append(actor, "plan.execute", args.dump(), result.dump(), act.ended_at);
  return evidence;
}

std::vector<std::string> Workflow::execute_info_requirement(const std::string& plan_id,
                                                            const std::string& element_id,
                                                            const AuthContext& auth,
                                                            const std::string& actor) {
  auto& s = slot(plan_id);
  std::lock_guard lock(s.mu);
  InvestigationPlan p = s.plan;
  auto* e = p.element(element_id);
  if (!e) throw Error(ErrorCode::not_found, "unknown element '" + element_id + "'");
  if (e->kind != ElementKind::info_requirement || !e->query) {
    throw Error(ErrorCode::invalid, "element '" + element_id + "' is not an info requirement");
  }
  auto evidence = run_requirement(p, *e, auth, actor);
  refresh_statuses(p);
  s.plan = p;
  persist(p);
  return evidence;
}

void Workflow::validate_event(const InvestigationPlan& p, const WorkflowEvent& e, Timestamp now) const {
  if (e.kind.empty() || !security::is_valid_token(e.kind)) {
    throw Error(ErrorCode::invalid, "event kind must be a non-empty name");
  }
  if (now < e.occurred_at) throw Error(ErrorCode::invalid, "event occurred_at is in the future");
  if (!p.events.empty() && !(p.events.back().occurred_at < e.occurred_at)) {
    throw Error(ErrorCode::conflict, "event at " + format_rfc3339(e.occurred_at) +
                                         " does not follow the last event at " +
                                         format_rfc3339(p.events.back().occurred_at));
  }
  for (const auto& id : e.linked_facts) {
    if (!store_.fact(id)) throw Error(ErrorCode::not_found, "linked fact '" + id + "' not in the hub");
  }
}

InvestigationPlan Workflow::record_event(const std::string& plan_id, WorkflowEvent event,
                                         const std::string& actor) {
  auto& s = slot(plan_id);
  std::lock_guard lock(s.mu);
  InvestigationPlan p = s.plan;
  const auto now = clock_();
  if (event.actor.empty()) event.actor = actor;
  validate_event(p, event, now);
  event.id = "ev" + std::to_string(p.events.size() + 1);
  p.events.push_back(event);

  const auto evidence = evidence_facts(p);
  const PlanState state{&p.events, &evidence, &store_.ontology()};
  for (const auto& gate : rules_.gates_referencing(event.kind)) {
    p.gates[gate] = rules_.evaluate_gate(gate, state, now);
  }
  refresh_statuses(p);
  s.plan = p;
  persist(p);
  ordered_json args{{"plan", plan_id}, {"event", event_to_json(event)}};
  audit_->append(actor, "plan.event", args.dump(), plan_to_json(p).dump(), now);
  return p;
}

GateDecision Workflow::evaluate_gate(const std::string& plan_id, const std::string& gate) const {
  auto& s = slot(plan_id);
  std::lock_guard lock(s.mu);
  const auto evidence = evidence_facts(s.plan);
  const PlanState state{&s.plan.events, &evidence, &store_.ontology()};
  return rules_.evaluate_gate(gate, state, clock_());
}

GateDecision Workflow::dry_run_gate(const std::string& plan_id, const std::string& gate,
                                    std::vector<WorkflowEvent> hypothetical) const {
  auto& s = slot(plan_id);
  std::lock_guard lock(s.mu);
  InvestigationPlan copy = s.plan;
  for (auto& e : hypothetical) {
    // What-if events may lie in the future; ordering still applies.
    validate_event(copy, e, Timestamp{std::numeric_limits<std::int64_t>::max()});
    e.id = "ev" + std::to_string(copy.events.size() + 1);
    copy.events.push_back(std::move(e));
  }
  const auto evidence = evidence_facts(copy);
  const PlanState state{&copy.events, &evidence, &store_.ontology()};
  return rules_.evaluate_gate(gate, state, clock_());
}

std::optional<InvestigationPlan> Workflow::plan(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = plans_.find(id);
  if (it == plans_.end()) return std::nullopt;
  std::lock_guard plan_lock(it->second->mu);
  return it->second->plan;
}

std::vector<std::string> Workflow::plan_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : plans_) out.push_back(id);
  return out;
}

}  // namespace fedhub::workflow
