#include "fedhub/workflow/rules.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"

#include <algorithm>
#include <cctype>

namespace fedhub::workflow {

using hubstore::CompareOp;

// --- predicate text ---------------------------------------------------------------

namespace {

std::string literal_text(const Value& v) {
  if (v.kind == ValueKind::text) {
    std::string out = "\"";
    for (const char c : v.lexical) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }
  return v.lexical;
}

std::string join(const std::vector<Predicate>& ps) {
  std::string out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (i) out += ", ";
    out += ps[i].print();
  }
  return out;
}

}  // namespace

std::string Predicate::print() const {
  switch (kind) {
    case Kind::all: return "all(" + join(children) + ")";
    case Kind::any: return "any(" + join(children) + ")";
    case Kind::negate: return "not(" + join(children) + ")";
    case Kind::event: return "event(" + event_kind + ")";
    case Kind::payload:
      return "payload(" + event_kind + "." + field + ") " + hubstore::to_string(op) + " " +
             literal_text(literal);
    case Kind::within_hours:
      return "within_hours(" + event_kind + ", " + other_kind + (field.empty() ? "" : "." + field) +
             ", " + text::format_decimal(hours) + ")";
    case Kind::fact: return "fact(" + concept_name + ", " + predicate + ")";
  }
  return {};
}

void Predicate::collect_kinds(std::set<std::string>& out) const {
  if (!event_kind.empty()) out.insert(event_kind);
  if (!other_kind.empty()) out.insert(other_kind);
  for (const auto& c : children) c.collect_kinds(out);
}

namespace {

class PredicateParser {
 public:
  explicit PredicateParser(std::string_view s) : s_(s) {}

  Predicate parse_all() {
    auto p = parse_pred();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg + " at offset " + std::to_string(pos_), 0, 0, pos_);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':';
  }

  std::string ident() {
    skip_ws();
    const auto start = pos_;
    while (pos_ < s_.size() && ident_char(s_[pos_])) ++pos_;
    if (start == pos_) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string number_text() {
    skip_ws();
    const auto start = pos_;
    if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
    if (start == pos_) fail("expected a number");
    return std::string(s_.substr(start, pos_ - start));
  }

  CompareOp parse_op() {
    skip_ws();
    static const char* ops[] = {"<=", ">=", "!=", "=", "<", ">"};
    for (const char* o : ops) {
      const std::string_view sv(o);
      if (s_.substr(pos_, sv.size()) == sv) {
        pos_ += sv.size();
        return *hubstore::compare_op_from_string(sv);
      }
    }
    fail("expected a comparison operator");
  }

  Value parse_literal() {
    skip_ws();
    if (pos_ >= s_.size()) fail("expected a literal");
    const char c = s_[pos_];
    if (c == '"') {
      ++pos_;
      std::string out;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
        out += s_[pos_++];
      }
      if (pos_ >= s_.size()) fail("unterminated string");
      ++pos_;
      return text_value(out);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
      const auto n = number_text();
      const bool decimal = n.find('.') != std::string::npos;
      const auto v = make_value(decimal ? ValueKind::decimal : ValueKind::integer, n);
      if (!v) fail("malformed number '" + n + "'");
      return *v;
    }
    const auto word = ident();
    if (word == "true" || word == "false") return *make_value(ValueKind::boolean, word);
    return text_value(word);
  }

  Predicate parse_pred() {
    const auto start = pos_;
    const auto head = ident();
    Predicate p;
    expect('(');
    if (head == "all" || head == "any" || head == "not") {
      p.kind = head == "all" ? Predicate::Kind::all
               : head == "any" ? Predicate::Kind::any
                               : Predicate::Kind::negate;
      p.children.push_back(parse_pred());
      while (accept(',')) p.children.push_back(parse_pred());
      expect(')');
      if (p.kind == Predicate::Kind::negate && p.children.size() != 1) {
        pos_ = start;
        fail("not() takes exactly one predicate");
      }
    } else if (head == "event") {
      p.kind = Predicate::Kind::event;
      p.event_kind = ident();
      expect(')');
    } else if (head == "payload") {
      p.kind = Predicate::Kind::payload;
      p.event_kind = ident();
      expect('.');
      p.field = ident();
      expect(')');
      p.op = parse_op();
      p.literal = parse_literal();
    } else if (head == "within_hours") {
      p.kind = Predicate::Kind::within_hours;
      p.event_kind = ident();
      expect(',');
      p.other_kind = ident();
      if (accept('.')) p.field = ident();
      expect(',');
      const auto h = text::parse_decimal(number_text());
      if (!h || !(*h > 0.0)) fail("within_hours needs a positive hour count");
      p.hours = *h;
      expect(')');
    } else if (head == "fact") {
      p.kind = Predicate::Kind::fact;
      p.concept_name = ident();
      expect(',');
      p.predicate = ident();
      expect(')');
    } else {
      pos_ = start;
      fail("unknown predicate '" + head + "'");
    }
    return p;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

Predicate parse_predicate(std::string_view text) { return PredicateParser(text).parse_all(); }

// --- evaluation ------------------------------------------------------------------

namespace {

const WorkflowEvent* latest(const std::vector<WorkflowEvent>& events, const std::string& kind) {
  for (auto it = events.rbegin(); it != events.rend(); ++it) {
    if (it->kind == kind) return &*it;
  }
  return nullptr;
}

bool numeric(ValueKind k) { return k == ValueKind::integer || k == ValueKind::decimal; }

bool compare(const Value& a, CompareOp op, const Value& b) {
  int c = 0;
  if (numeric(a.kind) && numeric(b.kind)) {
    const double x = *text::parse_decimal(a.lexical);
    const double y = *text::parse_decimal(b.lexical);
    c = x < y ? -1 : (x > y ? 1 : 0);
  } else {
    if ((a.kind == ValueKind::boolean) != (b.kind == ValueKind::boolean)) {
      return op == CompareOp::ne;
    }
    c = a.lexical.compare(b.lexical);
    c = c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  switch (op) {
    case CompareOp::eq: return c == 0;
    case CompareOp::ne: return c != 0;
    case CompareOp::lt: return c < 0;
    case CompareOp::le: return c <= 0;
    case CompareOp::gt: return c > 0;
    case CompareOp::ge: return c >= 0;
    case CompareOp::contains:
      return text::to_lower(a.lexical).find(text::to_lower(b.lexical)) != std::string::npos;
  }
  return false;
}

}  // namespace

bool evaluate(const Predicate& p, const PlanState& state) {
  static const std::vector<WorkflowEvent> no_events;
  static const std::vector<Fact> no_facts;
  const auto& events = state.events ? *state.events : no_events;
  const auto& evidence = state.evidence ? *state.evidence : no_facts;
  switch (p.kind) {
    case Predicate::Kind::all:
      return std::all_of(p.children.begin(), p.children.end(),
                         [&](const Predicate& c) { return evaluate(c, state); });
    case Predicate::Kind::any:
      return std::any_of(p.children.begin(), p.children.end(),
                         [&](const Predicate& c) { return evaluate(c, state); });
    case Predicate::Kind::negate:
      return !evaluate(p.children.front(), state);
    case Predicate::Kind::event:
      return latest(events, p.event_kind) != nullptr;
    case Predicate::Kind::payload: {
      const auto* e = latest(events, p.event_kind);
      if (!e) return false;
      const auto it = e->payload.find(p.field);
      return it != e->payload.end() && compare(it->second, p.op, p.literal);
    }
    case Predicate::Kind::within_hours: {
      const auto* a = latest(events, p.event_kind);
      const auto* b = latest(events, p.other_kind);
      if (!a || !b) return false;
      Timestamp tb = b->occurred_at;
      if (!p.field.empty()) {
        const auto it = b->payload.find(p.field);
        if (it == b->payload.end()) return false;
        const auto t = parse_rfc3339(it->second.lexical);
        if (!t) return false;
        tb = *t;
      }
      const auto delta = tb.seconds - a->occurred_at.seconds;
      // Inclusive at the boundary: exactly h hours later still qualifies.
      return delta >= 0 && static_cast<double>(delta) <= p.hours * 3600.0;
    }
    case Predicate::Kind::fact:
      return std::any_of(evidence.begin(), evidence.end(), [&](const Fact& f) {
        if (f.predicate != p.predicate) return false;
        const auto c = concept_of(f.subject).value_or("");
        if (state.onto && state.onto->has_concept(c) && state.onto->has_concept(p.concept_name)) {
          return state.onto->is_subconcept(c, p.concept_name);
        }
        return c == p.concept_name;
      });
  }
  return false;
}

// --- rule sets -------------------------------------------------------------------

RuleSet RuleSet::parse(std::string_view doc, const ontology::Ontology* onto) {
  RuleSet rs;
  std::string current_gate;
  std::set<std::string> ids;
  struct Pending {
    std::size_t line;
    std::size_t column;
  };
  std::vector<Pending> where;
  std::size_t line_no = 0;
  for (const auto& line : text::split(doc, '\n')) {
    ++line_no;
    const auto toks = text::tokenize_line(line, line_no);
    if (toks.empty()) continue;
    const auto& head = toks[0].value;
    if (head == "kinds") {
      if (toks.size() < 2) throw ParseError("kinds needs at least one event kind", line_no, toks[0].column);
      for (std::size_t i = 1; i < toks.size(); ++i) rs.kinds_.insert(toks[i].value);
    } else if (head == "gate") {
      if (toks.size() != 2) throw ParseError("expected: gate <name>", line_no, toks[0].column);
      current_gate = toks[1].value;
      rs.gate_names_.insert(current_gate);
    } else if (head == "rule") {
      if (toks.size() < 6 || toks[2].value != "cite" || !toks[3].quoted || toks[4].value != "require") {
        throw ParseError("expected: rule <id> cite \"<citation>\" require <predicate>", line_no,
                         toks[0].column);
      }
      if (current_gate.empty()) throw ParseError("rule before any gate", line_no, toks[0].column);
      if (!ids.insert(toks[1].value).second) {
        throw ParseError("duplicate rule id '" + toks[1].value + "'", line_no, toks[1].column);
      }
      // The predicate is the raw remainder of the line after `require`.
      const auto start = toks[5].column - 1;
      auto body = std::string_view(line).substr(start);
      if (const auto hash = body.find('#'); hash != std::string_view::npos &&
                                            body.substr(0, hash).find('"') == std::string_view::npos) {
        body = body.substr(0, hash);
      }
      ComplianceRule r;
      r.id = toks[1].value;
      r.citation = toks[3].value;
      r.gate = current_gate;
      try {
        r.requirement = parse_predicate(text::trim(body));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), line_no, start + 1 + e.offset());
      }
      rs.rules_.push_back(std::move(r));
      where.push_back({line_no, toks[5].column});
    } else {
      throw ParseError("unknown directive '" + head + "'", line_no, toks[0].column);
    }
  }
  for (std::size_t i = 0; i < rs.rules_.size(); ++i) {
    std::set<std::string> used;
    rs.rules_[i].requirement.collect_kinds(used);
    for (const auto& k : used) {
      if (!rs.kinds_.count(k)) {
        throw Error(ErrorCode::invalid, "rule '" + rs.rules_[i].id + "' names undeclared event kind '" +
                                            k + "' at line " + std::to_string(where[i].line));
      }
    }
    if (onto) {
      std::vector<const Predicate*> stack{&rs.rules_[i].requirement};
      while (!stack.empty()) {
        const auto* p = stack.back();
        stack.pop_back();
        if (p->kind == Predicate::Kind::fact && !onto->has_concept(p->concept_name)) {
          throw Error(ErrorCode::invalid, "rule '" + rs.rules_[i].id + "' names unknown concept '" +
                                              p->concept_name + "'");
        }
        for (const auto& c : p->children) stack.push_back(&c);
      }
    }
  }
  return rs;
}

RuleSet RuleSet::load_file(const std::string& path, const ontology::Ontology* onto) {
  return parse(text::read_file(path), onto);
}

void RuleSet::merge(const RuleSet& other) {
  for (const auto& r : other.rules_) {
    for (const auto& mine : rules_) {
      if (mine.id == r.id) throw Error(ErrorCode::conflict, "duplicate rule id '" + r.id + "'");
    }
  }
  gate_names_.insert(other.gate_names_.begin(), other.gate_names_.end());
  kinds_.insert(other.kinds_.begin(), other.kinds_.end());
  rules_.insert(rules_.end(), other.rules_.begin(), other.rules_.end());
}

bool RuleSet::has_gate(std::string_view gate) const { return gate_names_.count(std::string(gate)) > 0; }

std::vector<std::string> RuleSet::gates() const { return {gate_names_.begin(), gate_names_.end()}; }

std::vector<const ComplianceRule*> RuleSet::rules_for(std::string_view gate) const {
  std::vector<const ComplianceRule*> out;
  for (const auto& r : rules_) {
    if (r.gate == gate) out.push_back(&r);
  }
  return out;
}

std::set<std::string> RuleSet::gates_referencing(std::string_view kind) const {
  std::set<std::string> out;
  for (const auto& r : rules_) {
    std::set<std::string> used;
    r.requirement.collect_kinds(used);
    if (used.count(std::string(kind))) out.insert(r.gate);
  }
  return out;
}

GateDecision RuleSet::evaluate_gate(std::string_view gate, const PlanState& state, Timestamp now) const {
  if (!has_gate(gate)) throw Error(ErrorCode::not_found, "unknown gate '" + std::string(gate) + "'");
  GateDecision d;
  d.gate = std::string(gate);
  d.evaluated_at = now;
  for (const auto* r : rules_for(gate)) {
    if (!evaluate(r->requirement, state)) {
      d.missing.emplace_back(r->id, r->citation + ": " + r->requirement.print());
    }
  }
  d.open = d.missing.empty();
  return d;
}

}  // namespace fedhub::workflow
