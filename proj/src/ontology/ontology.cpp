#include "fedhub/ontology/ontology.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace fedhub::ontology {

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

struct Located {
  std::size_t line;
  std::size_t column;
};

}  // namespace

const char* to_string(DefinitionKind kind) {
  switch (kind) {
    case DefinitionKind::concept_def:
      return "concept";
    case DefinitionKind::attribute:
      return "attribute";
    case DefinitionKind::relation:
      return "relation";
  }
  return "concept";
}

Ontology Ontology::load(std::string_view doc) {
  Ontology o;
  std::map<std::string, Located> concept_at;
  std::map<std::pair<std::string, std::string>, Located> attribute_at;
  std::map<std::string, Located> relation_at;
  std::vector<std::pair<std::string, Located>> references;  // name, where it was used

  std::size_t line_no = 0;
  for (const auto& raw : text::split(doc, '\n')) {
    ++line_no;
    const auto toks = text::tokenize_line(raw, line_no);
    if (toks.empty()) continue;
    const auto& kw = toks[0].value;
    auto expect_ident = [&](std::size_t i, const char* what) -> const std::string& {
      if (i >= toks.size()) {
        throw ParseError(std::string("expected ") + what, line_no, raw.size() + 1);
      }
      if (toks[i].quoted || !is_identifier(toks[i].value)) {
        throw ParseError(std::string("expected ") + what + ", got '" + toks[i].value + "'", line_no,
                         toks[i].column);
      }
      return toks[i].value;
    };
    auto expect_punct = [&](std::size_t i, const char* punct) {
      if (i >= toks.size() || toks[i].quoted || toks[i].value != punct) {
        throw ParseError(std::string("expected '") + punct + "'", line_no,
                         i < toks.size() ? toks[i].column : raw.size() + 1);
      }
    };

    if (kw == "version") {
      if (toks.size() != 2) throw ParseError("expected: version <text>", line_no, toks[0].column);
      o.version_ = toks[1].value;
    } else if (kw == "concept") {
      ConceptDef c;
      c.name = expect_ident(1, "concept name");
      for (std::size_t i = 2; i < toks.size(); ++i) {
        if (toks[i].quoted) {
          c.description = toks[i].value;
        } else if (text::starts_with(toks[i].value, "parent=")) {
          const auto parent = toks[i].value.substr(7);
          if (!is_identifier(parent)) {
            throw ParseError("malformed parent name '" + parent + "'", line_no, toks[i].column);
          }
          c.parent = parent;
          references.push_back({parent, {line_no, toks[i].column}});
        } else {
          throw ParseError("unexpected '" + toks[i].value + "'", line_no, toks[i].column);
        }
      }
      if (!concept_at.emplace(c.name, Located{line_no, toks[1].column}).second) {
        throw ParseError("duplicate concept '" + c.name + "'", line_no, toks[1].column);
      }
      o.concepts_.emplace(c.name, std::move(c));
    } else if (kw == "attribute") {
      if (toks.size() < 2) throw ParseError("expected <domain>.<name>", line_no, raw.size() + 1);
      const auto& qualified = toks[1].value;
      const auto dot = qualified.find('.');
      if (dot == std::string::npos || !is_identifier(qualified.substr(0, dot)) ||
          !is_identifier(qualified.substr(dot + 1))) {
        throw ParseError("expected <domain>.<name>, got '" + qualified + "'", line_no, toks[1].column);
      }
      expect_punct(2, ":");
      if (toks.size() < 4) throw ParseError("expected datatype", line_no, raw.size() + 1);
      const auto dt = value_kind_from_string(toks[3].value);
      if (!dt || *dt == ValueKind::entity) {
        throw ParseError("unknown datatype '" + toks[3].value + "'", line_no, toks[3].column);
      }
      if (toks.size() > 4) throw ParseError("unexpected '" + toks[4].value + "'", line_no, toks[4].column);
      AttributeDef a{qualified.substr(0, dot), qualified.substr(dot + 1), *dt};
      references.push_back({a.domain, {line_no, toks[1].column}});
      if (!attribute_at.emplace(std::pair{a.domain, a.name}, Located{line_no, toks[1].column}).second) {
        throw ParseError("duplicate attribute '" + qualified + "'", line_no, toks[1].column);
      }
      o.attributes_.push_back(std::move(a));
    } else if (kw == "relation") {
      RelationDef r;
      r.name = expect_ident(1, "relation name");
      expect_punct(2, ":");
      r.domain = expect_ident(3, "domain concept");
      expect_punct(4, "->");
      r.range = expect_ident(5, "range concept");
      if (toks.size() > 6) throw ParseError("unexpected '" + toks[6].value + "'", line_no, toks[6].column);
      references.push_back({r.domain, {line_no, toks[3].column}});
      references.push_back({r.range, {line_no, toks[5].column}});
      if (!relation_at.emplace(r.name, Located{line_no, toks[1].column}).second) {
        throw ParseError("duplicate relation '" + r.name + "'", line_no, toks[1].column);
      }
      o.relations_.emplace(r.name, std::move(r));
    } else {
      throw ParseError("unknown declaration '" + kw + "'", line_no, toks[0].column);
    }
  }

  for (const auto& [name, at] : references) {
    if (!o.concepts_.count(name)) {
      throw Error(ErrorCode::invalid, "unresolved reference '" + name + "' at line " +
                                          std::to_string(at.line) + ", column " +
                                          std::to_string(at.column));
    }
  }

  // Cycle detection: walk each concept's parent chain.
  for (const auto& [name, _] : o.concepts_) {
    std::vector<std::string> path{name};
    std::set<std::string> seen{name};
    const ConceptDef* cur = &o.concepts_.at(name);
    while (cur->parent) {
      const auto& p = *cur->parent;
      if (seen.count(p)) {
        std::string cycle;
        const auto start = std::find(path.begin(), path.end(), p);
        for (auto it = start; it != path.end(); ++it) cycle += *it + " -> ";
        cycle += p;
        throw Error(ErrorCode::invalid, "taxonomy cycle: " + cycle);
      }
      seen.insert(p);
      path.push_back(p);
      cur = &o.concepts_.at(p);
    }
  }

  std::vector<std::string> roots;
  for (const auto& [name, c] : o.concepts_) {
    if (!c.parent) roots.push_back(name);
  }
  if (roots.size() != 1 || roots.front() != kRootConcept) {
    std::string listed;
    for (const auto& r : roots) listed += (listed.empty() ? "" : ", ") + r;
    throw Error(ErrorCode::invalid, "ontology must have exactly one root concept named Entity (roots: " +
                                        (listed.empty() ? std::string("none") : listed) + ")");
  }

  std::sort(o.attributes_.begin(), o.attributes_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.domain, a.name) < std::tie(b.domain, b.name);
  });
  return o;
}

Ontology Ontology::load_file(const std::string& path) { return load(text::read_file(path)); }

std::string Ontology::print() const {
  std::ostringstream out;
  if (!version_.empty()) out << "version " << quote(version_) << "\n";
  for (const auto& [name, c] : concepts_) {
    out << "concept " << name;
    if (c.parent) out << " parent=" << *c.parent;
    if (!c.description.empty()) out << " " << quote(c.description);
    out << "\n";
  }
  for (const auto& a : attributes_) {
    out << "attribute " << a.domain << "." << a.name << " : " << to_string(a.datatype) << "\n";
  }
  for (const auto& [name, r] : relations_) {
    out << "relation " << name << " : " << r.domain << " -> " << r.range << "\n";
  }
  return out.str();
}

bool Ontology::has_concept(std::string_view name) const {
  return concepts_.find(std::string(name)) != concepts_.end();
}

const ConceptDef& Ontology::concept_def(std::string_view name) const {
  const auto it = concepts_.find(std::string(name));
  if (it == concepts_.end()) throw Error(ErrorCode::not_found, "unknown concept '" + std::string(name) + "'");
  return it->second;
}

const RelationDef* Ontology::find_relation(std::string_view name) const {
  const auto it = relations_.find(std::string(name));
  return it == relations_.end() ? nullptr : &it->second;
}

bool Ontology::is_subconcept(std::string_view c, std::string_view ancestor) const {
  concept_def(ancestor);
  const ConceptDef* cur = &concept_def(c);
  while (true) {
    if (cur->name == ancestor) return true;
    if (!cur->parent) return false;
    cur = &concepts_.at(*cur->parent);
  }
}

const AttributeDef* Ontology::find_attribute(std::string_view concept_name,
                                             std::string_view name) const {
  auto cit = concepts_.find(std::string(concept_name));
  if (cit == concepts_.end()) return nullptr;
  const ConceptDef* cur = &cit->second;
  while (true) {
    for (const auto& a : attributes_) {
      if (a.domain == cur->name && a.name == name) return &a;
    }
    if (!cur->parent) return nullptr;
    cur = &concepts_.at(*cur->parent);
  }
}

bool Ontology::has_attribute_named(std::string_view name) const {
  return std::any_of(attributes_.begin(), attributes_.end(),
                     [&](const AttributeDef& a) { return a.name == name; });
}

std::vector<std::string> Ontology::top_level_concepts() const {
  std::vector<std::string> out;
  for (const auto& [name, c] : concepts_) {
    if (c.parent && *c.parent == kRootConcept) out.push_back(name);
  }
  return out;
}

std::vector<DefinitionRef> Ontology::query(std::string_view pattern,
                                           std::optional<DefinitionKind> kind) const {
  std::vector<DefinitionRef> out;
  auto wanted = [&](DefinitionKind k, std::string_view name) {
    return (!kind || *kind == k) && name.find(pattern) != std::string_view::npos;
  };
  for (const auto& [name, c] : concepts_) {
    if (!wanted(DefinitionKind::concept_def, name)) continue;
    std::string display = "concept " + name;
    if (c.parent) display += " parent=" + *c.parent;
    out.push_back({DefinitionKind::concept_def, name, "", display});
  }
  for (const auto& a : attributes_) {
    if (!wanted(DefinitionKind::attribute, a.name)) continue;
    out.push_back({DefinitionKind::attribute, a.name, a.domain,
                   "attribute " + a.domain + "." + a.name + " : " + to_string(a.datatype)});
  }
  for (const auto& [name, r] : relations_) {
    if (!wanted(DefinitionKind::relation, name)) continue;
    out.push_back({DefinitionKind::relation, name, "",
                   "relation " + name + " : " + r.domain + " -> " + r.range});
  }
  std::sort(out.begin(), out.end(), [](const DefinitionRef& a, const DefinitionRef& b) {
    return std::tie(a.name, a.kind, a.domain) < std::tie(b.name, b.kind, b.domain);
  });
  return out;
}

std::vector<Violation> Ontology::validate_fact(const Fact& fact) const {
  std::vector<Violation> out;
  const auto subject_concept = concept_of(fact.subject);
  if (!subject_concept || !has_concept(*subject_concept)) {
    out.push_back({"unknown subject concept",
                   "subject '" + fact.subject + "' does not name a declared concept"});
    return out;
  }
  if (const auto* rel = find_relation(fact.predicate)) {
    if (!is_subconcept(*subject_concept, rel->domain)) {
      out.push_back({"domain mismatch", "relation '" + rel->name + "' requires subject of concept " +
                                            rel->domain + ", got " + *subject_concept});
    }
    if (fact.object.kind != ValueKind::entity) {
      out.push_back({"range mismatch", "relation '" + rel->name + "' requires an entity object"});
    } else {
      const auto obj_concept = concept_of(fact.object.lexical);
      if (!obj_concept || !has_concept(*obj_concept) || !is_subconcept(*obj_concept, rel->range)) {
        out.push_back({"range mismatch", "relation '" + rel->name + "' requires object of concept " +
                                             rel->range + ", got " +
                                             obj_concept.value_or("<malformed>")});
      }
    }
    return out;
  }
  const auto* attr = find_attribute(*subject_concept, fact.predicate);
  if (!attr) {
    if (has_attribute_named(fact.predicate)) {
      out.push_back({"domain mismatch", "attribute '" + fact.predicate +
                                            "' is not defined for concept " + *subject_concept});
    } else {
      out.push_back({"unknown predicate", "'" + fact.predicate + "' is not a declared attribute or relation"});
    }
    return out;
  }
  const auto canonical = make_value(attr->datatype, fact.object.lexical);
  if (fact.object.kind != attr->datatype || !canonical || canonical->lexical != fact.object.lexical) {
    out.push_back({"datatype mismatch", "attribute '" + attr->domain + "." + attr->name + "' expects " +
                                            to_string(attr->datatype) + ", got " +
                                            to_string(fact.object.kind) + " '" + fact.object.lexical + "'"});
  }
  return out;
}

}  // namespace fedhub::ontology
