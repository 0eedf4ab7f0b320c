#pragma once

#include "fedhub/model/fact.h"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedhub::ontology {

// Attribute datatypes are the literal value kinds (everything except entity).
using Datatype = ValueKind;

struct ConceptDef {
  std::string name;
  std::optional<std::string> parent;
  std::string description;

  friend bool operator==(const ConceptDef&, const ConceptDef&) = default;
};

struct AttributeDef {
  std::string domain;
  std::string name;
  Datatype datatype = Datatype::text;

  friend bool operator==(const AttributeDef&, const AttributeDef&) = default;
};

struct RelationDef {
  std::string name;
  std::string domain;
  std::string range;

  friend bool operator==(const RelationDef&, const RelationDef&) = default;
};

enum class DefinitionKind { concept_def, attribute, relation };

struct DefinitionRef {
  DefinitionKind kind;
  std::string name;  // concept or relation name; bare attribute name
  std::string domain;  // attributes only
  std::string display;  // "concept Person", "attribute Person.name : text", ...
};

struct Violation {
  std::string code;  // "unknown subject concept", "domain mismatch", ...
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// Immutable, validated ontology. Concept taxonomy is single-inheritance with a
// unique root named "Entity".
class Ontology {
 public:
  static constexpr std::string_view kRootConcept = "Entity";

  // Throws ParseError (line/column), or Error(invalid) for unresolved references,
  // taxonomy cycles and root violations.
  static Ontology load(std::string_view doc);
  static Ontology load_file(const std::string& path);

  std::string print() const;

  const std::string& version() const { return version_; }
  const std::map<std::string, ConceptDef>& concepts() const { return concepts_; }
  const std::vector<AttributeDef>& attributes() const { return attributes_; }
  const std::map<std::string, RelationDef>& relations() const { return relations_; }

  bool has_concept(std::string_view name) const;
  const ConceptDef& concept_def(std::string_view name) const;  // throws not_found
  const RelationDef* find_relation(std::string_view name) const;

  // True iff `ancestor` is reachable from `c` via zero or more parent edges.
  // Throws Error(not_found) for unknown names.
  bool is_subconcept(std::string_view c, std::string_view ancestor) const;

  // Attribute `name` applicable to `concept_name`: the definition whose domain is
  // the nearest ancestor of the concept.
  const AttributeDef* find_attribute(std::string_view concept_name, std::string_view name) const;
  bool has_attribute_named(std::string_view name) const;

  std::vector<std::string> top_level_concepts() const;

  // Definitions whose name contains `pattern`, optionally restricted to one
  // kind, sorted by name (then kind, then domain).
  std::vector<DefinitionRef> query(std::string_view pattern,
                                   std::optional<DefinitionKind> kind = std::nullopt) const;

  std::vector<Violation> validate_fact(const Fact& fact) const;

  friend bool operator==(const Ontology&, const Ontology&) = default;

 private:
  std::string version_;
  std::map<std::string, ConceptDef> concepts_;
  std::vector<AttributeDef> attributes_;  // sorted by (domain, name)
  std::map<std::string, RelationDef> relations_;
};

inline bool is_subconcept(std::string_view c, std::string_view d, const Ontology& onto) {
  return onto.is_subconcept(c, d);
}

inline std::vector<Violation> validate_fact(const Fact& fact, const Ontology& onto) {
  return onto.validate_fact(fact);
}

const char* to_string(DefinitionKind kind);

}  // namespace fedhub::ontology
