#pragma once

#include "fedhub/common/text.h"
#include "fedhub/model/fact.h"
#include "fedhub/ontology/ontology.h"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedhub::ingest {

enum class TransformKind { identity, trim, upper, date_parse, split, concat };

struct Transform {
  TransformKind kind = TransformKind::identity;
  std::string pattern;  // date-parse: e.g. YYYY-MM-DD, DD/MM/YYYY
  std::string delim;    // split
  std::string other;    // concat: second field
  std::string sep;      // concat: separator

  // Round-trippable text, e.g. `concat(surname," ")`.
  std::string print() const;
  friend bool operator==(const Transform&, const Transform&) = default;
};

// Parses `trim`, `date-parse(YYYY-MM-DD)`, `split(;)`, `concat(other, )`, ...
// Throws Error(invalid) on an unknown transform or malformed argument.
Transform parse_transform(std::string_view text);

// Applies `t` to `raw`. `other_value` feeds concat. Returns one or more values
// (split may yield several); throws Error(invalid) when the input does not fit
// (e.g. a date that does not match the pattern).
std::vector<std::string> apply_transform(const Transform& t, std::string_view raw,
                                         std::string_view other_value = {});

// Date text in `pattern` (YYYY, MM, DD placeholders, other characters literal)
// to ISO form; nullopt on mismatch or an impossible date.
std::optional<std::string> parse_date_with_pattern(std::string_view text, std::string_view pattern);

struct MappingRule {
  std::string source_field;
  std::string target;  // as written: `Concept.attribute` or `relation`
  bool is_relation = false;
  std::string name;        // attribute or relation name
  ValueKind datatype = ValueKind::text;  // attributes only
  std::string range_concept;             // relations only; a ref=<src>/<Concept> narrows it
  std::string ref_source;  // relations: source whose keys the value names (empty: this source)
  Transform transform;
  std::optional<security::VisibilityExpr> visibility;
  double confidence = 1.0;
  std::size_t line = 0;
};

struct MappingRuleSet {
  std::string source_concept;
  std::vector<std::string> key_fields;
  std::vector<MappingRule> rules;
};

// Mapping file lines:
//   entity <Concept> key(<field>[,<field>...])
//   map <field> -> <Concept>.<attribute> [<transform>] [vis="<expr>"] [conf=<decimal>]
//   map <field> -> <relation> [<transform>] [ref=<source id>[/<Concept>]] [vis=...] [conf=...]
// Every ontology name is resolved at parse time.
MappingRuleSet parse_mappings(std::string_view doc, const ontology::Ontology& onto);
MappingRuleSet load_mappings(const std::string& path, const ontology::Ontology& onto);

// Deterministic entity id for a record key within a source.
std::string record_entity_id(std::string_view concept_name, std::string_view source_id,
                             std::string_view key);

// Columns that carry envelope data rather than attributes.
inline constexpr std::string_view kRecordedAtColumn = "recorded_at";
inline constexpr std::string_view kValidFromColumn = "valid_from";
inline constexpr std::string_view kValidToColumn = "valid_to";

struct TransformContext {
  std::string source_id;
  std::string activity_id;
  std::string agent;
  Timestamp run_start;
  security::VisibilityExpr default_visibility;
};

struct ItemError {
  std::string item;  // `row <n>` (1-based data row) or a document name
  std::string message;

  friend bool operator==(const ItemError&, const ItemError&) = default;
};

struct TransformOutput {
  std::vector<Fact> facts;           // with ids
  std::vector<std::string> entities;  // distinct subjects, first-seen order
  std::vector<ItemError> errors;
};

// A row either contributes all of its facts or fails as a whole.
TransformOutput transform(const text::CsvTable& table, const MappingRuleSet& rules,
                          const TransformContext& ctx);

}  // namespace fedhub::ingest
