#pragma once

#include "fedhub/common/time.h"
#include "fedhub/security/visibility.h"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fedhub {

enum class ValueKind { text, integer, decimal, date, timestamp, boolean, entity };

const char* to_string(ValueKind kind);
std::optional<ValueKind> value_kind_from_string(std::string_view s);

// Typed literal or entity reference. `lexical` is always the canonical lexical
// form for the kind (see make_value), which keeps fact hashes stable.
struct Value {
  ValueKind kind = ValueKind::text;
  std::string lexical;

  friend bool operator==(const Value&, const Value&) = default;
  friend auto operator<=>(const Value&, const Value&) = default;
};

// Validates `raw` against `kind` and returns the canonical form; nullopt if
// the text is not a valid literal of that kind.
std::optional<Value> make_value(ValueKind kind, std::string_view raw);
Value text_value(std::string s);
Value entity_value(std::string id);

// Entity ids carry their concept: `<Concept>:<hex>`.
std::string make_entity_id(std::string_view concept_name, std::string_view key_material);
std::optional<std::string> concept_of(std::string_view entity_id);

enum class Partition { generated, curated };
const char* to_string(Partition p);

struct ExternalRef {
  std::string system;
  std::string key;

  friend bool operator==(const ExternalRef&, const ExternalRef&) = default;
};

struct MetadataEnvelope {
  std::string source;
  std::string activity;
  std::string agent;
  Timestamp recorded_at;
  std::optional<Timestamp> valid_from;
  std::optional<Timestamp> valid_to;
  security::VisibilityExpr visibility;
  double confidence = 1.0;
  std::vector<ExternalRef> external_refs;

  friend bool operator==(const MetadataEnvelope&, const MetadataEnvelope&) = default;

  // Half-open validity: included iff from <= t < to (missing bounds are unbounded).
  bool valid_at(Timestamp t) const;
};

struct Fact {
  std::string id;
  std::string subject;
  std::string predicate;
  Value object;
  Partition partition = Partition::generated;
  MetadataEnvelope envelope;

  friend bool operator==(const Fact&, const Fact&) = default;
};

// Content hash over subject, predicate, object, source, recorded_at and partition.
std::string compute_fact_id(const Fact& f);
// Returns `f` with its id filled in.
Fact with_id(Fact f);

enum class ActivityKind { ingest, link, merge, promote, plan_step, remote_query };
const char* to_string(ActivityKind kind);
std::optional<ActivityKind> activity_kind_from_string(std::string_view s);

// PROV-style activity. `inputs` name facts, sources or documents that the
// activity used; ingest and remote-query activities list their source id.
struct Activity {
  std::string id;
  ActivityKind kind = ActivityKind::ingest;
  Timestamp started_at;
  Timestamp ended_at;
  std::string agent;
  std::vector<std::string> inputs;

  friend bool operator==(const Activity&, const Activity&) = default;
};

// `<kind>:<16 hex>` derived from caller-supplied material.
std::string make_activity_id(ActivityKind kind, std::string_view material);

struct DocumentBlob {
  std::string id;
  std::string media_type;
  std::string bytes;
  MetadataEnvelope envelope;
};

}  // namespace fedhub
