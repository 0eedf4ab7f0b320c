#include "fedhub/model/fact.h"

#include "fedhub/common/hash.h"
#include "fedhub/common/text.h"

#include <cmath>

namespace fedhub {

const char* to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::text:
      return "text";
    case ValueKind::integer:
      return "integer";
    case ValueKind::decimal:
      return "decimal";
    case ValueKind::date:
      return "date";
    case ValueKind::timestamp:
      return "timestamp";
    case ValueKind::boolean:
      return "boolean";
    case ValueKind::entity:
      return "entity";
  }
  return "text";
}

std::optional<ValueKind> value_kind_from_string(std::string_view s) {
  for (auto k : {ValueKind::text, ValueKind::integer, ValueKind::decimal, ValueKind::date,
                 ValueKind::timestamp, ValueKind::boolean, ValueKind::entity}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::optional<Value> make_value(ValueKind kind, std::string_view raw) {
  switch (kind) {
    case ValueKind::text:
      return Value{kind, std::string(raw)};
    case ValueKind::integer: {
      const auto v = text::parse_integer(raw);
      if (!v) return std::nullopt;
      return Value{kind, std::to_string(*v)};
    }
    case ValueKind::decimal: {
      const auto v = text::parse_decimal(raw);
      if (!v) return std::nullopt;
      return Value{kind, text::format_decimal(*v)};
    }
    case ValueKind::date: {
      const auto d = parse_iso_date(text::trim(raw));
      if (!d) return std::nullopt;
      return Value{kind, format_iso_date(*d)};
    }
    case ValueKind::timestamp: {
      const auto t = parse_rfc3339(text::trim(raw));
      if (!t) return std::nullopt;
      return Value{kind, format_rfc3339(*t)};
    }
    case ValueKind::boolean: {
      const auto lower = text::to_lower(text::trim(raw));
      if (lower == "true" || lower == "1" || lower == "yes") return Value{kind, "true"};
      if (lower == "false" || lower == "0" || lower == "no") return Value{kind, "false"};
      return std::nullopt;
    }
    case ValueKind::entity: {
      if (!concept_of(raw)) return std::nullopt;
      return Value{kind, std::string(raw)};
    }
  }
  return std::nullopt;
}

Value text_value(std::string s) { return Value{ValueKind::text, std::move(s)}; }
Value entity_value(std::string id) { return Value{ValueKind::entity, std::move(id)}; }

std::string make_entity_id(std::string_view concept_name, std::string_view key_material) {
  return std::string(concept_name) + ":" + sha256_hex(key_material).substr(0, 16);
}

std::optional<std::string> concept_of(std::string_view entity_id) {
  const auto pos = entity_id.find(':');
  if (pos == std::string_view::npos || pos == 0 || pos + 1 == entity_id.size()) return std::nullopt;
  return std::string(entity_id.substr(0, pos));
}

const char* to_string(Partition p) { return p == Partition::curated ? "curated" : "generated"; }

bool MetadataEnvelope::valid_at(Timestamp t) const {
  if (valid_from && t < *valid_from) return false;
  if (valid_to && !(t < *valid_to)) return false;
  return true;
}

std::string compute_fact_id(const Fact& f) {
  const std::string recorded = format_rfc3339(f.envelope.recorded_at);
  return hash_fields({f.subject, f.predicate, to_string(f.object.kind), f.object.lexical,
                      f.envelope.source, recorded, to_string(f.partition)});
}

Fact with_id(Fact f) {
  f.id = compute_fact_id(f);
  return f;
}

const char* to_string(ActivityKind kind) {
  switch (kind) {
    case ActivityKind::ingest:
      return "ingest";
    case ActivityKind::link:
      return "link";
    case ActivityKind::merge:
      return "merge";
    case ActivityKind::promote:
      return "promote";
    case ActivityKind::plan_step:
      return "plan-step";
    case ActivityKind::remote_query:
      return "remote-query";
  }
  return "ingest";
}

std::optional<ActivityKind> activity_kind_from_string(std::string_view s) {
  for (auto k : {ActivityKind::ingest, ActivityKind::link, ActivityKind::merge,
                 ActivityKind::promote, ActivityKind::plan_step, ActivityKind::remote_query}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string make_activity_id(ActivityKind kind, std::string_view material) {
  return std::string(to_string(kind)) + ":" + sha256_hex(material).substr(0, 16);
}

}  // namespace fedhub
