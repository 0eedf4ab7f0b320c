#include "fedhub/model/codec.h"

#include "fedhub/common/error.h"

namespace fedhub::codec {

namespace {

[[noreturn]] void bad(const std::string& what) {
  throw Error(ErrorCode::corrupt, "malformed record: " + what);
}

const ordered_json& field(const ordered_json& j, const char* name) {
  if (!j.is_object()) bad("expected object");
  const auto it = j.find(name);
  if (it == j.end()) bad(std::string("missing field '") + name + "'");
  return *it;
}

std::string str_field(const ordered_json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) bad(std::string("field '") + name + "' is not a string");
  return v.get<std::string>();
}

Timestamp ts_field(const ordered_json& j, const char* name) {
  const auto t = parse_rfc3339(str_field(j, name));
  if (!t) bad(std::string("field '") + name + "' is not an RFC 3339 timestamp");
  return *t;
}

}  // namespace

ordered_json envelope_to_json(const MetadataEnvelope& e) {
  ordered_json j;
  j["source"] = e.source;
  j["activity"] = e.activity;
  j["agent"] = e.agent;
  j["recorded_at"] = format_rfc3339(e.recorded_at);
  if (e.valid_from) j["valid_from"] = format_rfc3339(*e.valid_from);
  if (e.valid_to) j["valid_to"] = format_rfc3339(*e.valid_to);
  j["visibility"] = e.visibility.print();
  j["confidence"] = e.confidence;
  j["external_refs"] = ordered_json::array();
  for (const auto& r : e.external_refs) {
    j["external_refs"].push_back(ordered_json{{"system", r.system}, {"key", r.key}});
  }
  return j;
}

MetadataEnvelope envelope_from_json(const ordered_json& j) {
  MetadataEnvelope e;
  e.source = str_field(j, "source");
  e.activity = str_field(j, "activity");
  e.agent = str_field(j, "agent");
  e.recorded_at = ts_field(j, "recorded_at");
  if (j.contains("valid_from")) e.valid_from = ts_field(j, "valid_from");
  if (j.contains("valid_to")) e.valid_to = ts_field(j, "valid_to");
  try {
    e.visibility = security::VisibilityExpr::parse(str_field(j, "visibility")).canonical();
  } catch (const ParseError& err) {
    bad(err.what());
  }
  const auto& conf = field(j, "confidence");
  if (!conf.is_number()) bad("field 'confidence' is not a number");
  e.confidence = conf.get<double>();
  const auto& refs = field(j, "external_refs");
  if (!refs.is_array()) bad("field 'external_refs' is not an array");
  for (const auto& r : refs) e.external_refs.push_back({str_field(r, "system"), str_field(r, "key")});
  return e;
}

ordered_json fact_to_json(const Fact& f) {
  ordered_json j;
  j["id"] = f.id;
  j["subject"] = f.subject;
  j["predicate"] = f.predicate;
  j["object"] = ordered_json{{"kind", to_string(f.object.kind)}, {"value", f.object.lexical}};
  j["partition"] = to_string(f.partition);
  j["envelope"] = envelope_to_json(f.envelope);
  return j;
}

Fact fact_from_json(const ordered_json& j) {
  Fact f;
  f.id = str_field(j, "id");
  f.subject = str_field(j, "subject");
  f.predicate = str_field(j, "predicate");
  const auto& obj = field(j, "object");
  const auto kind = value_kind_from_string(str_field(obj, "kind"));
  if (!kind) bad("unknown object kind");
  f.object = Value{*kind, str_field(obj, "value")};
  const auto part = str_field(j, "partition");
  if (part == "curated") {
    f.partition = Partition::curated;
  } else if (part == "generated") {
    f.partition = Partition::generated;
  } else {
    bad("unknown partition '" + part + "'");
  }
  f.envelope = envelope_from_json(field(j, "envelope"));
  return f;
}

std::string fact_to_line(const Fact& f) { return fact_to_json(f).dump(); }

Fact fact_from_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    bad(e.what());
  }
  return fact_from_json(j);
}

ordered_json activity_to_json(const Activity& a) {
  ordered_json j;
  j["id"] = a.id;
  j["kind"] = to_string(a.kind);
  j["started_at"] = format_rfc3339(a.started_at);
  j["ended_at"] = format_rfc3339(a.ended_at);
  j["agent"] = a.agent;
  j["inputs"] = a.inputs;
  return j;
}

Activity activity_from_json(const ordered_json& j) {
  Activity a;
  a.id = str_field(j, "id");
  const auto kind = activity_kind_from_string(str_field(j, "kind"));
  if (!kind) bad("unknown activity kind");
  a.kind = *kind;
  a.started_at = ts_field(j, "started_at");
  a.ended_at = ts_field(j, "ended_at");
  a.agent = str_field(j, "agent");
  const auto& inputs = field(j, "inputs");
  if (!inputs.is_array()) bad("field 'inputs' is not an array");
  for (const auto& i : inputs) {
    if (!i.is_string()) bad("activity input is not a string");
    a.inputs.push_back(i.get<std::string>());
  }
  return a;
}

}  // namespace fedhub::codec
