#include "fedhub/federation/source.h"

#include "fedhub/common/error.h"

namespace fedhub::federation {

const char* to_string(SourceKind k) {
  switch (k) {
    case SourceKind::csv_file: return "csv-file";
    case SourceKind::peer_hub: return "peer-hub";
    case SourceKind::directory_of_documents: return "directory-of-documents";
  }
  return "csv-file";
}

std::optional<SourceKind> source_kind_from_string(std::string_view s) {
  if (s == "csv-file") return SourceKind::csv_file;
  if (s == "peer-hub") return SourceKind::peer_hub;
  if (s == "directory-of-documents") return SourceKind::directory_of_documents;
  return std::nullopt;
}

const char* to_string(Capability c) {
  return c == Capability::keyword ? "keyword" : "structured";
}

std::optional<Capability> capability_from_string(std::string_view s) {
  if (s == "keyword") return Capability::keyword;
  if (s == "structured") return Capability::structured;
  return std::nullopt;
}

nlohmann::ordered_json descriptor_to_json(const SourceDescriptor& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["kind"] = to_string(d.kind);
  j["endpoint"] = d.endpoint;
  auto caps = nlohmann::ordered_json::array();
  for (const auto c : d.capabilities) caps.push_back(to_string(c));
  j["capabilities"] = caps;
  j["mapping"] = d.mapping;
  j["gazetteer"] = d.gazetteer;
  j["default_visibility"] = d.default_visibility.print();
  return j;
}

SourceDescriptor descriptor_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::parse, "source descriptor must be a JSON object");
  auto str = [&](const char* key, bool required) -> std::string {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) throw Error(ErrorCode::invalid, std::string("source descriptor lacks '") + key + "'");
      return {};
    }
    if (!it->is_string()) throw Error(ErrorCode::parse, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
  };
  SourceDescriptor d;
  d.id = str("id", true);
  if (d.id.empty() || !security::is_valid_token(d.id)) {
    throw Error(ErrorCode::invalid, "source id '" + d.id + "' must match [A-Za-z0-9_.:-]+");
  }
  const auto kind = str("kind", true);
  const auto k = source_kind_from_string(kind);
  if (!k) throw Error(ErrorCode::invalid, "unknown source kind '" + kind + "'");
  d.kind = *k;
  d.endpoint = str("endpoint", false);
  d.mapping = str("mapping", false);
  d.gazetteer = str("gazetteer", false);
  d.default_visibility = security::VisibilityExpr::parse(str("default_visibility", false)).canonical();
  if (const auto it = j.find("capabilities"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::parse, "'capabilities' must be an array");
    for (const auto& c : *it) {
      const auto cap = c.is_string() ? capability_from_string(c.get<std::string>()) : std::nullopt;
      if (!cap) throw Error(ErrorCode::invalid, "unknown capability " + c.dump());
      d.capabilities.insert(*cap);
    }
  } else {
    d.capabilities = {Capability::keyword, Capability::structured};
  }
  return d;
}

ResolvedSource resolve_source(const SourceDescriptor& d, const ontology::Ontology& onto) {
  ResolvedSource r;
  r.desc = d;
  switch (d.kind) {
    case SourceKind::csv_file:
      if (d.mapping.empty()) throw Error(ErrorCode::invalid, "csv-file source '" + d.id + "' needs a mapping");
      r.mapping = std::make_shared<const ingest::MappingRuleSet>(ingest::load_mappings(d.mapping, onto));
      break;
    case SourceKind::directory_of_documents:
      if (d.gazetteer.empty()) {
        throw Error(ErrorCode::invalid, "document source '" + d.id + "' needs a gazetteer");
      }
      r.gazetteer = std::make_shared<const linker::Gazetteer>(linker::Gazetteer::load_file(d.gazetteer, &onto));
      break;
    case SourceKind::peer_hub:
      if (d.endpoint.empty()) throw Error(ErrorCode::invalid, "peer-hub source '" + d.id + "' needs an endpoint");
      break;
  }
  return r;
}

}  // namespace fedhub::federation
