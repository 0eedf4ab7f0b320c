#pragma once

#include "fedhub/ingest/mapping.h"
#include "fedhub/linker/linker.h"
#include "fedhub/security/visibility.h"

#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>

namespace fedhub::federation {

enum class SourceKind { csv_file, peer_hub, directory_of_documents };
const char* to_string(SourceKind k);
std::optional<SourceKind> source_kind_from_string(std::string_view s);

enum class Capability { keyword, structured };
const char* to_string(Capability c);
std::optional<Capability> capability_from_string(std::string_view s);

struct SourceDescriptor {
  std::string id;
  SourceKind kind = SourceKind::csv_file;
  std::string endpoint;  // file, directory or base URL
  std::set<Capability> capabilities;
  std::string mapping;    // mapping file path (csv-file)
  std::string gazetteer;  // gazetteer file path (directory-of-documents)
  security::VisibilityExpr default_visibility;

  friend bool operator==(const SourceDescriptor&, const SourceDescriptor&) = default;
};

// {"id", "kind", "endpoint", "capabilities": [...], "mapping", "gazetteer",
//  "default_visibility"}. Throws Error(parse/invalid).
nlohmann::ordered_json descriptor_to_json(const SourceDescriptor& d);
SourceDescriptor descriptor_from_json(const nlohmann::json& j);

// A descriptor with its mapping or gazetteer loaded.
struct ResolvedSource {
  SourceDescriptor desc;
  std::shared_ptr<const ingest::MappingRuleSet> mapping;
  std::shared_ptr<const linker::Gazetteer> gazetteer;
};

// Loads and validates the descriptor's mapping/gazetteer for its kind.
ResolvedSource resolve_source(const SourceDescriptor& d, const ontology::Ontology& onto);

}  // namespace fedhub::federation
