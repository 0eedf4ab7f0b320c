#pragma once

#include "fedhub/federation/federation.h"

#include <chrono>
#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace fedhub::service {

// Directory holding the bundled ontology, rule pack, templates and fixtures.
std::filesystem::path bundled_data_dir();

struct NodeConfig {
  std::string node_id = "hub";
  std::string listen = "127.0.0.1:8600";
  std::filesystem::path data_dir;  // empty: in-memory node
  std::filesystem::path ontology;
  std::filesystem::path rules;
  std::filesystem::path templates;
  std::filesystem::path similarity;
  std::chrono::milliseconds dispatch_timeout{5000};
  std::size_t max_in_flight = 8;
  bool fsync = true;
  federation::PeerGrants peers;                          // peer id -> granted tokens
  std::map<std::string, std::set<std::string>> principals;  // operator -> token grant
  // Open policy questions, surfaced as switches and reported by /health.
  bool cross_team_access = false;
  bool retain_personal_data = false;

  NodeConfig();  // bundled ontology, rules, templates and similarity config
};

// `key=value` lines, `#` comments. Keys: node_id, listen, data_dir, ontology,
// rules, templates, similarity, dispatch_timeout_ms, max_in_flight, fsync,
// peer.<id>=T1,T2, principal.<name>=T1,T2, policy.cross_team_access,
// policy.retain_personal_data. Relative paths resolve against `base`.
// `env` entries (FEDHUB_<KEY>, e.g. FEDHUB_DATA_DIR or FEDHUB_PEER_B) override
// the file. Throws ParseError or Error(invalid).
NodeConfig parse_config(std::string_view doc, const std::filesystem::path& base,
                        const std::map<std::string, std::string>& env = {});
NodeConfig load_config(const std::filesystem::path& path,
                       const std::map<std::string, std::string>& env = {});
// Config from environment variables alone.
NodeConfig config_from_env(const std::map<std::string, std::string>& env);

// FEDHUB_* variables of the current process.
std::map<std::string, std::string> fedhub_environment();

void validate(const NodeConfig& cfg);

// "host:port"; throws Error(invalid).
std::pair<std::string, int> split_listen(const std::string& listen);

}  // namespace fedhub::service
