#include "fedhub/service/config.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"

#include <cstdlib>

extern char** environ;

namespace fedhub::service {

namespace fs = std::filesystem;

fs::path bundled_data_dir() {
  if (const char* d = std::getenv("FEDHUB_BUNDLED_DATA")) return d;
  return FEDHUB_BUNDLED_DATA;
}

NodeConfig::NodeConfig() {
  const auto data = bundled_data_dir();
  ontology = data / "ontology" / "law_enforcement.ont";
  rules = data / "rules" / "search_warrant_s3e.rules";
  templates = data / "workflow" / "investigation.tpl";
  similarity = data / "linker" / "person.sim";
}

namespace {

std::set<std::string> parse_tokens(const std::string& v, const std::string& key) {
  std::set<std::string> out;
  for (const auto& t : text::split(v, ',')) {
    const auto tok = std::string(text::trim(t));
    if (tok.empty()) continue;
    if (!security::is_valid_token(tok)) {
      throw Error(ErrorCode::invalid, key + ": '" + tok + "' is not a valid token");
    }
    out.insert(tok);
  }
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  const auto l = text::to_lower(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw Error(ErrorCode::invalid, key + ": expected a boolean, got '" + v + "'");
}

fs::path resolve(const fs::path& base, const std::string& v) {
  fs::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

void apply(NodeConfig& cfg, const std::string& key, const std::string& value, const fs::path& base) {
  if (key == "node_id") {
    if (!security::is_valid_token(value)) throw Error(ErrorCode::invalid, "node_id: invalid identifier '" + value + "'");
    cfg.node_id = value;
  } else if (key == "listen") {
    cfg.listen = value;
  } else if (key == "data_dir") {
    cfg.data_dir = value.empty() ? fs::path() : resolve(base, value);
  } else if (key == "ontology") {
    cfg.ontology = resolve(base, value);
  } else if (key == "rules") {
    cfg.rules = resolve(base, value);
  } else if (key == "templates") {
    cfg.templates = resolve(base, value);
  } else if (key == "similarity") {
    cfg.similarity = resolve(base, value);
  } else if (key == "dispatch_timeout_ms") {
    const auto n = text::parse_integer(value);
    if (!n) throw Error(ErrorCode::invalid, key + ": expected an integer, got '" + value + "'");
    cfg.dispatch_timeout = std::chrono::milliseconds(*n);
  } else if (key == "max_in_flight") {
    const auto n = text::parse_integer(value);
    if (!n || *n < 1) throw Error(ErrorCode::invalid, key + ": expected a positive integer, got '" + value + "'");
    cfg.max_in_flight = static_cast<std::size_t>(*n);
  } else if (key == "fsync") {
    cfg.fsync = parse_bool(value, key);
  } else if (key == "policy.cross_team_access") {
    cfg.cross_team_access = parse_bool(value, key);
  } else if (key == "policy.retain_personal_data") {
    cfg.retain_personal_data = parse_bool(value, key);
  } else if (text::starts_with(key, "peer.") && key.size() > 5) {
    cfg.peers[key.substr(5)] = parse_tokens(value, key);
  } else if (text::starts_with(key, "principal.") && key.size() > 10) {
    cfg.principals[key.substr(10)] = parse_tokens(value, key);
  } else {
    throw Error(ErrorCode::invalid, "unknown configuration key '" + key + "'");
  }
}

// FEDHUB_PEER_B -> peer.b, FEDHUB_POLICY_CROSS_TEAM_ACCESS -> policy.cross_team_access
std::string env_key(std::string_view name) {
  auto key = text::to_lower(name.substr(7));
  for (const char* group : {"peer_", "principal_", "policy_"}) {
    if (text::starts_with(key, group)) {
      key[std::string_view(group).size() - 1] = '.';
      break;
    }
  }
  return key;
}

void apply_env(NodeConfig& cfg, const std::map<std::string, std::string>& env) {
  const auto cwd = fs::current_path();
  for (const auto& [name, value] : env) {
    if (!text::starts_with(name, "FEDHUB_") || name.size() <= 7) continue;
    const auto key = env_key(name);
    if (key == "bundled_data" || key == "config") continue;
    apply(cfg, key, value, cwd);
  }
}

}  // namespace

NodeConfig parse_config(std::string_view doc, const fs::path& base,
                        const std::map<std::string, std::string>& env) {
  NodeConfig cfg;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(doc, '\n')) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("expected key=value at line " + std::to_string(line_no), line_no, 1);
    }
    const auto key = std::string(text::trim(line.substr(0, eq)));
    const auto value = std::string(text::trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key at line " + std::to_string(line_no), line_no, 1);
    try {
      apply(cfg, key, value, base);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
  apply_env(cfg, env);
  validate(cfg);
  return cfg;
}

NodeConfig load_config(const fs::path& path, const std::map<std::string, std::string>& env) {
  const auto doc = text::read_file(path.string());
  return parse_config(doc, path.parent_path(), env);
}

NodeConfig config_from_env(const std::map<std::string, std::string>& env) {
  NodeConfig cfg;
  apply_env(cfg, env);
  validate(cfg);
  return cfg;
}

std::map<std::string, std::string> fedhub_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    if (text::starts_with(kv, "FEDHUB_")) out.emplace(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return out;
}

void validate(const NodeConfig& cfg) {
  if (cfg.dispatch_timeout.count() <= 0) throw Error(ErrorCode::invalid, "dispatch_timeout_ms must be positive");
  if (cfg.max_in_flight == 0) throw Error(ErrorCode::invalid, "max_in_flight must be positive");
  split_listen(cfg.listen);
  for (const auto& [name, path] : {std::pair{"ontology", cfg.ontology}, std::pair{"rules", cfg.rules},
                                   std::pair{"templates", cfg.templates},
                                   std::pair{"similarity", cfg.similarity}}) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
      throw Error(ErrorCode::invalid, std::string(name) + " file '" + path.string() + "' does not exist");
    }
  }
  if (!cfg.data_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.data_dir, ec);
    if (ec || !fs::is_directory(cfg.data_dir)) {
      throw Error(ErrorCode::invalid, "data_dir '" + cfg.data_dir.string() + "' cannot be created");
    }
  }
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw Error(ErrorCode::invalid, "listen must be host:port, got '" + listen + "'");
  }
  const auto port = text::parse_integer(std::string_view(listen).substr(colon + 1));
  if (!port || *port < 0 || *port > 65535) {
    throw Error(ErrorCode::invalid, "listen port out of range in '" + listen + "'");
  }
  return {listen.substr(0, colon), static_cast<int>(*port)};
}

}  // namespace fedhub::service
