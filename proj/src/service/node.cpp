#include "fedhub/service/node.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/model/codec.h"
#include "fedhub/security/redact.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <httplib.h>

namespace fedhub::service {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using security::AuthContext;

std::string Request::header(std::string_view name) const {
  const auto it = headers.find(text::to_lower(name));
  return it == headers.end() ? std::string() : it->second;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return 400;
    case ErrorCode::invalid: return 422;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::denied: return 403;
    case ErrorCode::corrupt: return 500;
    case ErrorCode::unavailable: return 503;
  }
  return 500;
}

Response error_response(ErrorCode code, const std::string& message) {
  return {http_status(code), ordered_json{{"error", to_string(code)}, {"message", message}}};
}

namespace {

std::set<std::string> parse_token_list(const std::string& header) {
  std::set<std::string> out;
  for (const auto& t : text::split(header, ',')) {
    const auto tok = std::string(text::trim(t));
    if (!tok.empty()) out.insert(tok);
  }
  return out;
}

json parse_body(const Request& req) {
  if (text::trim(req.body).empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("request body is not JSON: ") + e.what());
  }
}

ordered_json facts_json(const std::vector<Fact>& facts) {
  auto arr = ordered_json::array();
  for (const auto& f : facts) arr.push_back(codec::fact_to_json(f));
  return arr;
}

ordered_json view_json(const hubstore::EntityView& v) {
  return ordered_json{{"id", v.id}, {"concept", v.concept_name}, {"facts", facts_json(v.facts)}};
}

std::optional<Timestamp> as_of_param(const Request& req) {
  const auto it = req.query.find("as_of");
  if (it == req.query.end() || it->second.empty()) return std::nullopt;
  return parse_rfc3339_or_throw(it->second);
}

bool flag_param(const Request& req, const std::string& name) {
  const auto it = req.query.find(name);
  return it != req.query.end() && (it->second == "1" || it->second == "true");
}

std::string require_actor(const AuthContext& auth) {
  if (auth.principal.empty()) {
    throw Error(ErrorCode::denied, "this operation needs an authenticated principal");
  }
  return auth.principal;
}

std::vector<std::string> path_segments(const std::string& path) {
  std::vector<std::string> out;
  for (auto& s : text::split(path, '/')) {
    if (!s.empty()) out.push_back(httplib::detail::decode_url(s, false));
  }
  return out;
}

}  // namespace

Node::Node(NodeConfig cfg, Clock clock) : cfg_(std::move(cfg)), clock_(std::move(clock)) {}

Node::~Node() {
  stop();
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

std::unique_ptr<Node> Node::open(NodeConfig cfg, Clock clock) {
  validate(cfg);
  std::unique_ptr<Node> n(new Node(std::move(cfg), std::move(clock)));
  const auto& dir = n->cfg_.data_dir;
  if (!dir.empty()) {
    const auto lock_path = dir / "LOCK";
    n->lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (n->lock_fd_ < 0 || ::flock(n->lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      throw Error(ErrorCode::unavailable, "data directory " + dir.string() + " is in use by another node");
    }
  }
  n->onto_ = std::make_unique<ontology::Ontology>(ontology::Ontology::load_file(n->cfg_.ontology.string()));
  n->sim_ = linker::SimilarityConfig::load_file(n->cfg_.similarity.string());
  auto rules = workflow::RuleSet::load_file(n->cfg_.rules.string());
  auto templates = workflow::TemplateLibrary::load_file(n->cfg_.templates.string(), n->onto_.get());

  if (dir.empty()) {
    n->store_ = std::make_unique<hubstore::HubStore>(*n->onto_);
  } else {
    n->store_ = hubstore::HubStore::open(*n->onto_, dir, n->cfg_.fsync);
  }
  n->pipeline_ = std::make_unique<ingest::Pipeline>(*n->store_, n->sim_, n->clock_,
                                                    dir.empty() ? fs::path() : dir / "runs.log");
  n->registry_ = std::make_unique<federation::SourceRegistry>(
      federation::AdapterSettings{n->cfg_.node_id, n->onto_.get()});
  n->workflow_ = std::make_unique<workflow::Workflow>(*n->store_, std::move(templates), std::move(rules),
                                                      n->clock_, dir, n->cfg_.fsync);
  if (!dir.empty()) {
    std::vector<std::string> lines;
    n->sources_log_ = AppendLog::open(dir / "sources.log", lines, n->cfg_.fsync);
    std::size_t line_no = 0;
    for (const auto& line : lines) {
      ++line_no;
      try {
        n->registry_->register_source(federation::descriptor_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::corrupt, (dir / "sources.log").string() + " line " +
                                            std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  return n;
}

AuthContext Node::authenticate(const Request& req) const {
  const auto principal = req.header(federation::kPrincipalHeader);
  if (principal.empty()) return AuthContext{};
  const auto it = cfg_.principals.find(principal);
  if (it == cfg_.principals.end()) throw Error(ErrorCode::denied, "unknown principal '" + principal + "'");
  AuthContext auth(principal, it->second);
  const auto selected = req.header(federation::kTokensHeader);
  if (req.headers.count(text::to_lower(federation::kTokensHeader))) {
    // A session may narrow its grant but never widen it.
    auth = auth.intersect(parse_token_list(selected));
  }
  return auth;
}

federation::SourceDescriptor Node::add_source(const federation::SourceDescriptor& d, const std::string& actor) {
  std::lock_guard lock(sources_mu_);
  registry_->register_source(d);
  const auto line = federation::descriptor_to_json(d).dump();
  sources_log_.append(line);
  workflow_->audit().append(actor, "source.add", line, d.id, clock_());
  return d;
}

ingest::PipelineRun Node::ingest(const std::string& source_id, const std::string& batch,
                                 const std::string& actor) {
  const auto entry = registry_->find(source_id);
  if (!entry) throw Error(ErrorCode::not_found, "unknown source '" + source_id + "'");
  if (entry->source.desc.kind == federation::SourceKind::peer_hub) {
    throw Error(ErrorCode::invalid, "source '" + source_id + "' is a peer hub; peers are queried, not ingested");
  }
  auto run = pipeline_->run(entry->source, batch, actor);
  const auto args = ordered_json{{"source", source_id}, {"batch", batch}}.dump();
  workflow_->audit().append(actor, "ingest", args, ingest::run_to_json(run).dump(), clock_());
  return run;
}

federation::ConsolidatedResult Node::federated_query(const federation::Query& q, const AuthContext& auth,
                                                     std::optional<std::chrono::milliseconds> timeout) {
  if (q.kind == federation::Query::Kind::structured) store_->check_query(q.structured);
  federation::DispatchOptions opts;
  opts.timeout = timeout.value_or(cfg_.dispatch_timeout);
  opts.max_in_flight = cfg_.max_in_flight;
  const auto partials = federation::dispatch(q, auth, *registry_, opts, clock_);
  const auto local = federation::answer_locally(*store_, q, auth);
  return federation::collate(partials, local, sim_, auth, *onto_, q);
}

Response Node::handle(const Request& req) {
  try {
    return route(req);
  } catch (const Error& e) {
    return error_response(e.code(), e.what());
  } catch (const json::exception& e) {
    return error_response(ErrorCode::parse, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    return {500, ordered_json{{"error", "internal"}, {"message", e.what()}}};
  }
}

Response Node::route(const Request& req) {
  const auto seg = path_segments(req.path);
  const auto& m = req.method;
  const auto n = seg.size();
  auto is = [&](std::initializer_list<const char*> parts) {
    if (parts.size() != n) return false;
    std::size_t i = 0;
    for (const char* p : parts) {
      if (p[0] != '*' && seg[i] != p) return false;
      ++i;
    }
    return true;
  };
  const auto not_found = [&] { return error_response(ErrorCode::not_found, "no route for " + m + " " + req.path); };

  if (m == "GET" && is({"health"})) {
    return {200, ordered_json{{"status", "ok"},
                              {"node_id", cfg_.node_id},
                              {"facts", store_->fact_count()},
                              {"activities", store_->all_activities().size()},
                              {"sources", registry_->size()},
                              {"plans", workflow_->plan_ids().size()},
                              {"audit_records", workflow_->audit().last_seq()},
                              {"policy", {{"cross_team_access", cfg_.cross_team_access},
                                          {"retain_personal_data", cfg_.retain_personal_data}}}}};
  }

  // Peers authenticate with the peer header, not as operators.
  if (m == "POST" && is({"peer", "query"})) {
    const auto q = federation::query_from_json(parse_body(req));
    const auto peer = req.header(federation::kPeerHeader);
    const auto facts = federation::serve_remote(*store_, q, peer,
                                                parse_token_list(req.header(federation::kTokensHeader)),
                                                cfg_.peers);
    return {200, ordered_json{{"facts", facts_json(facts)}}};
  }

  const auto auth = authenticate(req);

  if (m == "GET" && is({"ontology"})) {
    require_actor(auth);
    ordered_json concepts = ordered_json::array();
    for (const auto& [name, c] : onto_->concepts()) {
      concepts.push_back({{"name", name}, {"parent", c.parent ? ordered_json(*c.parent) : ordered_json()},
                          {"description", c.description}});
    }
    ordered_json attrs = ordered_json::array();
    for (const auto& a : onto_->attributes()) {
      attrs.push_back({{"domain", a.domain}, {"name", a.name}, {"datatype", to_string(a.datatype)}});
    }
    ordered_json rels = ordered_json::array();
    for (const auto& [name, r] : onto_->relations()) {
      rels.push_back({{"name", name}, {"domain", r.domain}, {"range", r.range}});
    }
    return {200, ordered_json{{"version", onto_->version()},
                              {"top_level", onto_->top_level_concepts()},
                              {"concepts", concepts},
                              {"attributes", attrs},
                              {"relations", rels}}};
  }

  if (m == "POST" && is({"entities", "merge"})) {
    const auto actor = require_actor(auth);
    const auto body = parse_body(req);
    const auto ids = body.at("ids").get<std::vector<std::string>>();
    const auto merged = linker::merge_entities(ids, actor, auth, *store_, clock_());
    workflow_->audit().append(actor, "entity.merge", body.dump(), merged, clock_());
    return {201, ordered_json{{"merged", merged}}};
  }
  if (m == "GET" && is({"entities", "*"})) {
    const auto view = store_->get_entity(seg[1], auth, as_of_param(req));
    if (view.empty()) return error_response(ErrorCode::not_found, "no visible entity '" + seg[1] + "'");
    return {200, view_json(view)};
  }

  if (m == "POST" && is({"query"})) {
    const auto body = parse_body(req);
    const auto q = federation::query_from_json(body);
    if (body.value("federated", false)) {
      std::optional<std::chrono::milliseconds> timeout;
      if (body.contains("timeout_ms")) timeout = std::chrono::milliseconds(body.at("timeout_ms").get<long>());
      return {200, federation::consolidated_to_json(federated_query(q, auth, timeout))};
    }
    auto entities = ordered_json::array();
    if (q.kind == federation::Query::Kind::keyword) {
      for (const auto& hit : store_->keyword_search(q.keyword, auth)) {
        auto v = view_json(store_->get_entity(hit.entity, auth, q.as_of));
        v["matched_tokens"] = hit.matched_tokens;
        entities.push_back(std::move(v));
      }
    } else {
      store_->check_query(q.structured);
      for (const auto& id : store_->structured_query(q.structured, auth, q.as_of)) {
        entities.push_back(view_json(store_->get_entity(id, auth, q.as_of)));
      }
    }
    return {200, ordered_json{{"entities", entities}}};
  }

  if (m == "GET" && is({"sources"})) {
    auto arr = ordered_json::array();
    for (const auto& e : registry_->entries()) arr.push_back(federation::descriptor_to_json(e.source.desc));
    return {200, ordered_json{{"sources", arr}}};
  }
  if (m == "POST" && is({"sources"})) {
    const auto actor = require_actor(auth);
    const auto d = add_source(federation::descriptor_from_json(parse_body(req)), actor);
    return {201, federation::descriptor_to_json(d)};
  }

  if (m == "POST" && is({"ingest", "*"})) {
    const auto actor = require_actor(auth);
    const auto body = parse_body(req);
    const auto run = ingest(seg[1], body.value("batch", std::string()), actor);
    return {200, ingest::run_to_json(run)};
  }
  if (m == "GET" && is({"runs"})) {
    auto arr = ordered_json::array();
    for (const auto& r : pipeline_->runs()) arr.push_back(ingest::run_to_json(r));
    return {200, ordered_json{{"runs", arr}}};
  }

  if (n == 3 && seg[0] == "facts") {
    const auto f = store_->fact(seg[1]);
    if (!f || !security::authorize(f->envelope.visibility, auth)) {
      return error_response(ErrorCode::not_found, "no visible fact '" + seg[1] + "'");
    }
    if (m == "GET" && seg[2] == "provenance") {
      auto chain = ordered_json::array();
      std::set<std::string> sources;
      for (const auto& a : store_->provenance_chain(f->id)) {
        chain.push_back(codec::activity_to_json(a));
        if (a.kind == ActivityKind::ingest || a.kind == ActivityKind::remote_query) {
          for (const auto& in : a.inputs) {
            if (registry_->find(in)) sources.insert(in);
          }
        }
      }
      return {200, ordered_json{{"fact", codec::fact_to_json(*f)}, {"chain", chain}, {"sources", sources}}};
    }
    if (m == "POST" && seg[2] == "promote") {
      const auto actor = require_actor(auth);
      const auto curated = store_->promote(f->id, actor, clock_());
      workflow_->audit().append(actor, "fact.promote", f->id, curated.id, clock_());
      return {201, codec::fact_to_json(curated)};
    }
    return not_found();
  }

  if (n >= 1 && seg[0] == "plans") {
    if (m == "GET" && n == 1) return {200, ordered_json{{"plans", workflow_->plan_ids()}}};
    if (m == "POST" && n == 1) {
      const auto actor = require_actor(auth);
      const auto body = parse_body(req);
      return {201, workflow::plan_to_json(workflow_->create_plan(body.value("case_ref", std::string()), actor))};
    }
    const auto& plan_id = seg[1];
    if (m == "GET" && n == 2) {
      const auto p = workflow_->plan(plan_id);
      if (!p) return error_response(ErrorCode::not_found, "unknown plan '" + plan_id + "'");
      return {200, workflow::plan_to_json(*p)};
    }
    if (m == "POST" && is({"plans", "*", "goals"})) {
      const auto actor = require_actor(auth);
      const auto body = parse_body(req);
      const auto params = body.value("params", std::map<std::string, std::string>{});
      const bool execute = body.value("execute", true);
      const auto p = workflow_->instantiate_goal(plan_id, body.at("template").get<std::string>(), params, actor,
                                                 body.value("parent", std::string()), execute ? &auth : nullptr);
      return {201, workflow::plan_to_json(p)};
    }
    if (m == "POST" && is({"plans", "*", "elements", "*", "execute"})) {
      const auto actor = require_actor(auth);
      const auto evidence = workflow_->execute_info_requirement(plan_id, seg[3], auth, actor);
      return {200, ordered_json{{"element", seg[3]}, {"evidence", evidence}}};
    }
    if (m == "POST" && is({"plans", "*", "events"})) {
      const auto actor = require_actor(auth);
      auto event = workflow::event_from_json(parse_body(req));
      if (event.actor.empty()) event.actor = actor;
      return {201, workflow::plan_to_json(workflow_->record_event(plan_id, std::move(event), actor))};
    }
    if (is({"plans", "*", "gates", "*"}) && (m == "GET" || m == "POST")) {
      const auto& gate = seg[3];
      if (flag_param(req, "dry_run")) {
        std::vector<workflow::WorkflowEvent> hypothetical;
        const auto body = parse_body(req);
        if (body.contains("events")) {
          for (const auto& e : body.at("events")) hypothetical.push_back(workflow::event_from_json(e));
        }
        auto d = workflow::decision_to_json(workflow_->dry_run_gate(plan_id, gate, std::move(hypothetical)));
        d["dry_run"] = true;
        return {200, d};
      }
      if (m == "POST") return error_response(ErrorCode::invalid, "gates are evaluated with GET, or POST ?dry_run=1");
      return {200, workflow::decision_to_json(workflow_->evaluate_gate(plan_id, gate))};
    }
    return not_found();
  }

  if (m == "GET" && is({"audit", "verify"})) {
    workflow::AuditVerification v;
    if (!cfg_.data_dir.empty()) v = workflow::verify_audit(cfg_.data_dir / "audit.log");
    else v.records = workflow_->audit().last_seq();
    ordered_json j{{"ok", v.ok}, {"records", v.records}};
    if (v.first_corrupt_seq) j["first_corrupt_seq"] = *v.first_corrupt_seq;
    if (!v.message.empty()) j["message"] = v.message;
    return {200, j};
  }

  return not_found();
}

int Node::start() {
  if (server_) throw Error(ErrorCode::conflict, "node is already serving");
  server_ = std::make_unique<httplib::Server>();
  // The library default sets SO_REUSEPORT, which would let a second node share
  // a port that is already taken.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  auto dispatch_http = [this](const httplib::Request& hreq, httplib::Response& hres) {
    Request r;
    r.method = hreq.method;
    r.path = hreq.path;
    for (const auto& [k, v] : hreq.params) r.query.emplace(k, v);
    for (const auto& [k, v] : hreq.headers) r.headers.emplace(text::to_lower(k), v);
    r.body = hreq.body;
    const auto res = handle(r);
    hres.status = res.status;
    hres.set_content(res.body.dump(), "application/json");
  };
  server_->Get(".*", dispatch_http);
  server_->Post(".*", dispatch_http);
  const auto [host, port] = split_listen(cfg_.listen);
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    server_.reset();
    throw Error(ErrorCode::unavailable, "cannot listen on " + cfg_.listen + " (address in use?)");
  }
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void Node::wait() {
  if (server_thread_.joinable()) server_thread_.join();
}

void Node::stop() {
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
}

}  // namespace fedhub::service
