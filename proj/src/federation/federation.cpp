#include "fedhub/federation/federation.h"

#include "fedhub/common/error.h"
#include "fedhub/ingest/pipeline.h"
#include "fedhub/model/codec.h"
#include "fedhub/security/redact.h"

#include <algorithm>
#include <condition_variable>
#include <httplib.h>
#include <numeric>
#include <random>
#include <semaphore>
#include <thread>

namespace fedhub::federation {

using hubstore::AttributePredicate;
using hubstore::HubStore;
using nlohmann::ordered_json;
using security::AuthContext;

// --- queries --------------------------------------------------------------------

namespace {

std::vector<AttributePredicate> predicates_from_json(const nlohmann::json& j) {
  std::vector<AttributePredicate> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw Error(ErrorCode::parse, "'where' must be an array");
  for (const auto& p : j) {
    if (!p.is_object()) throw Error(ErrorCode::parse, "predicate must be an object");
    AttributePredicate ap;
    ap.attribute = p.value("attribute", "");
    const auto op = p.value("op", "=");
    const auto parsed = hubstore::compare_op_from_string(op);
    if (!parsed) throw Error(ErrorCode::parse, "unknown operator '" + op + "'");
    ap.op = *parsed;
    if (!p.contains("value") || !p["value"].is_string()) {
      throw Error(ErrorCode::parse, "predicate value must be a string");
    }
    ap.value = p["value"].get<std::string>();
    if (ap.attribute.empty()) throw Error(ErrorCode::parse, "predicate lacks an attribute");
    out.push_back(std::move(ap));
  }
  return out;
}

ordered_json predicates_to_json(const std::vector<AttributePredicate>& ps) {
  auto arr = ordered_json::array();
  for (const auto& p : ps) {
    arr.push_back({{"attribute", p.attribute}, {"op", hubstore::to_string(p.op)}, {"value", p.value}});
  }
  return arr;
}

}  // namespace

Query query_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::parse, "query must be a JSON object");
  Query q;
  try {
    if (j.contains("keyword")) {
      q.kind = Query::Kind::keyword;
      q.keyword = j.at("keyword").get<std::string>();
      if (hubstore::keyword_tokens(q.keyword).empty()) {
        throw Error(ErrorCode::invalid, "keyword query has no tokens");
      }
    } else if (j.contains("concept")) {
      q.kind = Query::Kind::structured;
      q.structured.concept_name = j.at("concept").get<std::string>();
      q.structured.predicates = predicates_from_json(j.value("where", nlohmann::json()));
      if (j.contains("via") && !j["via"].is_null()) {
        const auto& v = j["via"];
        hubstore::Traversal t;
        t.relation = v.at("relation").get<std::string>();
        t.target_concept = v.at("concept").get<std::string>();
        t.predicates = predicates_from_json(v.value("where", nlohmann::json()));
        q.structured.traversal = std::move(t);
      }
    } else {
      throw Error(ErrorCode::parse, "query needs 'keyword' or 'concept'");
    }
    if (j.contains("as_of") && !j["as_of"].is_null()) {
      q.as_of = parse_rfc3339_or_throw(j["as_of"].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("malformed query: ") + e.what());
  }
  return q;
}

ordered_json query_to_json(const Query& q) {
  ordered_json j;
  if (q.kind == Query::Kind::keyword) {
    j["keyword"] = q.keyword;
  } else {
    j["concept"] = q.structured.concept_name;
    j["where"] = predicates_to_json(q.structured.predicates);
    if (q.structured.traversal) {
      const auto& t = *q.structured.traversal;
      j["via"] = {{"relation", t.relation},
                  {"concept", t.target_concept},
                  {"where", predicates_to_json(t.predicates)}};
    }
  }
  if (q.as_of) j["as_of"] = format_rfc3339(*q.as_of);
  return j;
}

std::vector<std::string> match_entities(const HubStore& store, const Query& q,
                                        const AuthContext& auth) {
  std::vector<std::string> ids;
  if (q.kind == Query::Kind::keyword) {
    for (const auto& h : store.keyword_search(q.keyword, auth)) ids.push_back(h.entity);
  } else {
    ids = store.structured_query(q.structured, auth, q.as_of);
  }
  return ids;
}

std::vector<Fact> answer_locally(const HubStore& store, const Query& q, const AuthContext& auth) {
  std::vector<Fact> out;
  for (const auto& id : match_entities(store, q, auth)) {
    auto v = store.get_entity(id, auth, q.as_of);
    for (auto& f : v.facts) out.push_back(std::move(f));
  }
  return out;
}

// --- adapters -------------------------------------------------------------------

namespace {

// File-backed sources are re-read on every query into a transient store.
class FileAdapter : public SourceAdapter {
 public:
  FileAdapter(ResolvedSource src, const ontology::Ontology& onto)
      : src_(std::move(src)), onto_(onto) {}

  std::vector<Fact> fetch(const Query& q, const AuthContext& auth,
                          std::chrono::milliseconds) override {
    HubStore scratch(onto_);
    linker::SimilarityConfig cfg;
    cfg.weights = {{"label", 1.0}};
    ingest::Pipeline pipeline(scratch, cfg, system_clock());
    pipeline.set_linking(false);
    pipeline.run(src_, "", "federation");
    return answer_locally(scratch, q, auth);
  }

 private:
  ResolvedSource src_;
  const ontology::Ontology& onto_;
};

class PeerAdapter : public SourceAdapter {
 public:
  PeerAdapter(ResolvedSource src, std::string node_id)
      : src_(std::move(src)), node_id_(std::move(node_id)) {}

  std::vector<Fact> fetch(const Query& q, const AuthContext& auth,
                          std::chrono::milliseconds timeout) override {
    httplib::Client client(src_.desc.endpoint);
    const auto us = std::max<std::int64_t>(timeout.count(), 1) * 1000;
    client.set_connection_timeout(us / 1000000, us % 1000000);
    client.set_read_timeout(us / 1000000, us % 1000000);
    client.set_write_timeout(us / 1000000, us % 1000000);
    std::string tokens;
    for (const auto& t : auth.tokens) {
      if (!tokens.empty()) tokens += ',';
      tokens += t;
    }
    httplib::Headers headers{{std::string(kPeerHeader), node_id_},
                             {std::string(kTokensHeader), tokens}};
    const auto res = client.Post("/peer/query", headers, query_to_json(q).dump(), "application/json");
    if (!res) {
      throw Error(ErrorCode::unavailable,
                  "peer " + src_.desc.endpoint + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorCode::unavailable, "peer returned status " + std::to_string(res->status));
    }
    std::vector<Fact> out;
    try {
      const auto body = ordered_json::parse(res->body);
      for (const auto& f : body.at("facts")) out.push_back(codec::fact_from_json(f));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::corrupt, std::string("malformed peer reply: ") + e.what());
    }
    return out;
  }

 private:
  ResolvedSource src_;
  std::string node_id_;
};

std::string nonce() {
  static std::mt19937_64 rng{std::random_device{}()};
  static std::mutex mu;
  std::lock_guard lock(mu);
  return std::to_string(rng());
}

}  // namespace

std::shared_ptr<SourceAdapter> make_csv_adapter(const ResolvedSource& src,
                                                const ontology::Ontology& onto) {
  return std::make_shared<FileAdapter>(src, onto);
}

std::shared_ptr<SourceAdapter> make_document_adapter(const ResolvedSource& src,
                                                     const ontology::Ontology& onto) {
  return std::make_shared<FileAdapter>(src, onto);
}

std::shared_ptr<SourceAdapter> make_peer_adapter(const ResolvedSource& src, std::string node_id) {
  return std::make_shared<PeerAdapter>(src, std::move(node_id));
}

// --- registry -------------------------------------------------------------------

SourceRegistry::SourceRegistry(AdapterSettings settings) : settings_(std::move(settings)) {}

void SourceRegistry::register_source(const SourceDescriptor& d) {
  if (find(d.id)) throw Error(ErrorCode::conflict, "source '" + d.id + "' already registered");
  if (!settings_.onto) throw Error(ErrorCode::invalid, "registry has no ontology");
  auto resolved = resolve_source(d, *settings_.onto);
  std::shared_ptr<SourceAdapter> adapter;
  switch (d.kind) {
    case SourceKind::csv_file: adapter = make_csv_adapter(resolved, *settings_.onto); break;
    case SourceKind::directory_of_documents:
      adapter = make_document_adapter(resolved, *settings_.onto);
      break;
    case SourceKind::peer_hub: adapter = make_peer_adapter(resolved, settings_.node_id); break;
  }
  add(std::move(resolved), std::move(adapter));
}

void SourceRegistry::add(ResolvedSource src, std::shared_ptr<SourceAdapter> adapter) {
  if (!adapter) throw Error(ErrorCode::invalid, "source '" + src.desc.id + "' has no adapter");
  std::lock_guard lock(mu_);
  const auto id = src.desc.id;
  if (!entries_.emplace(id, Entry{std::move(src), std::move(adapter)}).second) {
    throw Error(ErrorCode::conflict, "source '" + id + "' already registered");
  }
}

std::optional<SourceRegistry::Entry> SourceRegistry::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::vector<SourceRegistry::Entry> SourceRegistry::entries() const {
  std::lock_guard lock(mu_);
  std::vector<Entry> out;
  for (const auto& [id, e] : entries_) out.push_back(e);
  return out;
}

std::size_t SourceRegistry::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// --- dispatch -------------------------------------------------------------------

const char* to_string(PartialStatus s) {
  switch (s) {
    case PartialStatus::ok: return "ok";
    case PartialStatus::timeout: return "timeout";
    case PartialStatus::error: return "error";
  }
  return "error";
}

bool capable(const SourceDescriptor& d, const Query& q) {
  const auto need = q.kind == Query::Kind::keyword ? Capability::keyword : Capability::structured;
  return d.capabilities.count(need) > 0;
}

std::vector<Fact> restamp(std::vector<Fact> facts, const SourceDescriptor& d,
                          const std::string& activity) {
  for (auto& f : facts) {
    const auto original = f.id.empty() ? compute_fact_id(f) : f.id;
    f.envelope.source = d.id;
    f.envelope.activity = activity;
    f.envelope.visibility = security::conjoin({f.envelope.visibility, d.default_visibility});
    f.envelope.external_refs.push_back({d.id, original});
    f = with_id(std::move(f));
  }
  return facts;
}

namespace {

struct DispatchState {
  explicit DispatchState(std::size_t n, std::size_t permits)
      : results(n), slots(static_cast<std::ptrdiff_t>(permits)) {}
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::optional<PartialResult>> results;
  std::size_t done = 0;
  std::counting_semaphore<> slots;
};

}  // namespace

std::vector<PartialResult> dispatch(const Query& q, const AuthContext& auth,
                                    const SourceRegistry& registry, const DispatchOptions& opts,
                                    const Clock& clock) {
  std::vector<SourceRegistry::Entry> targets;
  for (auto& e : registry.entries()) {
    if (capable(e.source.desc, q)) targets.push_back(std::move(e));
  }
  const auto n = targets.size();
  auto state = std::make_shared<DispatchState>(n, std::max<std::size_t>(opts.max_in_flight, 1));
  const auto begin = std::chrono::steady_clock::now();
  const auto deadline = begin + opts.timeout;
  const auto tag = nonce();

  for (std::size_t i = 0; i < n; ++i) {
    // Workers are detached so that a hung source cannot hold up the caller;
    // whatever they produce after the deadline is discarded.
    std::thread([state, entry = targets[i], q, auth, deadline, begin, i, clock, tag]() {
      if (!state->slots.try_acquire_until(deadline)) return;
      PartialResult r;
      r.source = entry.source.desc.id;
      const auto started = clock();
      try {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        auto facts = entry.adapter->fetch(q, auth, left);
        Activity act;
        act.kind = ActivityKind::remote_query;
        act.id = make_activity_id(act.kind, r.source + "|" + tag);
        act.started_at = started;
        act.ended_at = std::max(started, clock());
        act.agent = auth.principal;
        act.inputs = {r.source};
        r.facts = restamp(std::move(facts), entry.source.desc, act.id);
        std::sort(r.facts.begin(), r.facts.end(),
                  [](const Fact& a, const Fact& b) { return a.id < b.id; });
        r.activity = std::move(act);
        r.status = PartialStatus::ok;
      } catch (const std::exception& e) {
        r.status = PartialStatus::error;
        r.error = e.what();
        r.facts.clear();
      } catch (...) {
        r.status = PartialStatus::error;
        r.error = "unknown failure";
        r.facts.clear();
      }
      state->slots.release();
      r.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - begin);
      std::lock_guard lock(state->mu);
      state->results[i] = std::move(r);
      ++state->done;
      state->cv.notify_all();
    }).detach();
  }

  std::unique_lock lock(state->mu);
  state->cv.wait_until(lock, deadline, [&] { return state->done == n; });
  std::vector<PartialResult> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& slot = state->results[i];
    // A result that landed after the deadline is still a timeout.
    if (slot && std::chrono::steady_clock::time_point(begin + slot->elapsed) <= deadline) {
      out.push_back(*slot);
    } else {
      PartialResult r;
      r.source = targets[i].source.desc.id;
      r.status = PartialStatus::timeout;
      r.error = "no reply within " + std::to_string(opts.timeout.count()) + " ms";
      r.elapsed = opts.timeout;
      out.push_back(std::move(r));
    }
  }
  return out;
}

// --- serving peers --------------------------------------------------------------

std::vector<Fact> serve_remote(const HubStore& store, const Query& q, const std::string& peer_id,
                               const std::set<std::string>& presented, const PeerGrants& grants) {
  const auto grant = grants.find(peer_id);
  if (grant == grants.end()) return {};
  std::set<std::string> valid;
  for (const auto& t : presented) {
    if (security::is_valid_token(t)) valid.insert(t);
  }
  const AuthContext effective = AuthContext(peer_id, valid).intersect(grant->second);
  // Only locally held facts leave the node: no onward dispatch to other peers.
  auto facts = answer_locally(store, q, effective);
  return security::redact_facts(facts, effective);
}

// --- collation ------------------------------------------------------------------

namespace {

struct UnionFind {
  std::map<std::string, std::string> parent;

  std::string find(const std::string& x) {
    auto it = parent.find(x);
    if (it == parent.end()) {
      parent[x] = x;
      return x;
    }
    if (it->second == x) return x;
    const auto root = find(it->second);
    parent[x] = root;
    return root;
  }
  void unite(const std::string& a, const std::string& b) {
    const auto ra = find(a);
    const auto rb = find(b);
    if (ra == rb) return;
    // The smaller id becomes the representative.
    if (ra < rb) parent[rb] = ra; else parent[ra] = rb;
  }
};

double mean_confidence(const std::vector<Fact>& facts) {
  if (facts.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : facts) s += f.envelope.confidence;
  return s / static_cast<double>(facts.size());
}

}  // namespace

ConsolidatedResult collate(const std::vector<PartialResult>& partials,
                           const std::vector<Fact>& local_facts, const linker::SimilarityConfig& cfg,
                           const AuthContext& auth, const ontology::Ontology& onto, const Query& q) {
  ConsolidatedResult out;

  // Union with a deterministic winner for any id that appears twice.
  std::map<std::string, Fact> by_id;
  std::map<std::string, std::string> line_of;
  auto take = [&](const Fact& f0) {
    Fact f = f0.id.empty() ? with_id(f0) : f0;
    auto line = codec::fact_to_line(f);
    const auto it = line_of.find(f.id);
    if (it != line_of.end() && it->second <= line) return;
    line_of[f.id] = std::move(line);
    by_id[f.id] = std::move(f);
  };
  for (const auto& f : local_facts) take(f);
  for (const auto& p : partials) {
    out.per_source.push_back({p.source, p.status, p.error, p.status == PartialStatus::ok ? p.facts.size() : 0});
    if (p.status != PartialStatus::ok) continue;
    for (const auto& f : p.facts) take(f);
    if (p.activity) out.activities.push_back(*p.activity);
  }
  std::sort(out.per_source.begin(), out.per_source.end(),
            [](const SourceStatus& a, const SourceStatus& b) { return a.source < b.source; });
  std::sort(out.activities.begin(), out.activities.end(),
            [](const Activity& a, const Activity& b) { return a.id < b.id; });

  std::vector<Fact> all;
  all.reserve(by_id.size());
  for (auto& [id, f] : by_id) all.push_back(std::move(f));
  const auto visible = security::redact_facts(all, auth);

  // Entity views over the union.
  std::map<std::string, hubstore::EntityView> views;
  for (const auto& f : visible) {
    auto& v = views[f.subject];
    if (v.id.empty()) {
      v.id = f.subject;
      v.concept_name = concept_of(f.subject).value_or("");
    }
    v.facts.push_back(f);
  }
  std::vector<hubstore::EntityView> population;
  for (const auto& [id, v] : views) population.push_back(v);

  std::map<std::pair<std::string, std::string>, linker::LinkProposal> links;
  for (const auto& v : population) {
    for (auto& p : linker::compute_link_proposals(v, population, cfg, onto)) {
      const auto key = std::make_pair(p.left, p.right);
      const auto it = links.find(key);
      if (it == links.end() || it->second.score < p.score) links[key] = std::move(p);
    }
  }

  UnionFind uf;
  for (const auto& v : population) uf.find(v.id);
  for (const auto& [key, p] : links) uf.unite(key.first, key.second);
  for (const auto& f : visible) {
    if (f.predicate == linker::kSameAs && f.object.kind == ValueKind::entity &&
        views.count(f.object.lexical)) {
      uf.unite(f.subject, f.object.lexical);
    }
  }
  for (const auto& [key, p] : links) out.links_applied.push_back(p);

  std::map<std::string, ConsolidatedEntity> groups;
  for (const auto& v : population) {
    auto& g = groups[uf.find(v.id)];
    g.members.push_back(v.id);
    for (const auto& f : v.facts) g.facts.push_back(f);
  }

  // Ranking: structured equality predicates act as a probe entity scored with
  // rank_candidates; keyword queries score by the share of query tokens found.
  hubstore::EntityView probe;
  linker::SimilarityConfig probe_cfg;
  if (q.kind == Query::Kind::structured) {
    probe.id = "probe";
    probe.concept_name = q.structured.concept_name;
    for (const auto& p : q.structured.predicates) {
      if (p.op != hubstore::CompareOp::eq) continue;
      const auto* attr = onto.find_attribute(q.structured.concept_name, p.attribute);
      if (!attr) continue;
      const auto value = make_value(attr->datatype, p.value);
      if (!value) continue;
      Fact f;
      f.subject = probe.id;
      f.predicate = p.attribute;
      f.object = *value;
      probe.facts.push_back(std::move(f));
      probe_cfg.weights[p.attribute] = 1.0;
    }
  }
  std::set<std::string> query_tokens;
  if (q.kind == Query::Kind::keyword) {
    for (auto& t : hubstore::keyword_tokens(q.keyword)) query_tokens.insert(std::move(t));
  }

  std::vector<hubstore::EntityView> group_views;
  for (auto& [root, g] : groups) {
    g.id = root;
    g.concept_name = concept_of(root).value_or("");
    std::sort(g.members.begin(), g.members.end());
    std::sort(g.facts.begin(), g.facts.end(), [](const Fact& a, const Fact& b) { return a.id < b.id; });
    if (!probe.empty()) {
      hubstore::EntityView gv{g.id, g.concept_name, g.facts};
      group_views.push_back(std::move(gv));
    } else if (!query_tokens.empty()) {
      std::set<std::string> hit;
      for (const auto& f : g.facts) {
        if (f.object.kind == ValueKind::entity) continue;
        for (const auto& t : hubstore::keyword_tokens(f.object.lexical)) {
          if (query_tokens.count(t)) hit.insert(t);
        }
      }
      g.score = static_cast<double>(hit.size()) / static_cast<double>(query_tokens.size()) *
                mean_confidence(g.facts);
    } else {
      g.score = mean_confidence(g.facts);
    }
  }
  if (!probe.empty()) {
    for (const auto& r : linker::rank_candidates(probe, group_views, probe_cfg, onto)) {
      groups[r.id].score = r.score;
    }
  }

  for (auto& [root, g] : groups) out.entities.push_back(std::move(g));
  std::sort(out.entities.begin(), out.entities.end(),
            [](const ConsolidatedEntity& a, const ConsolidatedEntity& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return out;
}

ordered_json consolidated_to_json(const ConsolidatedResult& r) {
  ordered_json j;
  auto ents = ordered_json::array();
  for (const auto& e : r.entities) {
    ordered_json je;
    je["id"] = e.id;
    je["concept"] = e.concept_name;
    je["score"] = e.score;
    je["members"] = e.members;
    auto facts = ordered_json::array();
    for (const auto& f : e.facts) facts.push_back(codec::fact_to_json(f));
    je["facts"] = facts;
    ents.push_back(std::move(je));
  }
  j["entities"] = ents;
  auto ps = ordered_json::array();
  for (const auto& s : r.per_source) {
    ordered_json js{{"source", s.source}, {"status", to_string(s.status)}, {"facts", s.facts}};
    if (!s.error.empty()) js["error"] = s.error;
    ps.push_back(std::move(js));
  }
  j["per_source"] = ps;
  auto links = ordered_json::array();
  for (const auto& l : r.links_applied) {
    auto ev = ordered_json::array();
    for (const auto& e : l.evidence) ev.push_back({{"attribute", e.attribute}, {"score", e.score}});
    links.push_back({{"left", l.left}, {"right", l.right}, {"score", l.score}, {"evidence", ev}});
  }
  j["links_applied"] = links;
  auto acts = ordered_json::array();
  for (const auto& a : r.activities) acts.push_back(codec::activity_to_json(a));
  j["activities"] = acts;
  return j;
}

}  // namespace fedhub::federation
