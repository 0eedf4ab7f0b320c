#pragma once

#include "fedhub/federation/source.h"
#include "fedhub/hubstore/hubstore.h"
#include "fedhub/linker/linker.h"

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fedhub::federation {

// A keyword or structured query, as posted to /query and /peer/query.
struct Query {
  enum class Kind { keyword, structured };
  Kind kind = Kind::keyword;
  std::string keyword;
  hubstore::StructuredQuery structured;
  std::optional<Timestamp> as_of;

  friend bool operator==(const Query&, const Query&) = default;
};

// {"keyword": "..."} or {"concept": C, "where": [{"attribute","op","value"}],
//  "via": {"relation", "concept", "where"}}; either may carry "as_of".
Query query_from_json(const nlohmann::json& j);
nlohmann::ordered_json query_to_json(const Query& q);

// Entity ids answering `q` in `store` under `auth`.
std::vector<std::string> match_entities(const hubstore::HubStore& store, const Query& q,
                                        const security::AuthContext& auth);
// All visible facts of the matching entities (entity order, then fact id).
std::vector<Fact> answer_locally(const hubstore::HubStore& store, const Query& q,
                                 const security::AuthContext& auth);

// --- adapters and registry ----------------------------------------------------

// Source-specific fetch. Implementations return facts in the ontology
// representation; dispatch re-stamps them with the source's identity.
class SourceAdapter {
 public:
  virtual ~SourceAdapter() = default;
  virtual std::vector<Fact> fetch(const Query& q, const security::AuthContext& auth,
                                  std::chrono::milliseconds timeout) = 0;
};

struct AdapterSettings {
  std::string node_id;  // presented to peers in the peer credential header
  const ontology::Ontology* onto = nullptr;
};

std::shared_ptr<SourceAdapter> make_csv_adapter(const ResolvedSource& src, const ontology::Ontology& onto);
std::shared_ptr<SourceAdapter> make_document_adapter(const ResolvedSource& src,
                                                     const ontology::Ontology& onto);
std::shared_ptr<SourceAdapter> make_peer_adapter(const ResolvedSource& src, std::string node_id);

inline constexpr std::string_view kPeerHeader = "X-Fedhub-Peer";
inline constexpr std::string_view kTokensHeader = "X-Fedhub-Tokens";
inline constexpr std::string_view kPrincipalHeader = "X-Fedhub-Principal";

class SourceRegistry {
 public:
  struct Entry {
    ResolvedSource source;
    std::shared_ptr<SourceAdapter> adapter;
  };

  explicit SourceRegistry(AdapterSettings settings);

  // Resolves the descriptor and builds the adapter for its kind. Throws
  // Error(conflict) on a duplicate id.
  void register_source(const SourceDescriptor& d);
  // Registers with a caller-supplied adapter.
  void add(ResolvedSource src, std::shared_ptr<SourceAdapter> adapter);

  std::optional<Entry> find(const std::string& id) const;
  std::vector<Entry> entries() const;  // id order
  std::size_t size() const;

 private:
  AdapterSettings settings_;
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

// --- dispatch -----------------------------------------------------------------

enum class PartialStatus { ok, timeout, error };
const char* to_string(PartialStatus s);

struct PartialResult {
  std::string source;
  PartialStatus status = PartialStatus::ok;
  std::string error;
  std::vector<Fact> facts;               // empty unless ok
  std::optional<Activity> activity;      // the remote-query activity (ok only)
  std::chrono::milliseconds elapsed{0};

  friend bool operator==(const PartialResult&, const PartialResult&) = default;
};

struct DispatchOptions {
  std::chrono::milliseconds timeout{5000};
  std::size_t max_in_flight = 8;
};

bool capable(const SourceDescriptor& d, const Query& q);

// Queries every capable source concurrently and returns one partial per
// capable source, in registry order. Never throws for a source failure.
std::vector<PartialResult> dispatch(const Query& q, const security::AuthContext& auth,
                                    const SourceRegistry& registry, const DispatchOptions& opts,
                                    const Clock& clock = system_clock());

// Stamps fetched facts as coming from `d` through `activity`.
std::vector<Fact> restamp(std::vector<Fact> facts, const SourceDescriptor& d,
                          const std::string& activity);

// --- serving peers --------------------------------------------------------------

// Grants: peer id -> tokens this node allows that peer.
using PeerGrants = std::map<std::string, std::set<std::string>>;

// Local answer for a peer, under presented tokens intersected with the grant.
// Unknown peers receive nothing.
std::vector<Fact> serve_remote(const hubstore::HubStore& store, const Query& q,
                               const std::string& peer_id, const std::set<std::string>& presented,
                               const PeerGrants& grants);

// --- collation ------------------------------------------------------------------

struct SourceStatus {
  std::string source;
  PartialStatus status = PartialStatus::ok;
  std::string error;
  std::size_t facts = 0;

  friend bool operator==(const SourceStatus&, const SourceStatus&) = default;
};

struct ConsolidatedEntity {
  std::string id;  // smallest member id
  std::string concept_name;
  std::vector<std::string> members;  // sorted
  std::vector<Fact> facts;           // sorted by id
  double score = 0.0;

  friend bool operator==(const ConsolidatedEntity&, const ConsolidatedEntity&) = default;
};

struct ConsolidatedResult {
  std::vector<ConsolidatedEntity> entities;  // score desc, id asc
  std::vector<SourceStatus> per_source;      // by source id
  std::vector<linker::LinkProposal> links_applied;  // by (left, right)
  std::vector<Activity> activities;                 // remote-query activities, by id

  friend bool operator==(const ConsolidatedResult&, const ConsolidatedResult&) = default;
};

// Union of ok partials and local facts, redacted under `auth`, linked and
// grouped. The result does not depend on the order of `partials`.
ConsolidatedResult collate(const std::vector<PartialResult>& partials,
                           const std::vector<Fact>& local_facts, const linker::SimilarityConfig& cfg,
                           const security::AuthContext& auth, const ontology::Ontology& onto,
                           const Query& q);

nlohmann::ordered_json consolidated_to_json(const ConsolidatedResult& r);

}  // namespace fedhub::federation
