#pragma once

#include "fedhub/common/append_log.h"
#include "fedhub/model/fact.h"
#include "fedhub/ontology/ontology.h"
#include "fedhub/security/visibility.h"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace fedhub::hubstore {

// All facts about one subject that the caller may see.
struct EntityView {
  std::string id;
  std::string concept_name;
  std::vector<Fact> facts;  // fact-id order

  bool empty() const { return facts.empty(); }
};

enum class CompareOp { eq, ne, lt, le, gt, ge, contains };
const char* to_string(CompareOp op);
std::optional<CompareOp> compare_op_from_string(std::string_view s);

struct AttributePredicate {
  std::string attribute;
  CompareOp op = CompareOp::eq;
  std::string value;

  friend bool operator==(const AttributePredicate&, const AttributePredicate&) = default;
};

// One-hop traversal: subject --relation--> target, where the target entity is
// a `target_concept` satisfying `predicates`.
struct Traversal {
  std::string relation;
  std::string target_concept;
  std::vector<AttributePredicate> predicates;

  friend bool operator==(const Traversal&, const Traversal&) = default;
};

// `<attribute><op><value>` with op one of = != < <= > >= ~ (contains);
// throws Error(invalid).
AttributePredicate parse_attribute_predicate(const std::string& text);

struct StructuredQuery {
  std::string concept_name;
  std::vector<AttributePredicate> predicates;
  std::optional<Traversal> traversal;

  friend bool operator==(const StructuredQuery&, const StructuredQuery&) = default;
};

struct KeywordHit {
  std::string entity;
  std::size_t matched_tokens = 0;

  friend bool operator==(const KeywordHit&, const KeywordHit&) = default;
};

// Lower-cased whitespace tokens of a literal (the keyword index vocabulary).
std::vector<std::string> keyword_tokens(std::string_view text);

// Evaluates `pred` against a literal of the attribute's datatype.
bool predicate_matches(const AttributePredicate& pred, const Value& object, ValueKind datatype);

// The knowledge-hub node's fact store: an append-only fact log with curated and
// generated partitions, PROV-style activities, a content-addressed document
// store and a keyword index. Writers are serialized; readers share a lock and
// never observe a partially applied batch.
class HubStore {
 public:
  explicit HubStore(const ontology::Ontology& onto);
  HubStore(const HubStore&) = delete;
  HubStore& operator=(const HubStore&) = delete;

  // Opens a persistent store rooted at `dir`, replaying facts.log,
  // activities.log and documents.log. A complete log line that fails to parse
  // or verify throws Error(corrupt) naming the file and line.
  static std::unique_ptr<HubStore> open(const ontology::Ontology& onto,
                                        const std::filesystem::path& dir, bool fsync = false);

  const ontology::Ontology& ontology() const { return onto_; }

  // --- writes ---------------------------------------------------------------
  // Records an activity (idempotent on identical content; a different activity
  // under an existing id is a conflict).
  void record_activity(const Activity& a);

  // Validates and stores a generated fact; returns its content-hash id. Putting
  // an identical fact again is a no-op returning the same id.
  std::string put_fact(Fact f);

  // Atomic batch: activities are recorded before facts; either every item is
  // validated and applied, or nothing is.
  std::vector<std::string> put_batch(const std::vector<Activity>& activities, std::vector<Fact> facts);

  // Curated writes, reserved for promote and merge.
  std::vector<std::string> put_curated(const Activity& activity, std::vector<Fact> facts);

  Fact promote(const std::string& fact_id, const std::string& curator, Timestamp now);

  std::string put_document(DocumentBlob blob);

  // --- reads ----------------------------------------------------------------
  std::optional<Fact> fact(const std::string& id) const;
  std::optional<Activity> activity(const std::string& id) const;
  std::size_t fact_count() const;
  std::vector<Fact> all_facts() const;  // sorted by id
  std::vector<Activity> all_activities() const;

  // Unknown and fully redacted entities both yield an empty view.
  EntityView get_entity(const std::string& id, const security::AuthContext& auth,
                        std::optional<Timestamp> as_of = std::nullopt) const;

  std::vector<KeywordHit> keyword_search(std::string_view text,
                                         const security::AuthContext& auth) const;

  // Entity ids (ascending) satisfying the query over visible, valid facts.
  std::vector<std::string> structured_query(const StructuredQuery& q,
                                            const security::AuthContext& auth,
                                            std::optional<Timestamp> as_of = std::nullopt) const;

  // Validates names in `q` against the ontology; throws Error(not_found).
  void check_query(const StructuredQuery& q) const;

  // Activities reachable from the fact's envelope activity through fact inputs,
  // plus plan-step activities that used the fact, most recent first.
  std::vector<Activity> provenance_chain(const std::string& fact_id) const;

  DocumentBlob get_document(const std::string& id, const security::AuthContext& auth) const;

  std::vector<std::string> entity_ids() const;
  std::vector<std::string> entities_of_concept(std::string_view concept_name) const;
  std::set<std::string> all_tokens() const;

  // Every fact record, one per line, sorted by id.
  std::string snapshot() const;
  void write_snapshot(const std::filesystem::path& path) const;

 private:
  void apply_activity_locked(const Activity& a);
  void apply_fact_locked(Fact f);
  void validate_locked(const Fact& f) const;
  std::vector<std::string> write_locked(const std::vector<Activity>& activities,
                                        std::vector<Fact> facts);
  std::vector<Fact> visible_facts_locked(const std::string& subject,
                                         const security::AuthContext& auth,
                                         std::optional<Timestamp> as_of) const;
  bool entity_matches_locked(const std::string& id, const std::string& concept_name,
                             const std::vector<AttributePredicate>& preds,
                             const security::AuthContext& auth,
                             std::optional<Timestamp> as_of) const;

  const ontology::Ontology& onto_;
  mutable std::shared_mutex mu_;

  std::vector<Fact> facts_;  // log order
  std::unordered_map<std::string, std::size_t> fact_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_subject_;
  std::map<std::string, std::set<std::string>> by_concept_;
  std::unordered_map<std::string, std::vector<std::size_t>> keyword_index_;
  std::unordered_map<std::string, Activity> activities_;
  std::vector<std::string> activity_order_;
  std::unordered_map<std::string, std::vector<std::string>> used_by_;  // fact id -> plan-step ids
  std::set<std::string> promoted_;  // generated ids with a curated copy

  struct DocumentMeta {
    std::string media_type;
    MetadataEnvelope envelope;
  };
  std::map<std::string, DocumentMeta> documents_;
  std::map<std::string, std::string> document_bytes_;  // in-memory stores only

  std::filesystem::path dir_;
  AppendLog fact_log_;
  AppendLog activity_log_;
  AppendLog document_log_;
};

}  // namespace fedhub::hubstore
