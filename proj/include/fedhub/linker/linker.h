#pragma once

#include "fedhub/hubstore/hubstore.h"
#include "fedhub/ontology/ontology.h"

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedhub::linker {

using hubstore::EntityView;

// Source id stamped on facts the linker derives (sameAs proposals).
inline constexpr std::string_view kLinkerSource = "linker";
inline constexpr std::string_view kSameAs = "sameAs";

struct SimilarityConfig {
  std::map<std::string, double> weights;  // attribute name -> weight >= 0
  double link_threshold = 0.8;            // in (0, 1]

  // Lines: `weight <attribute> <decimal>` and `threshold <decimal>`.
  // Throws ParseError / Error(invalid) when an invariant fails.
  static SimilarityConfig parse(std::string_view doc);
  static SimilarityConfig load_file(const std::string& path);
  void validate() const;
};

// Character trigrams of the case-folded, whitespace-collapsed string. Strings
// shorter than three characters contribute themselves as a single gram.
std::set<std::string> trigrams(std::string_view s);
// |A ∩ B| / |A ∪ B| over trigram sets; two empty sets score 1.
double trigram_jaccard(std::string_view a, std::string_view b);
// 1 - min(1, |x - y| / max(|x|, |y|, 1)).
double numeric_similarity(double x, double y);

struct AttributeScore {
  std::string attribute;
  double score = 0.0;

  friend bool operator==(const AttributeScore&, const AttributeScore&) = default;
};

struct SimilarityDetail {
  double score = 0.0;
  std::vector<AttributeScore> evidence;  // shared, weighted attributes, by name
};

// Weighted mean over attributes present in both views. Multi-valued attributes
// score the best-matching value pair. No shared weighted attribute gives 0.
SimilarityDetail similarity_detail(const EntityView& a, const EntityView& b,
                                   const SimilarityConfig& cfg, const ontology::Ontology& onto);
double pair_similarity(const EntityView& a, const EntityView& b, const SimilarityConfig& cfg,
                       const ontology::Ontology& onto);

struct RankedCandidate {
  std::string id;
  double score = 0.0;  // similarity x mean confidence
  double similarity = 0.0;
  double mean_confidence = 0.0;
  std::vector<AttributeScore> evidence;
};

// Adjusted score = pair_similarity x mean envelope confidence of the
// candidate's contributing facts (facts of the shared weighted attributes).
// Descending score, ascending id on ties.
std::vector<RankedCandidate> rank_candidates(const EntityView& probe,
                                             std::span<const EntityView> candidates,
                                             const SimilarityConfig& cfg,
                                             const ontology::Ontology& onto);

struct LinkProposal {
  std::string left;  // left < right
  std::string right;
  double score = 0.0;
  std::vector<AttributeScore> evidence;

  friend bool operator==(const LinkProposal&, const LinkProposal&) = default;
};

// Proposals for `entity_id` against every other entity of the same concept,
// computed from facts visible under `auth` only. Does not write.
std::vector<LinkProposal> compute_link_proposals(const std::string& entity_id,
                                                 const hubstore::HubStore& store,
                                                 const SimilarityConfig& cfg,
                                                 const security::AuthContext& auth);

// Pure variant over an explicit population of views (entities of other
// concepts, empty views and the probe itself are skipped).
std::vector<LinkProposal> compute_link_proposals(const EntityView& probe,
                                                 std::span<const EntityView> population,
                                                 const SimilarityConfig& cfg,
                                                 const ontology::Ontology& onto);

// As above, then records each accepted proposal as a generated sameAs fact
// citing a link activity, with confidence = score.
std::vector<LinkProposal> propose_links(const std::string& entity_id, hubstore::HubStore& store,
                                        const SimilarityConfig& cfg,
                                        const security::AuthContext& auth, Timestamp now);

// Builds the sameAs fact (and its link activity) for an accepted proposal.
struct LinkRecord {
  Activity activity;
  Fact fact;
};
LinkRecord make_link_record(const LinkProposal& p, const EntityView& left, const EntityView& right,
                            Timestamp now);

// Curated merge of sameAs-connected entities into a new entity. Every visible
// constituent fact (except sameAs links) is copied under a merge activity;
// conflicting values are all kept. Returns the merged entity id.
std::string merge_entities(const std::vector<std::string>& ids, const std::string& curator,
                           const security::AuthContext& auth, hubstore::HubStore& store,
                           Timestamp now);

// --- stub entity extraction ----------------------------------------------------

struct GazetteerEntry {
  std::string concept_name;
  std::string canonical;
};

class Gazetteer {
 public:
  // Lines: `"<surface form>" <Concept> "<canonical>"`. Concepts are checked
  // against `onto` when given.
  static Gazetteer parse(std::string_view doc, const ontology::Ontology* onto = nullptr);
  static Gazetteer load_file(const std::string& path, const ontology::Ontology* onto = nullptr);

  void add(std::string_view surface, GazetteerEntry entry);
  const GazetteerEntry* find(const std::string& normalized) const;
  std::size_t max_tokens() const { return max_tokens_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, GazetteerEntry> entries_;  // normalized surface -> entry
  std::size_t max_tokens_ = 0;
};

struct Extraction {
  std::size_t begin = 0;  // byte span in the input text
  std::size_t end = 0;
  std::string surface;
  std::string concept_name;
  std::string canonical;

  friend bool operator==(const Extraction&, const Extraction&) = default;
};

// Longest match, left to right, case-insensitive, on whitespace token
// boundaries (surrounding punctuation ignored); spans never overlap.
std::vector<Extraction> extract_entities(std::string_view text, const Gazetteer& gazetteer);

}  // namespace fedhub::linker
