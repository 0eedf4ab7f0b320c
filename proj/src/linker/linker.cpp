#include "fedhub/linker/linker.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"
#include "fedhub/kernels/scoring.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <queue>

namespace fedhub::linker {

using hubstore::HubStore;
using security::AuthContext;

// --- configuration -------------------------------------------------------------

void SimilarityConfig::validate() const {
  if (!(link_threshold > 0.0 && link_threshold <= 1.0)) {
    throw Error(ErrorCode::invalid,
                "link threshold " + text::format_decimal(link_threshold) + " outside (0,1]");
  }
  double sum = 0.0;
  for (const auto& [attr, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::invalid, "weight for '" + attr + "' must be non-negative");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::invalid, "attribute weights must sum to a positive value");
}

SimilarityConfig SimilarityConfig::parse(std::string_view doc) {
  SimilarityConfig cfg;
  cfg.weights.clear();
  std::size_t line_no = 0;
  for (const auto& line : text::split(doc, '\n')) {
    ++line_no;
    const auto toks = text::tokenize_line(line, line_no);
    if (toks.empty()) continue;
    if (toks[0].value == "weight") {
      if (toks.size() != 3) throw ParseError("expected: weight <attribute> <decimal>", line_no, 1);
      const auto w = text::parse_decimal(toks[2].value);
      if (!w) throw ParseError("malformed weight '" + toks[2].value + "'", line_no, toks[2].column);
      cfg.weights[toks[1].value] = *w;
    } else if (toks[0].value == "threshold") {
      if (toks.size() != 2) throw ParseError("expected: threshold <decimal>", line_no, 1);
      const auto t = text::parse_decimal(toks[1].value);
      if (!t) throw ParseError("malformed threshold '" + toks[1].value + "'", line_no, toks[1].column);
      cfg.link_threshold = *t;
    } else {
      throw ParseError("unknown directive '" + toks[0].value + "'", line_no, toks[0].column);
    }
  }
  cfg.validate();
  return cfg;
}

SimilarityConfig SimilarityConfig::load_file(const std::string& path) {
  return parse(text::read_file(path));
}

// --- similarity ----------------------------------------------------------------

std::set<std::string> trigrams(std::string_view s) {
  std::string norm;
  for (const auto& w : text::split_whitespace(text::to_lower(s))) {
    if (!norm.empty()) norm += ' ';
    norm += w;
  }
  std::set<std::string> out;
  if (norm.empty()) return out;
  if (norm.size() < 3) {
    out.insert(norm);
    return out;
  }
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) out.insert(norm.substr(i, 3));
  return out;
}

double trigram_jaccard(std::string_view a, std::string_view b) {
  const auto ga = trigrams(a);
  const auto gb = trigrams(b);
  if (ga.empty() && gb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& g : ga) inter += gb.count(g);
  const std::size_t uni = ga.size() + gb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double numeric_similarity(double x, double y) {
  const double scale = std::max({std::fabs(x), std::fabs(y), 1.0});
  return 1.0 - std::min(1.0, std::fabs(x - y) / scale);
}

namespace {

struct AttributeValues {
  ValueKind datatype;
  std::vector<const Fact*> facts;
};

std::map<std::string, AttributeValues> attribute_values(const EntityView& v,
                                                        const ontology::Ontology& onto) {
  std::map<std::string, AttributeValues> out;
  const auto c = v.concept_name.empty() ? concept_of(v.id).value_or("") : v.concept_name;
  for (const auto& f : v.facts) {
    if (f.object.kind == ValueKind::entity || onto.find_relation(f.predicate)) continue;
    const auto* attr = onto.find_attribute(c, f.predicate);
    if (!attr) continue;
    auto& slot = out.try_emplace(f.predicate, AttributeValues{attr->datatype, {}}).first->second;
    slot.facts.push_back(&f);
  }
  return out;
}

double value_similarity(const Value& x, const Value& y, ValueKind datatype) {
  switch (datatype) {
    case ValueKind::text:
      return trigram_jaccard(x.lexical, y.lexical);
    case ValueKind::integer:
    case ValueKind::decimal: {
      const auto a = text::parse_decimal(x.lexical);
      const auto b = text::parse_decimal(y.lexical);
      if (!a || !b) return 0.0;
      return numeric_similarity(*a, *b);
    }
    default:
      return x.lexical == y.lexical ? 1.0 : 0.0;
  }
}

// Shared weighted attributes of a and b with their best value-pair score.
struct SharedScores {
  SimilarityDetail detail;
  std::vector<std::string> shared;
};

SharedScores shared_scores(const EntityView& a, const EntityView& b, const SimilarityConfig& cfg,
                           const ontology::Ontology& onto) {
  SharedScores out;
  const auto va = attribute_values(a, onto);
  const auto vb = attribute_values(b, onto);
  double num = 0.0;
  double den = 0.0;
  for (const auto& [attr, av] : va) {
    const auto bit = vb.find(attr);
    if (bit == vb.end() || bit->second.datatype != av.datatype) continue;
    const auto wit = cfg.weights.find(attr);
    if (wit == cfg.weights.end() || !(wit->second > 0.0)) continue;
    double best = 0.0;
    for (const auto* fx : av.facts) {
      for (const auto* fy : bit->second.facts) {
        best = std::max(best, value_similarity(fx->object, fy->object, av.datatype));
      }
    }
    num += wit->second * best;
    den += wit->second;
    out.detail.evidence.push_back({attr, best});
    out.shared.push_back(attr);
  }
  out.detail.score = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
  return out;
}

double mean_confidence(const EntityView& v, const std::vector<std::string>& attrs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : v.facts) {
    if (std::binary_search(attrs.begin(), attrs.end(), f.predicate)) {
      sum += f.envelope.confidence;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

SimilarityDetail similarity_detail(const EntityView& a, const EntityView& b,
                                   const SimilarityConfig& cfg, const ontology::Ontology& onto) {
  return shared_scores(a, b, cfg, onto).detail;
}

double pair_similarity(const EntityView& a, const EntityView& b, const SimilarityConfig& cfg,
                       const ontology::Ontology& onto) {
  return shared_scores(a, b, cfg, onto).detail.score;
}

std::vector<RankedCandidate> rank_candidates(const EntityView& probe,
                                             std::span<const EntityView> candidates,
                                             const SimilarityConfig& cfg,
                                             const ontology::Ontology& onto) {
  std::vector<RankedCandidate> out(candidates.size());
  kernels::score_all(candidates.size(), [&](std::size_t i) {
    const auto s = shared_scores(probe, candidates[i], cfg, onto);
    auto& r = out[i];
    r.id = candidates[i].id;
    r.similarity = s.detail.score;
    r.mean_confidence = mean_confidence(candidates[i], s.shared);
    r.score = r.similarity * r.mean_confidence;
    r.evidence = s.detail.evidence;
    return r.score;
  });
  std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

// --- link proposals ------------------------------------------------------------

std::vector<LinkProposal> compute_link_proposals(const EntityView& probe,
                                                 std::span<const EntityView> population,
                                                 const SimilarityConfig& cfg,
                                                 const ontology::Ontology& onto) {
  cfg.validate();
  if (probe.empty()) return {};
  std::vector<EntityView> candidates;
  for (const auto& v : population) {
    if (v.id == probe.id || v.empty() || v.concept_name != probe.concept_name) continue;
    candidates.push_back(v);
  }
  std::vector<LinkProposal> out;
  for (auto& r : rank_candidates(probe, candidates, cfg, onto)) {
    if (r.score < cfg.link_threshold) break;
    LinkProposal p;
    p.left = std::min(probe.id, r.id);
    p.right = std::max(probe.id, r.id);
    p.score = r.score;
    p.evidence = std::move(r.evidence);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<LinkProposal> compute_link_proposals(const std::string& entity_id, const HubStore& store,
                                                 const SimilarityConfig& cfg,
                                                 const AuthContext& auth) {
  const auto probe = store.get_entity(entity_id, auth);
  if (probe.empty()) return {};
  std::vector<EntityView> population;
  for (const auto& id : store.entities_of_concept(probe.concept_name)) {
    if (id != entity_id) population.push_back(store.get_entity(id, auth));
  }
  return compute_link_proposals(probe, population, cfg, store.ontology());
}

LinkRecord make_link_record(const LinkProposal& p, const EntityView& left, const EntityView& right,
                            Timestamp now) {
  std::vector<std::string> attrs;
  for (const auto& e : p.evidence) attrs.push_back(e.attribute);
  std::sort(attrs.begin(), attrs.end());

  std::vector<std::string> inputs;
  std::vector<security::VisibilityExpr> labels;
  Timestamp recorded{};
  bool any = false;
  for (const auto* v : {&left, &right}) {
    for (const auto& f : v->facts) {
      if (!std::binary_search(attrs.begin(), attrs.end(), f.predicate)) continue;
      inputs.push_back(f.id);
      labels.push_back(f.envelope.visibility);
      if (!any || recorded < f.envelope.recorded_at) recorded = f.envelope.recorded_at;
      any = true;
    }
  }
  std::sort(inputs.begin(), inputs.end());

  LinkRecord rec;
  rec.activity.kind = ActivityKind::link;
  rec.activity.id = make_activity_id(ActivityKind::link, p.left + "|" + p.right + "|" +
                                                             text::format_decimal(p.score) + "|" +
                                                             format_rfc3339(now));
  rec.activity.started_at = now;
  rec.activity.ended_at = now;
  rec.activity.agent = std::string(kLinkerSource);
  rec.activity.inputs = inputs;

  rec.fact.subject = p.left;
  rec.fact.predicate = std::string(kSameAs);
  rec.fact.object = entity_value(p.right);
  rec.fact.partition = Partition::generated;
  rec.fact.envelope.source = std::string(kLinkerSource);
  rec.fact.envelope.activity = rec.activity.id;
  rec.fact.envelope.agent = std::string(kLinkerSource);
  rec.fact.envelope.recorded_at = any ? recorded : now;
  // A link derived from labelled facts is at least as restricted as its inputs.
  rec.fact.envelope.visibility = security::conjoin(labels);
  rec.fact.envelope.confidence = std::clamp(p.score, 0.0, 1.0);
  rec.fact = with_id(std::move(rec.fact));
  return rec;
}

std::vector<LinkProposal> propose_links(const std::string& entity_id, HubStore& store,
                                        const SimilarityConfig& cfg, const AuthContext& auth,
                                        Timestamp now) {
  auto proposals = compute_link_proposals(entity_id, store, cfg, auth);
  if (proposals.empty()) return proposals;
  std::vector<Activity> activities;
  std::vector<Fact> facts;
  for (const auto& p : proposals) {
    const auto rec = make_link_record(p, store.get_entity(p.left, auth),
                                      store.get_entity(p.right, auth), now);
    activities.push_back(rec.activity);
    facts.push_back(rec.fact);
  }
  store.put_batch(activities, std::move(facts));
  return proposals;
}

// --- merge ---------------------------------------------------------------------

std::string merge_entities(const std::vector<std::string>& ids_in, const std::string& curator,
                           const AuthContext& auth, HubStore& store, Timestamp now) {
  std::vector<std::string> ids = ids_in;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw Error(ErrorCode::invalid, "merge requires at least two distinct entities");
  if (curator.empty()) throw Error(ErrorCode::invalid, "merge requires a named curator");
  const auto concept_name = concept_of(ids.front());
  for (const auto& id : ids) {
    if (concept_of(id) != concept_name) {
      throw Error(ErrorCode::invalid, "cannot merge entities of different concepts");
    }
  }

  // Connectivity over visible sameAs links, reached from the first id.
  std::map<std::string, std::set<std::string>> adjacency;
  for (const auto& f : store.all_facts()) {
    if (f.predicate != kSameAs || f.object.kind != ValueKind::entity) continue;
    if (!security::authorize(f.envelope.visibility, auth)) continue;
    adjacency[f.subject].insert(f.object.lexical);
    adjacency[f.object.lexical].insert(f.subject);
  }
  std::set<std::string> reached{ids.front()};
  std::queue<std::string> q;
  q.push(ids.front());
  while (!q.empty()) {
    const auto cur = q.front();
    q.pop();
    for (const auto& n : adjacency[cur]) {
      if (reached.insert(n).second) q.push(n);
    }
  }
  for (const auto& id : ids) {
    if (!reached.count(id)) {
      throw Error(ErrorCode::invalid, "entities are not connected by sameAs links: " + id);
    }
  }

  std::string material = "merge";
  for (const auto& id : ids) material += "|" + id;
  const std::string merged_id = make_entity_id(*concept_name, material);

  Activity act;
  act.kind = ActivityKind::merge;
  act.id = make_activity_id(act.kind, merged_id + "|" + curator + "|" + format_rfc3339(now));
  act.started_at = now;
  act.ended_at = now;
  act.agent = curator;

  std::vector<Fact> copies;
  for (const auto& id : ids) {
    for (const auto& f : store.get_entity(id, auth).facts) {
      if (f.predicate == kSameAs) continue;
      act.inputs.push_back(f.id);
      Fact c = f;
      c.subject = merged_id;
      c.envelope.agent = curator;
      copies.push_back(std::move(c));
    }
  }
  if (copies.empty()) throw Error(ErrorCode::invalid, "nothing visible to merge");
  store.put_curated(act, std::move(copies));
  return merged_id;
}

// --- extraction ----------------------------------------------------------------

namespace {

bool is_edge_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) && c != '&' && c != '\'' && c != '-';
}

// Byte range of a whitespace token with surrounding punctuation stripped.
struct Token {
  std::size_t begin;
  std::size_t end;
  std::string norm;
};

std::vector<Token> tokens_of(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t e = i;
    while (b < e && is_edge_punct(s[b])) ++b;
    while (e > b && is_edge_punct(s[e - 1])) --e;
    if (e > b) out.push_back({b, e, text::to_lower(s.substr(b, e - b))});
  }
  return out;
}

std::string normalize_surface(std::string_view s) {
  std::string out;
  for (const auto& t : tokens_of(s)) {
    if (!out.empty()) out += ' ';
    out += t.norm;
  }
  return out;
}

}  // namespace

void Gazetteer::add(std::string_view surface, GazetteerEntry entry) {
  const auto norm = normalize_surface(surface);
  if (norm.empty()) throw Error(ErrorCode::invalid, "gazetteer surface form must be non-empty");
  max_tokens_ = std::max(max_tokens_, tokens_of(norm).size());
  entries_[norm] = std::move(entry);
}

const GazetteerEntry* Gazetteer::find(const std::string& normalized) const {
  const auto it = entries_.find(normalized);
  return it == entries_.end() ? nullptr : &it->second;
}

Gazetteer Gazetteer::parse(std::string_view doc, const ontology::Ontology* onto) {
  Gazetteer g;
  std::size_t line_no = 0;
  for (const auto& line : text::split(doc, '\n')) {
    ++line_no;
    const auto toks = text::tokenize_line(line, line_no);
    if (toks.empty()) continue;
    if (toks.size() != 3 || !toks[0].quoted || toks[1].quoted || !toks[2].quoted) {
      throw ParseError("expected: \"<surface form>\" <Concept> \"<canonical>\"", line_no,
                       toks[0].column);
    }
    if (onto && !onto->has_concept(toks[1].value)) {
      throw ParseError("unknown concept '" + toks[1].value + "'", line_no, toks[1].column);
    }
    if (normalize_surface(toks[0].value).empty()) {
      throw ParseError("empty surface form", line_no, toks[0].column);
    }
    g.add(toks[0].value, {toks[1].value, toks[2].value});
  }
  return g;
}

Gazetteer Gazetteer::load_file(const std::string& path, const ontology::Ontology* onto) {
  return parse(text::read_file(path), onto);
}

std::vector<Extraction> extract_entities(std::string_view text, const Gazetteer& gazetteer) {
  std::vector<Extraction> out;
  const auto toks = tokens_of(text);
  std::size_t i = 0;
  while (i < toks.size()) {
    bool matched = false;
    const std::size_t longest = std::min(gazetteer.max_tokens(), toks.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      std::string key;
      for (std::size_t k = i; k < i + len; ++k) {
        if (k > i) key += ' ';
        key += toks[k].norm;
      }
      if (const auto* e = gazetteer.find(key)) {
        Extraction x;
        x.begin = toks[i].begin;
        x.end = toks[i + len - 1].end;
        x.surface = std::string(text.substr(x.begin, x.end - x.begin));
        x.concept_name = e->concept_name;
        x.canonical = e->canonical;
        out.push_back(std::move(x));
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return out;
}

}  // namespace fedhub::linker
