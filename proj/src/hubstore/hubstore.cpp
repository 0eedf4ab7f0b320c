#include "fedhub/hubstore/hubstore.h"

#include "fedhub/common/error.h"
#include "fedhub/common/hash.h"
#include "fedhub/common/text.h"
#include "fedhub/model/codec.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <unordered_set>

namespace fedhub::hubstore {

using security::AuthContext;

const char* to_string(CompareOp op) {
  switch (op) {
    case CompareOp::eq:
      return "=";
    case CompareOp::ne:
      return "!=";
    case CompareOp::lt:
      return "<";
    case CompareOp::le:
      return "<=";
    case CompareOp::gt:
      return ">";
    case CompareOp::ge:
      return ">=";
    case CompareOp::contains:
      return "~";
  }
  return "=";
}

std::optional<CompareOp> compare_op_from_string(std::string_view s) {
  for (auto op : {CompareOp::eq, CompareOp::ne, CompareOp::lt, CompareOp::le, CompareOp::gt,
                  CompareOp::ge, CompareOp::contains}) {
    if (s == to_string(op)) return op;
  }
  return std::nullopt;
}

AttributePredicate parse_attribute_predicate(const std::string& tok) {
  static const char* ops[] = {"<=", ">=", "!=", "=", "<", ">", "~"};
  std::size_t best = std::string::npos;
  std::string op;
  for (const char* o : ops) {
    const auto at = tok.find(o);
    if (at != std::string::npos && (at < best || (at == best && std::string(o).size() > op.size()))) {
      best = at;
      op = o;
    }
  }
  if (best == std::string::npos || best == 0) {
    throw Error(ErrorCode::invalid, "expected <attribute><op><value>, got '" + tok + "'");
  }
  AttributePredicate p;
  p.attribute = tok.substr(0, best);
  p.op = *compare_op_from_string(op);
  p.value = tok.substr(best + op.size());
  if (p.value.empty()) throw Error(ErrorCode::invalid, "empty value in '" + tok + "'");
  return p;
}

std::vector<std::string> keyword_tokens(std::string_view text) {
  return text::split_whitespace(text::to_lower(text));
}

bool predicate_matches(const AttributePredicate& pred, const Value& object, ValueKind datatype) {
  if (object.kind != datatype) return false;
  if (pred.op == CompareOp::contains) {
    return text::to_lower(object.lexical).find(text::to_lower(pred.value)) != std::string::npos;
  }
  const auto wanted = make_value(datatype, pred.value);
  if (!wanted) return false;
  int cmp = 0;
  if (datatype == ValueKind::integer || datatype == ValueKind::decimal) {
    const double a = *text::parse_decimal(object.lexical);
    const double b = *text::parse_decimal(wanted->lexical);
    cmp = a < b ? -1 : (a > b ? 1 : 0);
  } else {
    // Canonical date/timestamp forms are zero padded, so lexical order is chronological.
    const int c = object.lexical.compare(wanted->lexical);
    cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  switch (pred.op) {
    case CompareOp::eq:
      return cmp == 0;
    case CompareOp::ne:
      return cmp != 0;
    case CompareOp::lt:
      return cmp < 0;
    case CompareOp::le:
      return cmp <= 0;
    case CompareOp::gt:
      return cmp > 0;
    case CompareOp::ge:
      return cmp >= 0;
    case CompareOp::contains:
      break;
  }
  return false;
}

namespace {

std::string document_line(const std::string& id, const std::string& media_type,
                          const MetadataEnvelope& env) {
  codec::ordered_json j;
  j["id"] = id;
  j["media_type"] = media_type;
  j["envelope"] = codec::envelope_to_json(env);
  return j.dump();
}

void check_envelope(const MetadataEnvelope& e) {
  if (e.source.empty()) throw Error(ErrorCode::invalid, "malformed envelope: empty source");
  if (e.activity.empty()) throw Error(ErrorCode::invalid, "malformed envelope: empty activity");
  if (!std::isfinite(e.confidence) || e.confidence < 0.0 || e.confidence > 1.0) {
    throw Error(ErrorCode::invalid,
                "malformed envelope: confidence " + text::format_decimal(e.confidence) +
                    " outside [0,1]");
  }
  if (e.valid_from && e.valid_to && !(*e.valid_from < *e.valid_to)) {
    throw Error(ErrorCode::invalid, "malformed envelope: valid_from must precede valid_to");
  }
}

}  // namespace

HubStore::HubStore(const ontology::Ontology& onto) : onto_(onto) {}

std::unique_ptr<HubStore> HubStore::open(const ontology::Ontology& onto,
                                         const std::filesystem::path& dir, bool fsync) {
  auto store = std::make_unique<HubStore>(onto);
  store->dir_ = dir;
  std::filesystem::create_directories(dir / "blobs");

  std::vector<std::string> lines;
  store->activity_log_ = AppendLog::open(dir / "activities.log", lines, fsync);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      store->apply_activity_locked(codec::activity_from_json(codec::ordered_json::parse(lines[i])));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::corrupt,
                  "activities.log line " + std::to_string(i + 1) + ": " + e.what());
    }
  }

  lines.clear();
  store->fact_log_ = AppendLog::open(dir / "facts.log", lines, fsync);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      Fact f = codec::fact_from_line(lines[i]);
      if (f.id != compute_fact_id(f)) throw Error(ErrorCode::corrupt, "fact id does not match content");
      store->validate_locked(f);
      if (store->fact_index_.count(f.id)) throw Error(ErrorCode::corrupt, "duplicate fact id");
      store->apply_fact_locked(std::move(f));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::corrupt, "facts.log line " + std::to_string(i + 1) + ": " + e.what());
    }
  }

  lines.clear();
  store->document_log_ = AppendLog::open(dir / "documents.log", lines, fsync);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const auto j = codec::ordered_json::parse(lines[i]);
      const auto id = j.at("id").get<std::string>();
      const auto blob = dir / "blobs" / id;
      if (!std::filesystem::exists(blob) || sha256_hex(text::read_file(blob.string())) != id) {
        throw Error(ErrorCode::corrupt, "blob missing or altered");
      }
      store->documents_[id] = DocumentMeta{j.at("media_type").get<std::string>(),
                                           codec::envelope_from_json(j.at("envelope"))};
    } catch (const std::exception& e) {
      throw Error(ErrorCode::corrupt,
                  "documents.log line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return store;
}

// --- writes -------------------------------------------------------------------

void HubStore::apply_activity_locked(const Activity& a) {
  if (a.id.empty()) throw Error(ErrorCode::invalid, "activity without id");
  if (a.ended_at < a.started_at) {
    throw Error(ErrorCode::invalid, "activity '" + a.id + "' ends before it starts");
  }
  if (activities_.count(a.id)) return;
  activities_.emplace(a.id, a);
  activity_order_.push_back(a.id);
  if (a.kind == ActivityKind::plan_step) {
    for (const auto& in : a.inputs) used_by_[in].push_back(a.id);
  }
}

void HubStore::apply_fact_locked(Fact f) {
  const std::size_t idx = facts_.size();
  fact_index_.emplace(f.id, idx);
  by_subject_[f.subject].push_back(idx);
  if (const auto c = concept_of(f.subject)) by_concept_[*c].insert(f.subject);
  if (f.object.kind != ValueKind::entity) {
    auto toks = keyword_tokens(f.object.lexical);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (const auto& t : toks) keyword_index_[t].push_back(idx);
  }
  if (f.partition == Partition::curated) {
    if (const auto it = activities_.find(f.envelope.activity);
        it != activities_.end() && it->second.kind == ActivityKind::promote) {
      for (const auto& in : it->second.inputs) promoted_.insert(in);
    }
  }
  facts_.push_back(std::move(f));
}

void HubStore::validate_locked(const Fact& f) const {
  check_envelope(f.envelope);
  if (!activities_.count(f.envelope.activity)) {
    throw Error(ErrorCode::invalid,
                "malformed envelope: activity '" + f.envelope.activity + "' is not recorded");
  }
  const auto violations = onto_.validate_fact(f);
  if (!violations.empty()) {
    std::string msg = "ontology violation:";
    for (const auto& v : violations) msg += " [" + v.code + "] " + v.message;
    throw Error(ErrorCode::invalid, msg);
  }
}

std::vector<std::string> HubStore::write_locked(const std::vector<Activity>& activities,
                                                std::vector<Fact> facts) {
  std::vector<Activity> new_activities;
  for (const auto& a : activities) {
    if (a.ended_at < a.started_at) {
      throw Error(ErrorCode::invalid, "activity '" + a.id + "' ends before it starts");
    }
    if (const auto it = activities_.find(a.id); it != activities_.end()) {
      if (!(it->second == a)) throw Error(ErrorCode::conflict, "activity id '" + a.id + "' reused");
      continue;
    }
    new_activities.push_back(a);
  }

  // Validate with the batch's activities visible, then apply nothing on failure.
  for (const auto& a : new_activities) activities_.emplace(a.id, a);
  std::vector<std::string> ids;
  std::vector<Fact> fresh;
  std::unordered_set<std::string> batch_ids;
  try {
    for (auto& f : facts) {
      f.id = compute_fact_id(f);
      f.envelope.visibility = f.envelope.visibility.canonical();
      validate_locked(f);
      ids.push_back(f.id);
      if (fact_index_.count(f.id) || !batch_ids.insert(f.id).second) continue;
      fresh.push_back(f);
    }
  } catch (...) {
    for (const auto& a : new_activities) activities_.erase(a.id);
    throw;
  }
  for (const auto& a : new_activities) activities_.erase(a.id);

  std::vector<std::string> activity_lines;
  for (const auto& a : new_activities) activity_lines.push_back(codec::activity_to_json(a).dump());
  std::vector<std::string> fact_lines;
  for (const auto& f : fresh) fact_lines.push_back(codec::fact_to_line(f));
  // Activities reach disk before the facts that cite them.
  activity_log_.append(activity_lines);
  fact_log_.append(fact_lines);

  for (const auto& a : new_activities) apply_activity_locked(a);
  for (auto& f : fresh) apply_fact_locked(std::move(f));
  return ids;
}

void HubStore::record_activity(const Activity& a) {
  std::unique_lock lock(mu_);
  write_locked({a}, {});
}

std::string HubStore::put_fact(Fact f) {
  if (f.partition != Partition::generated) {
    throw Error(ErrorCode::invalid, "curated facts are written only by promote or merge");
  }
  std::unique_lock lock(mu_);
  return write_locked({}, {std::move(f)}).front();
}

std::vector<std::string> HubStore::put_batch(const std::vector<Activity>& activities,
                                             std::vector<Fact> facts) {
  for (const auto& f : facts) {
    if (f.partition != Partition::generated) {
      throw Error(ErrorCode::invalid, "curated facts are written only by promote or merge");
    }
  }
  std::unique_lock lock(mu_);
  return write_locked(activities, std::move(facts));
}

std::vector<std::string> HubStore::put_curated(const Activity& activity, std::vector<Fact> facts) {
  if (activity.kind != ActivityKind::promote && activity.kind != ActivityKind::merge) {
    throw Error(ErrorCode::invalid, "curated writes require a promote or merge activity");
  }
  for (auto& f : facts) {
    f.partition = Partition::curated;
    f.envelope.activity = activity.id;
  }
  std::unique_lock lock(mu_);
  return write_locked({activity}, std::move(facts));
}

Fact HubStore::promote(const std::string& fact_id, const std::string& curator, Timestamp now) {
  if (curator.empty()) throw Error(ErrorCode::invalid, "promote requires a named curator");
  std::unique_lock lock(mu_);
  const auto it = fact_index_.find(fact_id);
  if (it == fact_index_.end()) throw Error(ErrorCode::not_found, "unknown fact '" + fact_id + "'");
  const Fact& original = facts_[it->second];
  if (original.partition == Partition::curated || promoted_.count(fact_id)) {
    throw Error(ErrorCode::conflict, "fact '" + fact_id + "' is already curated");
  }
  Activity act;
  act.kind = ActivityKind::promote;
  act.id = make_activity_id(act.kind, fact_id + "|" + curator + "|" + format_rfc3339(now));
  act.started_at = now;
  act.ended_at = now;
  act.agent = curator;
  act.inputs = {fact_id};

  Fact copy = original;
  copy.partition = Partition::curated;
  copy.envelope.activity = act.id;
  copy.envelope.agent = curator;
  copy.id = compute_fact_id(copy);
  if (fact_index_.count(copy.id)) {
    throw Error(ErrorCode::conflict, "fact '" + fact_id + "' is already curated");
  }
  write_locked({act}, {copy});
  return facts_[fact_index_.at(copy.id)];
}

std::string HubStore::put_document(DocumentBlob blob) {
  check_envelope(blob.envelope);
  const std::string id = sha256_hex(blob.bytes);
  std::unique_lock lock(mu_);
  if (documents_.count(id)) return id;
  if (!dir_.empty()) {
    const auto final_path = dir_ / "blobs" / id;
    const auto tmp = dir_ / "blobs" / (id + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
      if (!out) throw Error(ErrorCode::unavailable, "cannot write blob " + id);
    }
    std::filesystem::rename(tmp, final_path);
  } else {
    document_bytes_[id] = blob.bytes;
  }
  blob.envelope.visibility = blob.envelope.visibility.canonical();
  document_log_.append(document_line(id, blob.media_type, blob.envelope));
  documents_[id] = DocumentMeta{blob.media_type, blob.envelope};
  return id;
}

// --- reads --------------------------------------------------------------------

std::optional<Fact> HubStore::fact(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = fact_index_.find(id);
  if (it == fact_index_.end()) return std::nullopt;
  return facts_[it->second];
}

std::optional<Activity> HubStore::activity(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = activities_.find(id);
  if (it == activities_.end()) return std::nullopt;
  return it->second;
}

std::size_t HubStore::fact_count() const {
  std::shared_lock lock(mu_);
  return facts_.size();
}

std::vector<Fact> HubStore::all_facts() const {
  std::shared_lock lock(mu_);
  std::vector<Fact> out = facts_;
  std::sort(out.begin(), out.end(), [](const Fact& a, const Fact& b) { return a.id < b.id; });
  return out;
}

std::vector<Activity> HubStore::all_activities() const {
  std::shared_lock lock(mu_);
  std::vector<Activity> out;
  for (const auto& id : activity_order_) out.push_back(activities_.at(id));
  return out;
}

std::vector<Fact> HubStore::visible_facts_locked(const std::string& subject, const AuthContext& auth,
                                                 std::optional<Timestamp> as_of) const {
  std::vector<Fact> out;
  const auto it = by_subject_.find(subject);
  if (it == by_subject_.end()) return out;
  for (const auto idx : it->second) {
    const Fact& f = facts_[idx];
    if (!security::authorize(f.envelope.visibility, auth)) continue;
    if (as_of && !f.envelope.valid_at(*as_of)) continue;
    out.push_back(f);
  }
  std::sort(out.begin(), out.end(), [](const Fact& a, const Fact& b) { return a.id < b.id; });
  return out;
}

EntityView HubStore::get_entity(const std::string& id, const AuthContext& auth,
                                std::optional<Timestamp> as_of) const {
  std::shared_lock lock(mu_);
  EntityView view;
  view.id = id;
  view.concept_name = concept_of(id).value_or("");
  view.facts = visible_facts_locked(id, auth, as_of);
  return view;
}

std::vector<KeywordHit> HubStore::keyword_search(std::string_view text,
                                                 const AuthContext& auth) const {
  auto tokens = keyword_tokens(text);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());

  std::shared_lock lock(mu_);
  std::unordered_map<std::string, std::size_t> matched;
  for (const auto& t : tokens) {
    const auto it = keyword_index_.find(t);
    if (it == keyword_index_.end()) continue;
    std::unordered_set<std::string_view> counted;
    for (const auto idx : it->second) {
      const Fact& f = facts_[idx];
      if (counted.count(f.subject)) continue;
      if (!security::authorize(f.envelope.visibility, auth)) continue;
      counted.insert(f.subject);
      ++matched[f.subject];
    }
  }
  std::vector<KeywordHit> hits;
  hits.reserve(matched.size());
  for (auto& [entity, count] : matched) hits.push_back({entity, count});
  std::sort(hits.begin(), hits.end(), [](const KeywordHit& a, const KeywordHit& b) {
    if (a.matched_tokens != b.matched_tokens) return a.matched_tokens > b.matched_tokens;
    return a.entity < b.entity;
  });
  return hits;
}

void HubStore::check_query(const StructuredQuery& q) const {
  onto_.concept_def(q.concept_name);
  auto check_preds = [&](const std::string& c, const std::vector<AttributePredicate>& preds) {
    for (const auto& p : preds) {
      const auto* attr = onto_.find_attribute(c, p.attribute);
      if (!attr) {
        throw Error(ErrorCode::not_found,
                    "unknown attribute '" + p.attribute + "' for concept " + c);
      }
      if (p.op != CompareOp::contains && !make_value(attr->datatype, p.value)) {
        throw Error(ErrorCode::invalid, "value '" + p.value + "' is not a valid " +
                                            to_string(attr->datatype) + " for " + p.attribute);
      }
    }
  };
  check_preds(q.concept_name, q.predicates);
  if (q.traversal) {
    if (!onto_.find_relation(q.traversal->relation)) {
      throw Error(ErrorCode::not_found, "unknown relation '" + q.traversal->relation + "'");
    }
    onto_.concept_def(q.traversal->target_concept);
    check_preds(q.traversal->target_concept, q.traversal->predicates);
  }
}

bool HubStore::entity_matches_locked(const std::string& id, const std::string& concept_name,
                                     const std::vector<AttributePredicate>& preds,
                                     const AuthContext& auth,
                                     std::optional<Timestamp> as_of) const {
  const auto facts = visible_facts_locked(id, auth, as_of);
  if (facts.empty()) return false;
  const auto entity_concept = concept_of(id).value_or(concept_name);
  for (const auto& p : preds) {
    const auto* attr = onto_.find_attribute(entity_concept, p.attribute);
    if (!attr) return false;
    const bool any = std::any_of(facts.begin(), facts.end(), [&](const Fact& f) {
      return f.predicate == p.attribute && predicate_matches(p, f.object, attr->datatype);
    });
    if (!any) return false;
  }
  return true;
}

std::vector<std::string> HubStore::structured_query(const StructuredQuery& q, const AuthContext& auth,
                                                    std::optional<Timestamp> as_of) const {
  check_query(q);
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [c, ids] : by_concept_) {
    if (!onto_.has_concept(c) || !onto_.is_subconcept(c, q.concept_name)) continue;
    for (const auto& id : ids) {
      if (!entity_matches_locked(id, q.concept_name, q.predicates, auth, as_of)) continue;
      if (q.traversal) {
        const auto& t = *q.traversal;
        const auto facts = visible_facts_locked(id, auth, as_of);
        const bool linked = std::any_of(facts.begin(), facts.end(), [&](const Fact& f) {
          if (f.predicate != t.relation || f.object.kind != ValueKind::entity) return false;
          const auto oc = concept_of(f.object.lexical);
          if (!oc || !onto_.has_concept(*oc) || !onto_.is_subconcept(*oc, t.target_concept)) {
            return false;
          }
          return entity_matches_locked(f.object.lexical, t.target_concept, t.predicates, auth, as_of);
        });
        if (!linked) continue;
      }
      out.push_back(id);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Activity> HubStore::provenance_chain(const std::string& fact_id) const {
  std::shared_lock lock(mu_);
  const auto it = fact_index_.find(fact_id);
  if (it == fact_index_.end()) throw Error(ErrorCode::not_found, "unknown fact '" + fact_id + "'");

  std::vector<std::string> frontier;
  if (const auto u = used_by_.find(fact_id); u != used_by_.end()) {
    frontier.insert(frontier.end(), u->second.rbegin(), u->second.rend());
  }
  frontier.push_back(facts_[it->second].envelope.activity);

  std::vector<const Activity*> found;
  std::unordered_set<std::string> seen;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const auto id = frontier[head];
    if (!seen.insert(id).second) continue;
    const auto a = activities_.find(id);
    if (a == activities_.end()) {
      throw Error(ErrorCode::corrupt, "broken provenance chain: dangling activity '" + id + "'");
    }
    found.push_back(&a->second);
    for (const auto& in : a->second.inputs) {
      if (const auto fi = fact_index_.find(in); fi != fact_index_.end()) {
        frontier.push_back(facts_[fi->second].envelope.activity);
      }
    }
  }
  std::stable_sort(found.begin(), found.end(), [](const Activity* a, const Activity* b) {
    return b->started_at < a->started_at;
  });
  std::vector<Activity> out;
  for (const auto* a : found) out.push_back(*a);
  return out;
}

DocumentBlob HubStore::get_document(const std::string& id, const AuthContext& auth) const {
  std::shared_lock lock(mu_);
  const auto it = documents_.find(id);
  if (it == documents_.end()) throw Error(ErrorCode::not_found, "unknown document '" + id + "'");
  if (!security::authorize(it->second.envelope.visibility, auth)) {
    throw Error(ErrorCode::denied, "access to document '" + id + "' denied");
  }
  DocumentBlob blob;
  blob.id = id;
  blob.media_type = it->second.media_type;
  blob.envelope = it->second.envelope;
  if (dir_.empty()) {
    blob.bytes = document_bytes_.at(id);
  } else {
    blob.bytes = text::read_file((dir_ / "blobs" / id).string());
  }
  return blob;
}

std::vector<std::string> HubStore::entity_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [c, ids] : by_concept_) out.insert(out.end(), ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> HubStore::entities_of_concept(std::string_view concept_name) const {
  std::shared_lock lock(mu_);
  const auto it = by_concept_.find(std::string(concept_name));
  if (it == by_concept_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::set<std::string> HubStore::all_tokens() const {
  std::shared_lock lock(mu_);
  std::set<std::string> out;
  for (const auto& f : facts_) f.envelope.visibility.collect_tokens(out);
  for (const auto& [_, d] : documents_) d.envelope.visibility.collect_tokens(out);
  return out;
}

std::string HubStore::snapshot() const {
  std::string out;
  for (const auto& f : all_facts()) {
    out += codec::fact_to_line(f);
    out += '\n';
  }
  return out;
}

void HubStore::write_snapshot(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << snapshot();
    if (!out) throw Error(ErrorCode::unavailable, "cannot write snapshot '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fedhub::hubstore
