#include "fedhub/ingest/pipeline.h"

#include "fedhub/common/error.h"
#include "fedhub/common/hash.h"

#include <algorithm>
#include <random>
#include <set>
#include <sys/stat.h>

namespace fedhub::ingest {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

nlohmann::ordered_json run_to_json(const PipelineRun& run) {
  ordered_json j;
  j["id"] = run.id;
  j["source"] = run.source;
  j["batch"] = run.batch;
  j["started_at"] = format_rfc3339(run.started_at);
  j["ended_at"] = format_rfc3339(run.ended_at);
  j["counts"] = {{"records_read", run.counts.records_read},
                 {"facts_emitted", run.counts.facts_emitted},
                 {"extractions", run.counts.extractions},
                 {"links_proposed", run.counts.links_proposed},
                 {"errors", run.counts.errors}};
  j["activity"] = run.activity;
  auto errs = ordered_json::array();
  for (const auto& e : run.errors) errs.push_back({{"item", e.item}, {"message", e.message}});
  j["errors"] = errs;
  j["stages"] = run.stages;
  return j;
}

PipelineRun run_from_json(const nlohmann::json& j) {
  try {
    PipelineRun r;
    r.id = j.at("id").get<std::string>();
    r.source = j.at("source").get<std::string>();
    r.batch = j.at("batch").get<std::string>();
    r.started_at = parse_rfc3339_or_throw(j.at("started_at").get<std::string>());
    r.ended_at = parse_rfc3339_or_throw(j.at("ended_at").get<std::string>());
    const auto& c = j.at("counts");
    r.counts.records_read = c.at("records_read").get<std::size_t>();
    r.counts.facts_emitted = c.at("facts_emitted").get<std::size_t>();
    r.counts.extractions = c.at("extractions").get<std::size_t>();
    r.counts.links_proposed = c.at("links_proposed").get<std::size_t>();
    r.counts.errors = c.at("errors").get<std::size_t>();
    r.activity = j.at("activity").get<std::string>();
    for (const auto& e : j.at("errors")) {
      r.errors.push_back({e.at("item").get<std::string>(), e.at("message").get<std::string>()});
    }
    r.stages = j.at("stages").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::corrupt, std::string("malformed run record: ") + e.what());
  }
}

std::string extracted_entity_id(std::string_view concept_name, std::string_view canonical) {
  return make_entity_id(concept_name, "gazetteer|" + std::string(canonical));
}

Pipeline::Pipeline(hubstore::HubStore& store, linker::SimilarityConfig cfg, Clock clock,
                   const fs::path& run_log)
    : store_(store), cfg_(std::move(cfg)), clock_(std::move(clock)) {
  cfg_.validate();
  if (!run_log.empty()) {
    std::vector<std::string> lines;
    log_ = AppendLog::open(run_log, lines);
    std::size_t n = 0;
    for (const auto& line : lines) {
      ++n;
      try {
        runs_.push_back(run_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::corrupt,
                    run_log.string() + " line " + std::to_string(n) + ": " + e.what());
      }
    }
  }
}

std::mutex& Pipeline::source_lock(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& slot = source_locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::vector<PipelineRun> Pipeline::runs() const {
  std::lock_guard lock(mu_);
  return runs_;
}

namespace {

struct Document {
  std::string name;
  std::string bytes;
  Timestamp modified;
};

Timestamp mtime_of(const fs::path& p) {
  struct stat st {};
  if (::stat(p.c_str(), &st) != 0) return Timestamp{};
  return Timestamp{static_cast<std::int64_t>(st.st_mtime)};
}

std::string nonce() {
  static std::mt19937_64 rng{std::random_device{}()};
  static std::mutex mu;
  std::lock_guard lock(mu);
  return std::to_string(rng());
}

// Everything one run wants to write, assembled before the first write.
struct Staged {
  std::vector<DocumentBlob> blobs;
  std::vector<Fact> facts;
  std::vector<std::string> entities;
  std::vector<std::string> inputs;
};

void annotate(Fact& f, const std::string& activity, const std::string& agent) {
  f.envelope.activity = activity;
  f.envelope.agent = agent;
}

}  // namespace

PipelineRun Pipeline::run(const federation::ResolvedSource& src, const std::string& batch_in,
                          const std::string& agent) {
  std::lock_guard source_guard(source_lock(src.desc.id));
  PipelineRun run;
  run.source = src.desc.id;
  run.batch = batch_in.empty() ? src.desc.endpoint : batch_in;
  run.started_at = clock_();
  run.activity = make_activity_id(ActivityKind::ingest, src.desc.id + "|" + run.batch + "|" +
                                                            format_rfc3339(run.started_at) + "|" + nonce());
  run.id = "run:" + run.activity.substr(run.activity.find(':') + 1);

  // acquire
  Staged staged;
  staged.inputs.push_back(src.desc.id);
  text::CsvTable table;
  std::vector<Document> documents;
  switch (src.desc.kind) {
    case federation::SourceKind::csv_file:
      if (!src.mapping) throw Error(ErrorCode::invalid, "source '" + src.desc.id + "' has no mapping");
      table = text::parse_csv(text::read_file(run.batch));
      run.counts.records_read = table.rows.size();
      break;
    case federation::SourceKind::directory_of_documents: {
      if (!src.gazetteer) throw Error(ErrorCode::invalid, "source '" + src.desc.id + "' has no gazetteer");
      std::error_code ec;
      if (!fs::is_directory(run.batch, ec)) {
        throw Error(ErrorCode::unavailable, "cannot read document directory '" + run.batch + "'");
      }
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(run.batch, ec)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      if (ec) throw Error(ErrorCode::unavailable, "cannot list '" + run.batch + "': " + ec.message());
      std::sort(files.begin(), files.end());
      for (const auto& p : files) {
        ++run.counts.records_read;
        try {
          documents.push_back({p.filename().string(), text::read_file(p.string()), mtime_of(p)});
        } catch (const Error& e) {
          run.errors.push_back({p.filename().string(), e.what()});
        }
      }
      break;
    }
    case federation::SourceKind::peer_hub:
      throw Error(ErrorCode::invalid, "peer-hub sources are queried, not ingested");
  }
  run.stages.push_back("acquire");

  // transform / extract
  if (src.mapping) {
    TransformContext ctx{src.desc.id, run.activity, agent, run.started_at, src.desc.default_visibility};
    auto out = transform(table, *src.mapping, ctx);
    staged.facts = std::move(out.facts);
    staged.entities = std::move(out.entities);
    run.errors.insert(run.errors.end(), out.errors.begin(), out.errors.end());
    run.stages.push_back("transform");
  } else {
    std::set<std::string> seen;
    for (const auto& d : documents) {
      try {
        DocumentBlob blob;
        blob.id = sha256_hex(d.bytes);
        blob.media_type = "text/plain";
        blob.bytes = d.bytes;
        blob.envelope.source = src.desc.id;
        blob.envelope.recorded_at = d.modified;
        blob.envelope.visibility = src.desc.default_visibility;

        MetadataEnvelope env;
        env.source = src.desc.id;
        env.recorded_at = d.modified;
        env.visibility = src.desc.default_visibility;
        const auto doc_entity = record_entity_id("Document", src.desc.id, d.name);
        auto literal = [&](const std::string& subject, const char* pred, ValueKind kind,
                           const std::string& v) {
          Fact f;
          f.subject = subject;
          f.predicate = pred;
          f.object = make_value(kind, v).value();
          f.envelope = env;
          return f;
        };
        std::vector<Fact> facts;
        facts.push_back(literal(doc_entity, "title", ValueKind::text, d.name));
        facts.push_back(literal(doc_entity, "mediaType", ValueKind::text, blob.media_type));
        facts.push_back(literal(doc_entity, "blobId", ValueKind::text, blob.id));
        std::vector<std::string> touched{doc_entity};
        for (const auto& x : linker::extract_entities(d.bytes, *src.gazetteer)) {
          ++run.counts.extractions;
          const auto target = extracted_entity_id(x.concept_name, x.canonical);
          Fact m;
          m.subject = doc_entity;
          m.predicate = "mentions";
          m.object = entity_value(target);
          m.envelope = env;
          facts.push_back(std::move(m));
          facts.push_back(literal(target, "label", ValueKind::text, x.canonical));
          touched.push_back(target);
        }
        staged.inputs.push_back(blob.id);
        staged.blobs.push_back(std::move(blob));
        for (auto& f : facts) staged.facts.push_back(std::move(f));
        for (auto& t : touched) {
          if (seen.insert(t).second) staged.entities.push_back(t);
        }
      } catch (const Error& e) {
        run.errors.push_back({d.name, e.what()});
      }
    }
    run.stages.push_back("extract");
  }

  // annotate
  for (auto& f : staged.facts) {
    annotate(f, run.activity, agent);
    f = with_id(std::move(f));
  }
  for (auto& b : staged.blobs) {
    b.envelope.activity = run.activity;
    b.envelope.agent = agent;
  }
  {
    std::set<std::string> distinct;
    for (const auto& f : staged.facts) distinct.insert(f.id);
    run.counts.facts_emitted = distinct.size();
  }
  run.stages.push_back("annotate");

  // index: the activity is durable before anything that cites it.
  Activity act;
  act.id = run.activity;
  act.kind = ActivityKind::ingest;
  act.started_at = run.started_at;
  act.ended_at = std::max(run.started_at, clock_());
  act.agent = agent;
  act.inputs = staged.inputs;
  store_.record_activity(act);
  for (auto& b : staged.blobs) store_.put_document(std::move(b));
  store_.put_batch({}, staged.facts);
  run.stages.push_back("index");

  // link
  if (linking_) {
    security::AuthContext everything("ingest", store_.all_tokens());
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : staged.entities) {
      for (const auto& p : linker::propose_links(e, store_, cfg_, everything, clock_())) {
        pairs.emplace(p.left, p.right);
      }
    }
    run.counts.links_proposed = pairs.size();
    run.stages.push_back("link");
  }

  run.counts.errors = run.errors.size();
  run.ended_at = std::max(run.started_at, clock_());
  {
    std::lock_guard lock(mu_);
    log_.append(run_to_json(run).dump());
    runs_.push_back(run);
  }
  return run;
}

}  // namespace fedhub::ingest
