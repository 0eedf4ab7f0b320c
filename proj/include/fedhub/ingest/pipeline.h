#pragma once

#include "fedhub/federation/source.h"
#include "fedhub/hubstore/hubstore.h"
#include "fedhub/ingest/mapping.h"
#include "fedhub/linker/linker.h"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace fedhub::ingest {

struct RunCounts {
  std::size_t records_read = 0;
  std::size_t facts_emitted = 0;
  std::size_t extractions = 0;
  std::size_t links_proposed = 0;
  std::size_t errors = 0;

  friend bool operator==(const RunCounts&, const RunCounts&) = default;
};

struct PipelineRun {
  std::string id;
  std::string source;
  std::string batch;
  Timestamp started_at;
  Timestamp ended_at;
  RunCounts counts;
  std::string activity;
  std::vector<ItemError> errors;
  std::vector<std::string> stages;  // completed stages, in execution order
};

nlohmann::ordered_json run_to_json(const PipelineRun& run);
PipelineRun run_from_json(const nlohmann::json& j);

// Entity id the stub extractor assigns to a gazetteer canonical name.
std::string extracted_entity_id(std::string_view concept_name, std::string_view canonical);

// Staged ingestion into the generated partition:
//   acquire -> transform | extract -> annotate -> index -> link
// Runs for the same source are serialized; different sources may overlap.
class Pipeline {
 public:
  // `run_log` (optional) receives one JSON line per finished run.
  Pipeline(hubstore::HubStore& store, linker::SimilarityConfig cfg, Clock clock,
           const std::filesystem::path& run_log = {});

  // `batch` is a CSV file (csv-file) or a directory (directory-of-documents);
  // empty means the descriptor's endpoint. An unreadable batch throws
  // Error(unavailable) before anything is written.
  PipelineRun run(const federation::ResolvedSource& src, const std::string& batch,
                  const std::string& agent = "ingest");

  std::vector<PipelineRun> runs() const;

  // Skips the link stage (used for transient stores behind query adapters).
  void set_linking(bool on) { linking_ = on; }

 private:
  std::mutex& source_lock(const std::string& id);

  hubstore::HubStore& store_;
  linker::SimilarityConfig cfg_;
  Clock clock_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> source_locks_;
  std::vector<PipelineRun> runs_;
  AppendLog log_;
  bool linking_ = true;
};

}  // namespace fedhub::ingest
