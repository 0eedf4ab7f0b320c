#pragma once

#include "fedhub/common/error.h"
#include "fedhub/federation/federation.h"
#include "fedhub/hubstore/hubstore.h"
#include "fedhub/ingest/pipeline.h"
#include "fedhub/service/config.h"
#include "fedhub/workflow/workflow.h"

#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace fedhub::service {

// Transport-independent request. Header names are lower-case.
struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;
  std::string body;

  std::string header(std::string_view name) const;
};

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

int http_status(ErrorCode code);
Response error_response(ErrorCode code, const std::string& message);

// One knowledge-hub node: ontology, store, pipeline, source registry and
// workflow engine wired to a data directory, behind a JSON-over-HTTP API.
//
//   GET  /health                      GET  /ontology
//   GET  /entities/{id}?as_of=        POST /entities/merge
//   POST /query                       POST /peer/query
//   GET  /sources                     POST /sources
//   POST /ingest/{source}             GET  /runs
//   GET  /facts/{id}/provenance       POST /facts/{id}/promote
//   GET  /plans                       POST /plans
//   GET  /plans/{id}                  POST /plans/{id}/goals
//   POST /plans/{id}/events           POST /plans/{id}/elements/{eid}/execute
//   GET  /plans/{id}/gates/{gate}     POST /plans/{id}/gates/{gate}?dry_run=1
//   GET  /audit/verify
//
// Callers identify with X-Fedhub-Principal and may narrow their grant with
// X-Fedhub-Tokens; without a principal the caller sees public facts only and
// cannot write.
class Node {
 public:
  // Takes the data directory lock, loads the ontology, rules and templates and
  // replays every log. A corrupt log refuses startup with Error(corrupt)
  // naming the file and line; a held lock is Error(unavailable).
  static std::unique_ptr<Node> open(NodeConfig cfg, Clock clock = system_clock());
  ~Node();

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Response handle(const Request& req);

  // Binds the listen address (port 0 picks a free port) and serves on a
  // background thread. Returns the bound port.
  int start();
  // Blocks until stop() is called.
  void wait();
  void stop();

  // --- library-level operations (used by the API) -------------------------
  security::AuthContext authenticate(const Request& req) const;
  federation::SourceDescriptor add_source(const federation::SourceDescriptor& d, const std::string& actor);
  ingest::PipelineRun ingest(const std::string& source_id, const std::string& batch,
                             const std::string& actor);
  federation::ConsolidatedResult federated_query(const federation::Query& q,
                                                 const security::AuthContext& auth,
                                                 std::optional<std::chrono::milliseconds> timeout = {});

  const NodeConfig& config() const { return cfg_; }
  const ontology::Ontology& ontology() const { return *onto_; }
  hubstore::HubStore& store() { return *store_; }
  ingest::Pipeline& pipeline() { return *pipeline_; }
  federation::SourceRegistry& registry() { return *registry_; }
  workflow::Workflow& workflow() { return *workflow_; }
  const linker::SimilarityConfig& similarity() const { return sim_; }

 private:
  explicit Node(NodeConfig cfg, Clock clock);
  Response route(const Request& req);

  NodeConfig cfg_;
  Clock clock_;
  int lock_fd_ = -1;
  std::unique_ptr<ontology::Ontology> onto_;
  linker::SimilarityConfig sim_;
  std::unique_ptr<hubstore::HubStore> store_;
  std::unique_ptr<ingest::Pipeline> pipeline_;
  std::unique_ptr<federation::SourceRegistry> registry_;
  std::unique_ptr<workflow::Workflow> workflow_;
  std::mutex sources_mu_;
  AppendLog sources_log_;

  std::unique_ptr<httplib::Server> server_;
  std::thread server_thread_;
};

}  // namespace fedhub::service
