#pragma once

#include "fedhub/common/time.h"
#include "fedhub/hubstore/hubstore.h"
#include "fedhub/model/fact.h"
#include "fedhub/ontology/ontology.h"

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace fedhub::testing {

inline std::filesystem::path data_path(const std::string& rel) {
  return std::filesystem::path(FEDHUB_DATA_DIR) / rel;
}

inline const ontology::Ontology& bundled_ontology() {
  static const auto onto =
      ontology::Ontology::load_file(data_path("ontology/law_enforcement.ont").string());
  return onto;
}

inline Timestamp ts(const char* text) { return parse_rfc3339_or_throw(text); }

// Starts at `start` and advances one second per call.
inline Clock stepping_clock(Timestamp start) {
  auto t = std::make_shared<std::atomic<std::int64_t>>(start.seconds);
  return [t] { return Timestamp{t->fetch_add(1)}; };
}

inline Clock fixed_clock(Timestamp t) {
  return [t] { return t; };
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fedhub-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline Activity test_activity(const std::string& source = "test-src",
                              Timestamp at = Timestamp{1700000000}) {
  Activity a;
  a.kind = ActivityKind::ingest;
  a.id = make_activity_id(ActivityKind::ingest, source + "|" + format_rfc3339(at));
  a.started_at = at;
  a.ended_at = at;
  a.agent = "tester";
  a.inputs = {source};
  return a;
}

inline Fact literal_fact(const std::string& subject, const std::string& predicate, Value object,
                         const Activity& act, const std::string& vis = "",
                         const std::string& source = "test-src", double confidence = 1.0) {
  Fact f;
  f.subject = subject;
  f.predicate = predicate;
  f.object = std::move(object);
  f.envelope.source = source;
  f.envelope.activity = act.id;
  f.envelope.agent = act.agent;
  f.envelope.recorded_at = act.started_at;
  f.envelope.visibility = security::VisibilityExpr::parse(vis);
  f.envelope.confidence = confidence;
  return with_id(std::move(f));
}

inline Value txt(const std::string& s) { return text_value(s); }
inline Value typed(ValueKind k, const std::string& raw) { return *make_value(k, raw); }

}  // namespace fedhub::testing
