// Acceptance harness: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include "criteria.h"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <unistd.h>

namespace fedhub::acceptance {

std::filesystem::path data_dir() { return FEDHUB_DATA_DIR; }

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("fedhub-acceptance-" + std::to_string(::getpid()) + "-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace fedhub::acceptance

int main(int argc, char** argv) {
  using namespace fedhub::acceptance;

  CLI::App app{"fedhub acceptance checks"};
  std::string only;
  std::string crash_dir;
  app.add_option("--only", only, "Run only criteria whose name contains this text");
  app.add_option("--crash-child", crash_dir)->group("");
  CLI11_PARSE(app, argc, argv);
  if (!crash_dir.empty()) crash_child(crash_dir);

  const std::string self = std::filesystem::canonical("/proc/self/exe").string();
  const std::vector<Criterion> criteria{
      {"redaction-equivalence", check_redaction_equivalence},
      {"visibility-round-trip", check_visibility_round_trip},
      {"cross-node-privacy", check_privacy_fuzz},
      {"federation-determinism", check_federation_determinism},
      {"ingest-idempotence", check_ingest_idempotence},
      {"provenance-completeness", check_provenance_completeness},
      {"warrant-gate", check_warrant_gate},
      {"linker-properties", check_linker},
      {"crash-consistency", [&] { return check_crash_consistency(self); }},
      {"ontology-top-level", check_ontology_top_level},
      {"responsiveness", check_responsiveness},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && c.name.find(only) == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
