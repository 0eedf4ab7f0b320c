#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace fedhub::acceptance {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

std::filesystem::path data_dir();
std::filesystem::path scratch_dir(const std::string& name);
double seconds_since(std::chrono::steady_clock::time_point t0);

Outcome check_redaction_equivalence();
Outcome check_visibility_round_trip();
Outcome check_privacy_fuzz();
Outcome check_federation_determinism();
Outcome check_ingest_idempotence();
Outcome check_provenance_completeness();
Outcome check_warrant_gate();
Outcome check_linker();
Outcome check_crash_consistency(const std::string& self_exe);
Outcome check_ontology_top_level();
Outcome check_responsiveness();

// Body of the child process the crash check kills.
[[noreturn]] void crash_child(const std::filesystem::path& dir);

}  // namespace fedhub::acceptance
