#pragma once

#include "fedhub/common/append_log.h"
#include "fedhub/common/time.h"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace fedhub::workflow {

inline const std::string kGenesisHash(64, '0');

struct AuditRecord {
  std::uint64_t seq = 0;  // from 1, gapless
  Timestamp at;
  std::string actor;
  std::string op;
  std::string arg_digest;
  std::string result_digest;
  std::string prev_hash;
  std::string this_hash;

  friend bool operator==(const AuditRecord&, const AuditRecord&) = default;
};

std::string compute_audit_hash(const AuditRecord& r);
// One canonical JSON line (no trailing newline).
std::string audit_to_line(const AuditRecord& r);

struct AuditVerification {
  bool ok = true;
  std::uint64_t records = 0;           // verified records
  std::optional<std::uint64_t> first_corrupt_seq;
  std::string message;
};

// Recomputes the chain. A line that does not parse, does not re-serialize to
// exactly its own bytes, breaks seq/prev_hash continuity, or carries a wrong
// hash marks that position (1-based) as corrupt; so does a missing final newline.
AuditVerification verify_audit_lines(const std::string& content);
AuditVerification verify_audit(const std::filesystem::path& path);

// Hash-chained append-only audit log.
class AuditLog {
 public:
  AuditLog() = default;  // in memory
  // Opens (creating if needed). A torn final fragment is dropped; an invalid
  // chain throws Error(corrupt).
  static std::unique_ptr<AuditLog> open(const std::filesystem::path& path, bool fsync = false);

  AuditRecord append(const std::string& actor, const std::string& op, const std::string& args,
                     const std::string& result, Timestamp at);

  std::vector<AuditRecord> records() const;
  std::uint64_t last_seq() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  mutable std::mutex mu_;
  std::vector<AuditRecord> records_;
  std::filesystem::path path_;
  AppendLog log_;
};

}  // namespace fedhub::workflow
