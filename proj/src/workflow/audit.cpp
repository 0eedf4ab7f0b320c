#include "fedhub/workflow/audit.h"

#include "fedhub/common/error.h"
#include "fedhub/common/hash.h"
#include "fedhub/common/text.h"

#include <nlohmann/json.hpp>

namespace fedhub::workflow {

using nlohmann::ordered_json;

std::string compute_audit_hash(const AuditRecord& r) {
  return hash_fields({std::to_string(r.seq), format_rfc3339(r.at), r.actor, r.op, r.arg_digest,
                      r.result_digest, r.prev_hash});
}

std::string audit_to_line(const AuditRecord& r) {
  ordered_json j;
  j["seq"] = r.seq;
  j["at"] = format_rfc3339(r.at);
  j["actor"] = r.actor;
  j["op"] = r.op;
  j["arg_digest"] = r.arg_digest;
  j["result_digest"] = r.result_digest;
  j["prev_hash"] = r.prev_hash;
  j["this_hash"] = r.this_hash;
  return j.dump();
}

namespace {

std::optional<AuditRecord> parse_record(const std::string& line) {
  try {
    const auto j = ordered_json::parse(line);
    AuditRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    const auto at = parse_rfc3339(j.at("at").get<std::string>());
    if (!at) return std::nullopt;
    r.at = *at;
    r.actor = j.at("actor").get<std::string>();
    r.op = j.at("op").get<std::string>();
    r.arg_digest = j.at("arg_digest").get<std::string>();
    r.result_digest = j.at("result_digest").get<std::string>();
    r.prev_hash = j.at("prev_hash").get<std::string>();
    r.this_hash = j.at("this_hash").get<std::string>();
    // Only the exact canonical encoding is accepted.
    if (audit_to_line(r) != line) return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

AuditVerification fail_at(AuditVerification v, std::uint64_t seq, std::string msg) {
  v.ok = false;
  v.first_corrupt_seq = seq;
  v.message = std::move(msg);
  return v;
}

}  // namespace

AuditVerification verify_audit_lines(const std::string& content) {
  AuditVerification v;
  std::string prev = kGenesisHash;
  std::size_t pos = 0;
  std::uint64_t expected = 1;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      return fail_at(v, expected, "record " + std::to_string(expected) + " is not newline-terminated");
    }
    const auto line = content.substr(pos, nl - pos);
    pos = nl + 1;
    const auto r = parse_record(line);
    if (!r) return fail_at(v, expected, "record " + std::to_string(expected) + " is malformed");
    if (r->seq != expected) {
      return fail_at(v, expected, "record " + std::to_string(expected) + " carries seq " + std::to_string(r->seq));
    }
    if (r->prev_hash != prev) {
      return fail_at(v, expected, "record " + std::to_string(expected) + " does not chain to its predecessor");
    }
    if (compute_audit_hash(*r) != r->this_hash) {
      return fail_at(v, expected, "record " + std::to_string(expected) + " hash mismatch");
    }
    prev = r->this_hash;
    ++expected;
    ++v.records;
  }
  return v;
}

AuditVerification verify_audit(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return AuditVerification{};
  return verify_audit_lines(text::read_file(path.string()));
}

std::unique_ptr<AuditLog> AuditLog::open(const std::filesystem::path& path, bool fsync) {
  auto log = std::make_unique<AuditLog>();
  std::vector<std::string> lines;
  log->log_ = AppendLog::open(path, lines, fsync);
  log->path_ = path;
  std::string content;
  for (const auto& l : lines) content += l + "\n";
  const auto v = verify_audit_lines(content);
  if (!v.ok) {
    throw Error(ErrorCode::corrupt, path.string() + " line " + std::to_string(*v.first_corrupt_seq) +
                                        ": " + v.message);
  }
  for (const auto& l : lines) log->records_.push_back(*parse_record(l));
  return log;
}

AuditRecord AuditLog::append(const std::string& actor, const std::string& op, const std::string& args,
                             const std::string& result, Timestamp at) {
  std::lock_guard lock(mu_);
  AuditRecord r;
  r.seq = records_.size() + 1;
  r.at = at;
  r.actor = actor;
  r.op = op;
  r.arg_digest = sha256_hex(args);
  r.result_digest = sha256_hex(result);
  r.prev_hash = records_.empty() ? kGenesisHash : records_.back().this_hash;
  r.this_hash = compute_audit_hash(r);
  log_.append(audit_to_line(r));
  records_.push_back(r);
  return r;
}

std::vector<AuditRecord> AuditLog::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::uint64_t AuditLog::last_seq() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

}  // namespace fedhub::workflow
