#include "fedhub/common/append_log.h"

#include "fedhub/common/error.h"
#include "fedhub/common/text.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

namespace fedhub {

namespace {

std::string errno_text() { return std::strerror(errno); }

}  // namespace

AppendLog::AppendLog(AppendLog&& other) noexcept
    : fd_(other.fd_), sync_(other.sync_), dropped_(other.dropped_), path_(std::move(other.path_)) {
  other.fd_ = -1;
}

AppendLog& AppendLog::operator=(AppendLog&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    sync_ = other.sync_;
    dropped_ = other.dropped_;
    path_ = std::move(other.path_);
    other.fd_ = -1;
  }
  return *this;
}

AppendLog::~AppendLog() {
  if (fd_ >= 0) ::close(fd_);
}

AppendLog AppendLog::open(const std::filesystem::path& path, std::vector<std::string>& lines_out,
                          bool fsync_each_append) {
  AppendLog log;
  log.path_ = path;
  log.sync_ = fsync_each_append;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  std::string content;
  if (std::filesystem::exists(path)) content = text::read_file(path.string());
  const auto last_nl = content.rfind('\n');
  const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
  log.dropped_ = content.size() - keep;

  log.fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log.fd_ < 0) {
    throw Error(ErrorCode::unavailable, "cannot open log '" + path.string() + "': " + errno_text());
  }
  if (log.dropped_ > 0 && ::ftruncate(log.fd_, static_cast<off_t>(keep)) != 0) {
    throw Error(ErrorCode::unavailable, "cannot truncate torn tail of '" + path.string() + "'");
  }

  std::size_t start = 0;
  while (start < keep) {
    const auto nl = content.find('\n', start);
    lines_out.push_back(content.substr(start, nl - start));
    start = nl + 1;
  }
  return log;
}

void AppendLog::append(const std::vector<std::string>& lines) {
  if (lines.empty()) return;
  std::string buf;
  for (const auto& l : lines) {
    if (l.find('\n') != std::string::npos) {
      throw Error(ErrorCode::invalid, "log line for '" + path_.string() + "' contains a newline");
    }
    buf += l;
    buf += '\n';
  }
  if (fd_ < 0) return;
  const char* p = buf.data();
  std::size_t left = buf.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::unavailable, "write to '" + path_.string() + "' failed: " + errno_text());
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (sync_ && ::fdatasync(fd_) != 0) {
    throw Error(ErrorCode::unavailable, "fdatasync '" + path_.string() + "' failed: " + errno_text());
  }
}

std::vector<std::string> read_complete_lines(const std::filesystem::path& path, bool* has_torn_tail) {
  std::vector<std::string> out;
  if (has_torn_tail) *has_torn_tail = false;
  if (!std::filesystem::exists(path)) return out;
  const std::string content = text::read_file(path.string());
  std::size_t start = 0;
  while (start < content.size()) {
    const auto nl = content.find('\n', start);
    if (nl == std::string::npos) {
      if (has_torn_tail) *has_torn_tail = true;
      break;
    }
    out.push_back(content.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

}  // namespace fedhub
