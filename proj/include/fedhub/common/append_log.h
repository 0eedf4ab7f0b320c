#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fedhub {

// Line-oriented append-only file. Each append is a single write(2) of complete,
// newline-terminated lines, so a crash can leave at most one torn trailing
// fragment. Opening the log drops that fragment (it was never acknowledged);
// every complete line is returned to the caller for replay.
class AppendLog {
 public:
  AppendLog() = default;  // detached: appends are discarded
  AppendLog(const AppendLog&) = delete;
  AppendLog& operator=(const AppendLog&) = delete;
  AppendLog(AppendLog&& other) noexcept;
  AppendLog& operator=(AppendLog&& other) noexcept;
  ~AppendLog();

  // Opens or creates `path`. `lines_out` receives every complete line.
  static AppendLog open(const std::filesystem::path& path, std::vector<std::string>& lines_out,
                        bool fsync_each_append = false);

  // Lines must not contain '\n'. Throws Error(unavailable) on I/O failure.
  void append(const std::vector<std::string>& lines);
  void append(const std::string& line) { append(std::vector<std::string>{line}); }

  bool attached() const { return fd_ >= 0; }
  const std::filesystem::path& path() const { return path_; }
  // Bytes of the torn fragment removed by open(), 0 if none.
  std::size_t dropped_bytes() const { return dropped_; }

 private:
  int fd_ = -1;
  bool sync_ = false;
  std::size_t dropped_ = 0;
  std::filesystem::path path_;
};

// Whole-file helpers for logs that are verified rather than replayed.
std::vector<std::string> read_complete_lines(const std::filesystem::path& path,
                                             bool* has_torn_tail = nullptr);

}  // namespace fedhub
