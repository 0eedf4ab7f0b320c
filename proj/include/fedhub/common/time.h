#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace fedhub {

// UTC instant with one-second resolution. Printed as RFC 3339 with a `Z` suffix.
struct Timestamp {
  std::int64_t seconds = 0;  // since 1970-01-01T00:00:00Z

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

  Timestamp plus_seconds(std::int64_t s) const { return Timestamp{seconds + s}; }
};

// Accepts `YYYY-MM-DDTHH:MM:SS[.fff](Z|±HH:MM)`; fractional seconds are truncated.
std::optional<Timestamp> parse_rfc3339(std::string_view text);
Timestamp parse_rfc3339_or_throw(std::string_view text);
std::string format_rfc3339(Timestamp t);

// Calendar date `YYYY-MM-DD`, stored as days since the epoch.
std::optional<std::int64_t> parse_iso_date(std::string_view text);
std::string format_iso_date(std::int64_t days);

using Clock = std::function<Timestamp()>;
Clock system_clock();
Timestamp now_utc();

}  // namespace fedhub
