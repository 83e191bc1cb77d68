#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace devmine {

/// UTC instant with millisecond precision.
struct Timestamp {
  std::int64_t millis = 0;  // since 1970-01-01T00:00:00Z

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

/// Parses "YYYY-MM-DD HH:MM:SS[.fff]" (a 'T' separator is also accepted).
/// A trailing "Z", "+HH:MM", "-HH:MM" or "+HHMM" offset is normalized to UTC;
/// no offset means UTC. Fractions beyond milliseconds are truncated.
/// Throws InputError on malformed text or impossible calendar dates.
Timestamp parse_timestamp(std::string_view text);

/// Renders "YYYY-MM-DD HH:MM:SS.mmm" in UTC.
std::string format_timestamp(Timestamp t);

}  // namespace devmine
