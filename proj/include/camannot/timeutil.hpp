#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace camannot {

/// Seconds since the Unix epoch, UTC.
using UnixSeconds = std::int64_t;

/// Parses ISO-8601 date-times such as "2014-05-02T10:21:33Z",
/// "2014-05-02 10:21:33", "2014-05-02T11:21:33+01:00". Fractional seconds
/// are truncated; a missing offset means UTC.
std::optional<UnixSeconds> parse_iso8601(std::string_view s);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(UnixSeconds t);

/// "YYYYMMDDTHHMMSSZ", URL-safe.
std::string format_compact(UnixSeconds t);

UnixSeconds now_utc();

}  // namespace camannot
