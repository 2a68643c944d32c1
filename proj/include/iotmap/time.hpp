#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace iotmap {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

inline constexpr Timestamp kHour = 3600;
inline constexpr Timestamp kDay = 86400;

/// "2022-02-28", "2022-02-28T13:00:00Z" or a bare epoch-seconds integer.
Timestamp parse_timestamp(std::string_view text);
/// ISO-8601 UTC with seconds resolution: 2022-02-28T00:00:00Z.
std::string format_timestamp(Timestamp t);
/// YYYY-MM-DD of the UTC day containing t.
std::string format_date(Timestamp t);

/// Half-open interval [start, end).
struct StudyWindow {
    Timestamp start = 0;
    Timestamp end = 0;

    StudyWindow() = default;
    StudyWindow(Timestamp s, Timestamp e);

    /// "START/END" where each side is accepted by parse_timestamp.
    static StudyWindow parse(std::string_view text);

    bool contains(Timestamp t) const noexcept { return t >= start && t < end; }
    /// Closed interval [a, b] intersects the window.
    bool overlaps(Timestamp a, Timestamp b) const noexcept { return a < end && b >= start; }
    std::string to_string() const;

    bool operator==(const StudyWindow&) const = default;
};

/// Fixed offset from UTC used to place day and hour boundaries at the vantage.
struct UtcOffset {
    std::int32_t seconds = 0;

    /// "+01:00", "-05:30", "Z" or "UTC".
    static UtcOffset parse(std::string_view text);
    std::string to_string() const;

    Timestamp local(Timestamp utc) const noexcept { return utc + seconds; }

    bool operator==(const UtcOffset&) const = default;
};

/// Floor division that stays correct for negative timestamps.
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace iotmap
