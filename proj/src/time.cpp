#include "iotmap/time.hpp"

#include <charconv>
#include <cstdio>

#include "iotmap/error.hpp"

namespace iotmap {
namespace {

// Howard Hinnant's civil calendar conversions.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    auto r = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return r.ec == std::errc{} && r.ptr == s.data() + pos + len;
}

[[noreturn]] void bad_time(std::string_view text) {
    throw ParseError("", 0, "", "invalid timestamp '" + std::string(text) + "'");
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    if (text.empty()) bad_time(text);
    if (text.find('-', 1) == std::string_view::npos) {
        Timestamp v = 0;
        auto r = std::from_chars(text.data(), text.data() + text.size(), v);
        if (r.ec != std::errc{} || r.ptr != text.data() + text.size()) bad_time(text);
        return v;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    if (!read_int(text, 0, 4, y) || text[4] != '-' || !read_int(text, 5, 2, mo) || text.size() < 10 ||
        text[7] != '-' || !read_int(text, 8, 2, d))
        bad_time(text);
    if (text.size() > 10) {
        if ((text[10] != 'T' && text[10] != ' ') || !read_int(text, 11, 2, h) || text.size() < 19 ||
            text[13] != ':' || !read_int(text, 14, 2, mi) || text[16] != ':' || !read_int(text, 17, 2, s))
            bad_time(text);
        const auto tail = text.substr(19);
        if (!(tail.empty() || tail == "Z" || tail == "+00:00")) bad_time(text);
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) bad_time(text);
    return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * kDay + h * kHour +
           mi * 60 + s;
}

std::string format_timestamp(Timestamp t) {
    const std::int64_t days = floor_div(t, kDay);
    const std::int64_t secs = t - days * kDay;
    std::int64_t y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                  static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                  static_cast<long long>(secs % 60));
    return buf;
}

std::string format_date(Timestamp t) { return format_timestamp(t).substr(0, 10); }

StudyWindow::StudyWindow(Timestamp s, Timestamp e) : start(s), end(e) {
    if (!(s < e)) throw ValidationError("study window start must precede end");
}

StudyWindow StudyWindow::parse(std::string_view text) {
    const auto slash = text.find('/');
    if (slash == std::string_view::npos)
        throw ParseError("", 0, "window", "expected START/END, got '" + std::string(text) + "'");
    return StudyWindow(parse_timestamp(text.substr(0, slash)), parse_timestamp(text.substr(slash + 1)));
}

std::string StudyWindow::to_string() const { return format_timestamp(start) + "/" + format_timestamp(end); }

UtcOffset UtcOffset::parse(std::string_view text) {
    if (text.empty() || text == "Z" || text == "UTC") return {};
    int h = 0, m = 0;
    if (text.size() != 6 || (text[0] != '+' && text[0] != '-') || text[3] != ':' || !read_int(text, 1, 2, h) ||
        !read_int(text, 4, 2, m) || h > 14 || m > 59)
        throw ParseError("", 0, "timezone", "expected +HH:MM, got '" + std::string(text) + "'");
    const int sign = text[0] == '-' ? -1 : 1;
    return UtcOffset{sign * (h * 3600 + m * 60)};
}

std::string UtcOffset::to_string() const {
    const int a = seconds < 0 ? -seconds : seconds;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%02d:%02d", seconds < 0 ? '-' : '+', a / 3600, a / 60 % 60);
    return buf;
}

}  // namespace iotmap
