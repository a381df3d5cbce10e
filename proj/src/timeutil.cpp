#include "ckdprog/timeutil.hpp"

#include <cstdio>
#include <stdexcept>

namespace ckdprog {

Date date_of(Timestamp t) {
    // Floor division; timestamps before 1970 round toward minus infinity.
    int64_t d = t / kSecondsPerDay;
    if (t % kSecondsPerDay < 0) --d;
    return static_cast<Date>(d);
}

Timestamp day_start(Date d) { return static_cast<Timestamp>(d) * kSecondsPerDay; }

Timestamp day_end(Date d) { return day_start(d) + kSecondsPerDay - 1; }

// Howard Hinnant's algorithms, public domain.
int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& year, int& month, int& day) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    year = static_cast<int>(y + (month <= 2));
}

int year_of(Date d) {
    int y, m, dd;
    civil_from_days(d, y, m, dd);
    return y;
}

namespace {

bool parse_fixed_uint(std::string_view s, size_t pos, size_t len, int& out) {
    int v = 0;
    for (size_t i = pos; i < pos + len; ++i) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

[[noreturn]] void bad(std::string_view what, std::string_view s) {
    throw std::runtime_error("invalid " + std::string(what) + ": '" + std::string(s) + "'");
}

// Parses YYYY-MM-DD at the start of s, validating the calendar date.
Date parse_date_prefix(std::string_view s, std::string_view whole, std::string_view what) {
    int y, m, d;
    if (s.size() < 10 || !parse_fixed_uint(s, 0, 4, y) || s[4] != '-' ||
        !parse_fixed_uint(s, 5, 2, m) || s[7] != '-' || !parse_fixed_uint(s, 8, 2, d)) {
        bad(what, whole);
    }
    if (m < 1 || m > 12 || d < 1 || d > 31) bad(what, whole);
    int64_t days = days_from_civil(y, m, d);
    // Round-trip rejects impossible dates such as Feb 30.
    int y2, m2, d2;
    civil_from_days(days, y2, m2, d2);
    if (y2 != y || m2 != m || d2 != d) bad(what, whole);
    return static_cast<Date>(days);
}

}  // namespace

Date parse_date(std::string_view s) {
    if (s.size() != 10) bad("date", s);
    return parse_date_prefix(s, s, "date");
}

Timestamp parse_datetime(std::string_view s) {
    if (s.size() != 19 || (s[10] != 'T' && s[10] != ' ')) bad("datetime", s);
    Date d = parse_date_prefix(s, s, "datetime");
    int hh, mm, ss;
    if (!parse_fixed_uint(s, 11, 2, hh) || s[13] != ':' || !parse_fixed_uint(s, 14, 2, mm) ||
        s[16] != ':' || !parse_fixed_uint(s, 17, 2, ss)) {
        bad("datetime", s);
    }
    if (hh > 23 || mm > 59 || ss > 59) bad("datetime", s);
    return day_start(d) + hh * kSecondsPerHour + mm * kSecondsPerMinute + ss;
}

std::string format_date(Date d) {
    int y, m, dd;
    civil_from_days(d, y, m, dd);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, dd);
    return buf;
}

std::string format_datetime(Timestamp t) {
    Date d = date_of(t);
    int64_t rem = t - day_start(d);
    int y, m, dd;
    civil_from_days(d, y, m, dd);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", y, m, dd,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

}  // namespace ckdprog
