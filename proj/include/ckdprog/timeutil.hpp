#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ckdprog {

// Seconds since 1970-01-01T00:00:00. All datetimes in the toolkit live in one
// uniform timezone; no DST or offset handling anywhere.
using Timestamp = int64_t;

// Days since 1970-01-01.
using Date = int32_t;

constexpr int64_t kSecondsPerDay = 86400;
constexpr int64_t kSecondsPerHour = 3600;
constexpr int64_t kSecondsPerMinute = 60;

Date date_of(Timestamp t);
Timestamp day_start(Date d);
Timestamp day_end(Date d);  // 23:59:59 of that day

// Proleptic Gregorian civil <-> day-count conversion.
int64_t days_from_civil(int year, int month, int day);
void civil_from_days(int64_t days, int& year, int& month, int& day);

int year_of(Date d);

// "YYYY-MM-DD"; throws std::runtime_error on malformed or impossible dates.
Date parse_date(std::string_view s);

// "YYYY-MM-DDTHH:MM:SS" (a space separator is accepted on input).
Timestamp parse_datetime(std::string_view s);

std::string format_date(Date d);
std::string format_datetime(Timestamp t);

}  // namespace ckdprog
