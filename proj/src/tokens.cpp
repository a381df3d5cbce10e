#include "ckdprog/tokens.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <stdexcept>

namespace ckdprog {

namespace {

constexpr std::array<int64_t, 13> kBucketUpperBounds = {
    15 * 60,        // 5m-15m
    60 * 60,        // 15m-1h
    2 * 3600,       // 1h-2h
    6 * 3600,       // 2h-6h
    12 * 3600,      // 6h-12h
    86400,          // 12h-1d
    3 * 86400,      // 1d-3d
    7 * 86400,      // 3d-1w
    30 * 86400,     // 1w-1mo
    90 * 86400,     // 1mo-3mo
    180 * 86400,    // 3mo-6mo
    365 * 86400,    // 6mo-1y
    INT64_MAX,      // gt-1y
};

constexpr std::array<const char*, 13> kBucketNames = {
    "TIME_5m-15m", "TIME_15m-1h",  "TIME_1h-2h",   "TIME_2h-6h",  "TIME_6h-12h",
    "TIME_12h-1d", "TIME_1d-3d",   "TIME_3d-1w",   "TIME_1w-1mo", "TIME_1mo-3mo",
    "TIME_3mo-6mo", "TIME_6mo-1y", "TIME_gt-1y",
};

constexpr int64_t kMinGap = 5 * 60;

const char* visit_suffix(VisitType t) {
    switch (t) {
        case VisitType::outpatient: return "OUT";
        case VisitType::inpatient: return "IN";
        case VisitType::emergency: return "ER";
    }
    return "OUT";
}

bool parse_int_payload(std::string_view s, int64_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void bad_token(std::string_view text) {
    throw std::runtime_error("unparseable token: '" + std::string(text) + "'");
}

}  // namespace

const char* time_bucket_name(int bucket_index) {
    if (bucket_index < 0 || bucket_index >= kTimeBucketCount) {
        throw std::runtime_error("time bucket index out of range");
    }
    return kBucketNames[static_cast<size_t>(bucket_index)];
}

std::optional<std::string> time_bucket(int64_t gap_seconds) {
    if (gap_seconds < 0) throw std::runtime_error("negative time gap");
    if (gap_seconds <= kMinGap) return std::nullopt;
    for (int b = 0; b < kTimeBucketCount; ++b) {
        if (gap_seconds <= kBucketUpperBounds[static_cast<size_t>(b)]) {
            return std::string(kBucketNames[static_cast<size_t>(b)]);
        }
    }
    return std::string(kBucketNames.back());
}

std::string gender_token(Gender g) { return std::string("GENDER_") + to_string(g); }

std::string age_token(int years) {
    years = std::clamp(years, 0, 119);
    return "AGE_" + std::to_string(years);
}

std::string visit_start_token(VisitType t) { return std::string("VS_") + visit_suffix(t); }

std::string visit_end_token(VisitType t) { return std::string("VE_") + visit_suffix(t); }

std::string domain_marker_token(Domain d) {
    switch (d) {
        case Domain::condition: return "[CONDITION]";
        case Domain::drug: return "[DRUG]";
        case Domain::procedure: return "[PROCEDURE]";
        case Domain::measurement: return "[LAB]";
    }
    return "[CONDITION]";
}

std::string concept_token(int64_t concept_id) { return "C_" + std::to_string(concept_id); }

std::string quantile_token(int q) {
    if (q < 1 || q > 10) throw std::runtime_error("quantile index out of range");
    return "Q" + std::to_string(q);
}

std::string format_token(const TokenInfo& info) {
    switch (info.kind) {
        case TokenKind::pad: return "[PAD]";
        case TokenKind::cls: return "[CLS]";
        case TokenKind::sep: return "[SEP]";
        case TokenKind::mask: return "[MASK]";
        case TokenKind::unk: return "[UNK]";
        case TokenKind::gender: return gender_token(static_cast<Gender>(info.payload));
        case TokenKind::age: return age_token(static_cast<int>(info.payload));
        case TokenKind::visit_start: return visit_start_token(static_cast<VisitType>(info.payload));
        case TokenKind::visit_end: return visit_end_token(static_cast<VisitType>(info.payload));
        case TokenKind::domain_marker:
            return domain_marker_token(static_cast<Domain>(info.payload));
        case TokenKind::concept_code: return concept_token(info.payload);
        case TokenKind::quantile: return quantile_token(static_cast<int>(info.payload));
        case TokenKind::time_bucket: return time_bucket_name(static_cast<int>(info.payload));
    }
    throw std::runtime_error("unknown token kind");
}

TokenInfo parse_token(std::string_view text) {
    if (text == "[PAD]") return {TokenKind::pad, 0};
    if (text == "[CLS]") return {TokenKind::cls, 0};
    if (text == "[SEP]") return {TokenKind::sep, 0};
    if (text == "[MASK]") return {TokenKind::mask, 0};
    if (text == "[UNK]") return {TokenKind::unk, 0};
    if (text == "[CONDITION]") return {TokenKind::domain_marker, static_cast<int64_t>(Domain::condition)};
    if (text == "[DRUG]") return {TokenKind::domain_marker, static_cast<int64_t>(Domain::drug)};
    if (text == "[PROCEDURE]") return {TokenKind::domain_marker, static_cast<int64_t>(Domain::procedure)};
    if (text == "[LAB]") return {TokenKind::domain_marker, static_cast<int64_t>(Domain::measurement)};

    if (text.starts_with("GENDER_")) {
        auto s = text.substr(7);
        if (s == "M") return {TokenKind::gender, static_cast<int64_t>(Gender::male)};
        if (s == "F") return {TokenKind::gender, static_cast<int64_t>(Gender::female)};
        if (s == "U") return {TokenKind::gender, static_cast<int64_t>(Gender::unknown)};
        bad_token(text);
    }
    if (text.starts_with("AGE_")) {
        int64_t v;
        if (!parse_int_payload(text.substr(4), v) || v < 0 || v > 119) bad_token(text);
        return {TokenKind::age, v};
    }
    auto parse_visit = [&](std::string_view s, TokenKind kind) -> TokenInfo {
        if (s == "OUT") return {kind, static_cast<int64_t>(VisitType::outpatient)};
        if (s == "IN") return {kind, static_cast<int64_t>(VisitType::inpatient)};
        if (s == "ER") return {kind, static_cast<int64_t>(VisitType::emergency)};
        bad_token(text);
    };
    if (text.starts_with("VS_")) return parse_visit(text.substr(3), TokenKind::visit_start);
    if (text.starts_with("VE_")) return parse_visit(text.substr(3), TokenKind::visit_end);
    if (text.starts_with("C_")) {
        int64_t v;
        if (!parse_int_payload(text.substr(2), v)) bad_token(text);
        return {TokenKind::concept_code, v};
    }
    if (text.starts_with("TIME_")) {
        for (int b = 0; b < kTimeBucketCount; ++b) {
            if (text == kBucketNames[static_cast<size_t>(b)]) return {TokenKind::time_bucket, b};
        }
        bad_token(text);
    }
    if (text.starts_with("Q")) {
        int64_t v;
        if (!parse_int_payload(text.substr(1), v) || v < 1 || v > 10) bad_token(text);
        return {TokenKind::quantile, v};
    }
    bad_token(text);
}

}  // namespace ckdprog
