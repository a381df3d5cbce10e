#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "ckdprog/dataset.hpp"

namespace ckdprog {

enum class TokenKind : uint8_t {
    pad,
    cls,
    sep,
    mask,
    unk,
    gender,       // payload: Gender
    age,          // payload: years 0..119
    visit_start,  // payload: VisitType
    visit_end,    // payload: VisitType
    domain_marker,  // payload: Domain ([CONDITION]/[DRUG]/[PROCEDURE]/[LAB])
    concept_code,  // payload: concept_id
    quantile,     // payload: 1..10
    time_bucket,  // payload: bucket index 0..12 (12 = over one year)
};

struct TokenInfo {
    TokenKind kind = TokenKind::unk;
    int64_t payload = 0;

    bool operator==(const TokenInfo&) const = default;
};

// Token text <-> structured form. Every token text parses back to exactly the
// kind/payload that produced it.
std::string format_token(const TokenInfo& info);
TokenInfo parse_token(std::string_view text);

std::string gender_token(Gender g);
std::string age_token(int years);  // clamped to [0, 119]
std::string visit_start_token(VisitType t);
std::string visit_end_token(VisitType t);
std::string domain_marker_token(Domain d);
std::string concept_token(int64_t concept_id);
std::string quantile_token(int q);

constexpr int kTimeBucketCount = 13;  // 12 bounded intervals plus the over-a-year bucket

// Bucket for the gap between consecutive tokens. Gaps of five minutes or less
// produce no token. Buckets are half-open (lo, hi] over boundaries
// 5m, 15m, 1h, 2h, 6h, 12h, 1d, 3d, 1w, 30d, 90d, 180d, 365d, with everything
// longer in the final over-a-year bucket. Throws on negative gaps.
std::optional<std::string> time_bucket(int64_t gap_seconds);

const char* time_bucket_name(int bucket_index);

}  // namespace ckdprog
