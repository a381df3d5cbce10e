#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ckdprog/dataset.hpp"
#include "ckdprog/quantile.hpp"
#include "ckdprog/tokens.hpp"

namespace ckdprog {

struct TokenSequence {
    int64_t person_id = 0;
    std::vector<std::string> tokens;
    std::vector<Timestamp> times;  // parallel; special tokens inherit the segment time
    std::optional<int> label;      // 1 = case, 0 = control
};

// Fixed special ids; everything else is assigned in order of first appearance
// while building from training sequences.
class Vocabulary {
   public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kCls = 1;
    static constexpr int32_t kSep = 2;
    static constexpr int32_t kMask = 3;
    static constexpr int32_t kUnk = 4;

    Vocabulary();

    int32_t add(const std::string& token);  // returns existing id if present
    void add_sequence(const TokenSequence& seq);

    // Unknown tokens map to [UNK].
    int32_t id_of(const std::string& token) const;
    const std::string& token_of(int32_t id) const;
    int32_t size() const { return static_cast<int32_t>(tokens_.size()); }

    bool is_special(int32_t id) const { return id >= 0 && id <= kUnk; }

    // One token text per line; line number (0-based) = id.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    // FNV-1a over the newline-joined token list; checkpoints embed it so a
    // model is never evaluated against the wrong vocabulary.
    uint64_t content_hash() const;

   private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int32_t> ids_;
};

// Optional bounds for token timestamps. When a visit straddles the window,
// the emitted segment-boundary token times are clamped so that no token time
// escapes [lo, hi]; gaps are computed from the clamped times.
struct TokenTimeClamp {
    Timestamp lo;
    Timestamp hi;
};

// Converts a chronological slice of one person's events into a token
// sequence:
//   [CLS] GENDER, then per segment: [SEP] AGE (VS ... events ... VE | events)
// with time-interval tokens between consecutive emissions inside a segment.
// Visit segments cover events linked to a visit; events without a visit form
// zero-length segments of their own. Measurements with a value and a fitted
// concept get a quantile token after their concept token.
TokenSequence tokenize(const std::vector<EventRecord>& slice, const PersonRecord& person,
                       const Dataset& ds, const QuantileMap& qm,
                       std::optional<TokenTimeClamp> clamp = std::nullopt);

struct EncodedSequence {
    std::vector<int32_t> ids;   // length max_len
    std::vector<uint8_t> mask;  // 1 = real token
};

// Unknown tokens become [UNK]. Sequences longer than max_len keep [CLS] and
// the gender token plus the most recent max_len-2 tokens; shorter ones are
// right-padded.
EncodedSequence encode(const TokenSequence& seq, const Vocabulary& vocab, int max_len);

// One record per line: person_id TAB label-or-empty TAB space-joined tokens.
void write_sequences(const std::vector<TokenSequence>& seqs, const std::string& path);
std::vector<TokenSequence> read_sequences(const std::string& path);

}  // namespace ckdprog
