#include "ckdprog/sequence.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "ckdprog/csv.hpp"
#include "ckdprog/rng.hpp"

namespace ckdprog {

Vocabulary::Vocabulary() {
    for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) add(t);
}

int32_t Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int32_t id = static_cast<int32_t>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
}

void Vocabulary::add_sequence(const TokenSequence& seq) {
    for (const auto& t : seq.tokens) add(t);
}

int32_t Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int32_t id) const {
    if (id < 0 || id >= size()) throw std::runtime_error("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    write_file(path, out);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
    Vocabulary v;
    std::string line;
    int32_t id = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (id <= kUnk) {
            if (line != v.tokens_[static_cast<size_t>(id)]) {
                throw std::runtime_error(path + ": line " + std::to_string(id + 1) +
                                         " must be the fixed special token " +
                                         v.tokens_[static_cast<size_t>(id)]);
            }
        } else {
            if (v.ids_.count(line)) throw std::runtime_error(path + ": duplicate token " + line);
            v.add(line);
        }
        ++id;
    }
    if (id <= kUnk) throw std::runtime_error(path + ": vocabulary shorter than the special set");
    return v;
}

uint64_t Vocabulary::content_hash() const {
    std::string joined;
    for (const auto& t : tokens_) {
        joined += t;
        joined += '\n';
    }
    return fnv1a64(joined);
}

namespace {

struct Segment {
    Timestamp start = 0;
    const VisitRecord* visit = nullptr;  // null for ambulatory singletons
    std::vector<const EventRecord*> events;
    int64_t order_id = 0;  // visit_id or event_id, deterministic tie-break
};

void emit_event(TokenSequence& seq, const EventRecord& e, const QuantileMap& qm) {
    seq.tokens.push_back(domain_marker_token(e.domain));
    seq.times.push_back(e.at);
    seq.tokens.push_back(concept_token(e.concept_id));
    seq.times.push_back(e.at);
    if (e.domain == Domain::measurement && e.value && qm.has_concept(e.concept_id)) {
        seq.tokens.push_back(quantile_token(qm.assign(e.concept_id, *e.value)));
        seq.times.push_back(e.at);
    }
}

void emit_gap(TokenSequence& seq, Timestamp from, Timestamp to) {
    if (to < from) return;  // guard for clamped boundaries; no token
    if (auto tok = time_bucket(to - from)) {
        seq.tokens.push_back(*tok);
        seq.times.push_back(to);
    }
}

}  // namespace

TokenSequence tokenize(const std::vector<EventRecord>& slice, const PersonRecord& person,
                       const Dataset& ds, const QuantileMap& qm,
                       std::optional<TokenTimeClamp> clamp) {
    for (size_t i = 1; i < slice.size(); ++i) {
        if (slice[i].at < slice[i - 1].at) {
            throw std::runtime_error("assessment slice is not chronologically ordered");
        }
    }

    TokenSequence seq;
    seq.person_id = person.person_id;

    // Group events into segments: one per visit that has events in the slice,
    // plus a zero-length segment per ambulatory event.
    std::unordered_map<int64_t, size_t> visit_segments;
    std::vector<Segment> segments;
    for (const auto& e : slice) {
        if (e.visit_id) {
            auto it = visit_segments.find(*e.visit_id);
            if (it == visit_segments.end()) {
                const VisitRecord* v = ds.find_visit(*e.visit_id);
                if (!v) {
                    throw std::runtime_error("slice references unknown visit " +
                                             std::to_string(*e.visit_id));
                }
                Segment s;
                s.visit = v;
                s.start = v->start;
                s.order_id = v->visit_id;
                visit_segments.emplace(*e.visit_id, segments.size());
                segments.push_back(std::move(s));
                segments.back().events.push_back(&e);
            } else {
                segments[it->second].events.push_back(&e);
            }
        } else {
            Segment s;
            s.start = e.at;
            s.order_id = e.event_id;
            s.events.push_back(&e);
            segments.push_back(std::move(s));
        }
    }
    std::sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
        if (a.start != b.start) return a.start < b.start;
        bool a_visit = a.visit != nullptr;
        bool b_visit = b.visit != nullptr;
        if (a_visit != b_visit) return a_visit;  // visit segments first on ties
        return a.order_id < b.order_id;
    });

    auto clamp_time = [&](Timestamp t) {
        if (!clamp) return t;
        return std::clamp(t, clamp->lo, clamp->hi);
    };

    // [CLS] and the gender token inherit the first segment's time so the
    // whole sequence carries non-decreasing timestamps.
    Timestamp lead_time = segments.empty() ? 0 : clamp_time(segments.front().start);
    seq.tokens.push_back("[CLS]");
    seq.times.push_back(lead_time);
    seq.tokens.push_back(gender_token(person.gender));
    seq.times.push_back(lead_time);

    for (const auto& s : segments) {
        Timestamp seg_start = clamp_time(s.start);
        int age = year_of(date_of(s.start)) - person.birth_year;

        seq.tokens.push_back("[SEP]");
        seq.times.push_back(seg_start);
        seq.tokens.push_back(age_token(age));
        seq.times.push_back(seg_start);

        if (s.visit) {
            seq.tokens.push_back(visit_start_token(s.visit->visit_type));
            seq.times.push_back(seg_start);
            Timestamp prev = seg_start;
            for (const EventRecord* e : s.events) {
                emit_gap(seq, prev, e->at);
                emit_event(seq, *e, qm);
                prev = e->at;
            }
            Timestamp seg_end = clamp_time(s.visit->end);
            emit_gap(seq, prev, seg_end);
            seq.tokens.push_back(visit_end_token(s.visit->visit_type));
            seq.times.push_back(seg_end);
        } else {
            // Ambulatory event: zero-length segment, no VS/VE pair.
            for (const EventRecord* e : s.events) emit_event(seq, *e, qm);
        }
    }
    return seq;
}

EncodedSequence encode(const TokenSequence& seq, const Vocabulary& vocab, int max_len) {
    if (max_len < 2) throw std::runtime_error("max_len must be at least 2");
    EncodedSequence out;
    out.ids.assign(static_cast<size_t>(max_len), Vocabulary::kPad);
    out.mask.assign(static_cast<size_t>(max_len), 0);

    const size_t n = seq.tokens.size();
    std::vector<size_t> take;
    if (n <= static_cast<size_t>(max_len)) {
        for (size_t i = 0; i < n; ++i) take.push_back(i);
    } else {
        // Keep [CLS] and the gender token, then the most recent history.
        take.push_back(0);
        take.push_back(1);
        size_t tail = static_cast<size_t>(max_len) - 2;
        for (size_t i = n - tail; i < n; ++i) take.push_back(i);
    }
    for (size_t j = 0; j < take.size(); ++j) {
        out.ids[j] = vocab.id_of(seq.tokens[take[j]]);
        out.mask[j] = 1;
    }
    return out;
}

void write_sequences(const std::vector<TokenSequence>& seqs, const std::string& path) {
    std::string out;
    for (const auto& s : seqs) {
        out += std::to_string(s.person_id);
        out += '\t';
        if (s.label) out += std::to_string(*s.label);
        out += '\t';
        for (size_t i = 0; i < s.tokens.size(); ++i) {
            if (i) out += ' ';
            out += s.tokens[i];
        }
        out += '\n';
    }
    write_file(path, out);
}

std::vector<TokenSequence> read_sequences(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open sequence file: " + path);
    std::vector<TokenSequence> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected three tab-separated fields");
        }
        TokenSequence seq;
        seq.person_id = std::stoll(line.substr(0, t1));
        std::string label = line.substr(t1 + 1, t2 - t1 - 1);
        if (!label.empty()) seq.label = std::stoi(label);
        size_t start = t2 + 1;
        while (start <= line.size()) {
            size_t sp = line.find(' ', start);
            size_t end = sp == std::string::npos ? line.size() : sp;
            if (end > start) seq.tokens.emplace_back(line.substr(start, end - start));
            if (sp == std::string::npos) break;
            start = sp + 1;
        }
        // Times are not persisted; the file stores token text only.
        seq.times.assign(seq.tokens.size(), 0);
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace ckdprog
