#include "ckdprog/cohort.hpp"

#include <algorithm>
#include <stdexcept>

#include "ckdprog/csv.hpp"

namespace ckdprog {

const char* to_string(InclusionReason r) {
    switch (r) {
        case InclusionReason::diagnosis: return "diagnosis";
        case InclusionReason::egfr_persistent: return "egfr_persistent";
        case InclusionReason::uacr_persistent: return "uacr_persistent";
    }
    return "diagnosis";
}

void CohortConfig::validate() const {
    if (egfr_stage3a_threshold <= 0 || egfr_stage5_threshold <= 0 || uacr_threshold <= 0) {
        throw std::runtime_error("cohort thresholds must be positive");
    }
    if (egfr_stage5_threshold >= egfr_stage3a_threshold) {
        throw std::runtime_error("stage-5 threshold must be below the stage-3a threshold");
    }
    if (persistence_days < 1) throw std::runtime_error("persistence_days must be >= 1");
}

std::optional<Timestamp> persistent_threshold(
    const std::vector<std::pair<Timestamp, double>>& series, double threshold,
    int persistence_days, ThresholdDirection direction) {
    for (size_t i = 1; i < series.size(); ++i) {
        if (series[i].first < series[i - 1].first) {
            throw std::runtime_error("measurement series is not sorted by time");
        }
    }
    auto satisfies = [&](double v) {
        return direction == ThresholdDirection::below ? v < threshold : v > threshold;
    };
    const int64_t span_needed = static_cast<int64_t>(persistence_days) * kSecondsPerDay;

    // A qualifying (t, t') pair lies inside one maximal run of consecutive
    // satisfying measurements, so the answer is the start of the first maximal
    // run whose time span reaches persistence_days.
    size_t i = 0;
    while (i < series.size()) {
        if (!satisfies(series[i].second)) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j + 1 < series.size() && satisfies(series[j + 1].second)) ++j;
        if (series[j].first - series[i].first >= span_needed) return series[i].first;
        i = j + 1;
    }
    return std::nullopt;
}

std::vector<std::pair<Timestamp, double>> measurement_series(const Dataset& ds, int64_t person_id,
                                                             int64_t concept_id) {
    std::vector<std::pair<Timestamp, double>> out;
    for (const auto& e : ds.events_for(person_id)) {
        if (e.domain == Domain::measurement && e.concept_id == concept_id && e.value) {
            out.emplace_back(e.at, *e.value);
        }
    }
    return out;
}

std::vector<CohortMember> build_cohort(const Dataset& ds, const CohortConfig& cfg) {
    cfg.validate();
    std::vector<CohortMember> members;
    for (const auto& p : ds.persons()) {
        auto events = ds.events_for(p.person_id);
        if (events.empty()) continue;

        auto egfr = measurement_series(ds, p.person_id, cfg.egfr_concept_id);
        if (egfr.empty()) continue;  // exclusion: eGFR never measured

        CohortMember m;
        m.person_id = p.person_id;

        bool has_dx = false;
        for (const auto& e : events) {
            if (e.domain == Domain::condition && cfg.ckd_concept_ids.count(e.concept_id)) {
                has_dx = true;
                break;
            }
        }
        if (has_dx) m.inclusion_reasons.insert(InclusionReason::diagnosis);

        auto stage3a = persistent_threshold(egfr, cfg.egfr_stage3a_threshold,
                                            cfg.persistence_days, ThresholdDirection::below);
        if (stage3a) m.inclusion_reasons.insert(InclusionReason::egfr_persistent);

        auto uacr = measurement_series(ds, p.person_id, cfg.uacr_concept_id);
        auto uacr_onset = persistent_threshold(uacr, cfg.uacr_threshold, cfg.persistence_days,
                                               ThresholdDirection::above);
        if (uacr_onset) m.inclusion_reasons.insert(InclusionReason::uacr_persistent);

        if (m.inclusion_reasons.empty()) continue;

        if (stage3a) m.stage3a_index = date_of(*stage3a);
        auto stage5 = persistent_threshold(egfr, cfg.egfr_stage5_threshold, cfg.persistence_days,
                                           ThresholdDirection::below);
        if (stage5) m.stage5_index = date_of(*stage5);
        m.last_observed = date_of(events.back().at);
        members.push_back(std::move(m));
    }
    return members;
}

void write_cohort_manifest(const std::vector<CohortMember>& members, const std::string& path) {
    std::string out = "person_id,inclusion_reasons,stage3a_index,stage5_index,last_observed\n";
    for (const auto& m : members) {
        out += std::to_string(m.person_id);
        out += ',';
        bool first = true;
        for (InclusionReason r : m.inclusion_reasons) {
            if (!first) out += '|';
            out += to_string(r);
            first = false;
        }
        out += ',';
        if (m.stage3a_index) out += format_date(*m.stage3a_index);
        out += ',';
        if (m.stage5_index) out += format_date(*m.stage5_index);
        out += ',';
        out += format_date(m.last_observed);
        out += '\n';
    }
    write_file(path, out);
}

std::vector<CohortMember> read_cohort_manifest(const std::string& path) {
    CsvReader r(path);
    r.expect_header({"person_id", "inclusion_reasons", "stage3a_index", "stage5_index",
                     "last_observed"});
    std::vector<CohortMember> out;
    std::vector<std::string> f;
    while (r.next_row(f)) {
        if (f.size() != 5) r.fail("expected 5 columns");
        CohortMember m;
        m.person_id = r.to_int(f[0], "person_id");
        size_t start = 0;
        const std::string& reasons = f[1];
        while (start < reasons.size()) {
            size_t bar = reasons.find('|', start);
            std::string tag = reasons.substr(start, bar == std::string::npos ? bar : bar - start);
            if (tag == "diagnosis") m.inclusion_reasons.insert(InclusionReason::diagnosis);
            else if (tag == "egfr_persistent") m.inclusion_reasons.insert(InclusionReason::egfr_persistent);
            else if (tag == "uacr_persistent") m.inclusion_reasons.insert(InclusionReason::uacr_persistent);
            else r.fail_column("inclusion_reasons", "unknown tag '" + tag + "'");
            if (bar == std::string::npos) break;
            start = bar + 1;
        }
        if (m.inclusion_reasons.empty()) r.fail_column("inclusion_reasons", "empty");
        if (!f[2].empty()) m.stage3a_index = parse_date(f[2]);
        if (!f[3].empty()) m.stage5_index = parse_date(f[3]);
        m.last_observed = parse_date(f[4]);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace ckdprog
