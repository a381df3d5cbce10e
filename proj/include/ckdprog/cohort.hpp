#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ckdprog/dataset.hpp"

namespace ckdprog {

enum class ThresholdDirection : uint8_t { below, above };

enum class InclusionReason : uint8_t { diagnosis, egfr_persistent, uacr_persistent };

const char* to_string(InclusionReason r);

struct CohortConfig {
    std::set<int64_t> ckd_concept_ids = {46271022, 193782};  // CKD, ESRD
    int64_t egfr_concept_id = 3049187;
    int64_t uacr_concept_id = 3053283;
    double egfr_stage3a_threshold = 60.0;  // mL/min/1.73 m^2
    double egfr_stage5_threshold = 15.0;
    double uacr_threshold = 30.0;  // mg/g
    int persistence_days = 90;

    void validate() const;
};

struct CohortMember {
    int64_t person_id = 0;
    std::set<InclusionReason> inclusion_reasons;
    std::optional<Date> stage3a_index;
    std::optional<Date> stage5_index;
    Date last_observed = 0;
};

// Earliest measurement timestamp t such that the value at t satisfies the
// threshold predicate (strict < for below, strict > for above), some later
// satisfying measurement t' has t' - t >= persistence_days, and no measurement
// strictly between t and t' violates the predicate. Requires the series sorted
// by time (throws otherwise). Returns nullopt when no run qualifies; in
// particular a single satisfying measurement never qualifies on its own.
std::optional<Timestamp> persistent_threshold(
    const std::vector<std::pair<Timestamp, double>>& series, double threshold,
    int persistence_days, ThresholdDirection direction);

// Applies the inclusion/exclusion criteria and derives per-patient stage
// index dates from the eGFR series. Membership requires at least one eGFR
// measurement plus any of: a qualifying diagnosis, persistent eGFR below the
// stage-3a threshold, or persistent uACR above its threshold.
std::vector<CohortMember> build_cohort(const Dataset& ds, const CohortConfig& cfg);

// Value-bearing measurement series for one concept, in event order.
std::vector<std::pair<Timestamp, double>> measurement_series(const Dataset& ds, int64_t person_id,
                                                             int64_t concept_id);

// Manifest CSV: person_id,inclusion_reasons,stage3a_index,stage5_index,last_observed
void write_cohort_manifest(const std::vector<CohortMember>& members, const std::string& path);
std::vector<CohortMember> read_cohort_manifest(const std::string& path);

}  // namespace ckdprog
