#pragma once

#include <cstdint>
#include <string>
#include <utility>

namespace ckdprog {

// Knobs for the seeded synthetic OMOP-shaped dataset. Progressors follow a
// linear eGFR decline (after a healthy lead-in) that crosses the stage-3a and
// stage-5 thresholds; the wide slope range spreads stage-3a-to-stage-5 gaps
// from a few months to over two years, so every follow-up horizon sees both
// cases and controls. Stable patients decline slowly onto a plateau above
// stage 5. A fixed share of the stable-slope pool are late accelerators:
// they look stable through the index date, then switch to a steep decline a
// couple of years later and do reach stage 5. Marker condition/drug rates
// and the uACR level scale with the current decline rate (not a group flag),
// so pre-index windows carry severity signal for ordinary progressors but
// none for late accelerators — which is what makes long follow-up horizons
// genuinely harder than short ones, mirroring real progression prediction.
struct SynthConfig {
    int n_patients = 2000;
    double progressor_fraction = 0.3;
    double visits_per_year = 16.0;
    std::pair<double, double> egfr_start_range = {70.0, 90.0};
    std::pair<double, double> progressor_slope_range = {-150.0, -20.0};  // eGFR per year
    std::pair<double, double> stable_slope_range = {-12.0, -4.0};
    double noise_sd = 2.0;
    int n_background_concepts = 20;  // per domain
    uint64_t seed = 42;

    void validate() const;
};

// Concept-id layout used by the generator (documented here so cohort
// configuration can reference the same ids).
struct SynthConcepts {
    static constexpr int64_t egfr = 3049187;
    static constexpr int64_t uacr = 3053283;
    static constexpr int64_t ckd_diagnosis = 46271022;
    static constexpr int64_t esrd_diagnosis = 193782;
    static constexpr int64_t background_condition_base = 1000;
    static constexpr int64_t marker_condition_base = 1100;  // five progression markers
    static constexpr int64_t background_drug_base = 2000;
    static constexpr int64_t marker_drug_base = 2100;
    static constexpr int64_t background_procedure_base = 3000;
    static constexpr int64_t lab_glucose = 4001;
    static constexpr int64_t lab_hemoglobin = 4002;
    static constexpr int64_t lab_unvalued = 4003;  // rows with an empty value column
};

struct SynthReport {
    size_t n_persons = 0;
    size_t n_visits = 0;
    size_t n_conditions = 0;
    size_t n_drugs = 0;
    size_t n_procedures = 0;
    size_t n_measurements = 0;
    // Planted-signal sanity values: mean eGFR over each group's final
    // observation year.
    double progressor_final_year_egfr = 0.0;
    double stable_final_year_egfr = 0.0;
};

// Writes the six-file dataset into dir_path. Deterministic for a fixed seed:
// patient p draws from its own PCG32 substream, so output is byte-identical
// across runs and platforms regardless of generation order.
SynthReport generate_synthetic(const SynthConfig& cfg, const std::string& dir_path);

}  // namespace ckdprog
