#include "ckdprog/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ckdprog/csv.hpp"
#include "ckdprog/dataset.hpp"
#include "ckdprog/rng.hpp"
#include "ckdprog/timeutil.hpp"

namespace ckdprog {

void SynthConfig::validate() const {
    if (n_patients < 0) throw std::runtime_error("n_patients must be non-negative");
    if (progressor_fraction < 0 || progressor_fraction > 1) {
        throw std::runtime_error("progressor_fraction must lie in [0, 1]");
    }
    if (visits_per_year <= 0) throw std::runtime_error("visits_per_year must be positive");
    auto ordered = [](const std::pair<double, double>& r) { return r.first <= r.second; };
    if (!ordered(egfr_start_range) || !ordered(progressor_slope_range) ||
        !ordered(stable_slope_range)) {
        throw std::runtime_error("range bounds must be ordered (lo, hi)");
    }
    if (noise_sd < 0) throw std::runtime_error("noise_sd must be non-negative");
    if (n_background_concepts < 1) throw std::runtime_error("n_background_concepts must be >= 1");
}

namespace {

// Three trajectory archetypes. Late accelerators start on a stable-looking
// slow decline, then switch to a steep slope a couple of years after crossing
// stage 3a. Their pre-index windows are indistinguishable from stable
// patients, but they still reach stage 5 — so long-horizon cells pick up
// cases that carry no advance signal, and predictive performance degrades as
// the follow-up horizon stretches (short horizons are untouched because the
// switch delay keeps their stage-5 dates well past one year).
enum class Archetype { progressor, stable, late };

// Share of the non-progressor pool that late-accelerates, and the dynamics of
// the switch. The delay is measured from the (noise-free) stage-3a crossing;
// its lower bound keeps even the earliest accelerated stage-5 arrival out of
// the 180- and 365-day follow-up windows.
constexpr double kLateFraction = 0.35;
constexpr double kLateDelayMinYears = 2.0;
constexpr double kLateDelayMaxYears = 3.5;
constexpr std::pair<double, double> kLateSlopeRange = {-90.0, -30.0};

struct PatientPlan {
    PersonRecord person;
    std::vector<VisitRecord> visits;
    std::vector<EventRecord> events;  // event ids assigned later
    Archetype kind = Archetype::stable;
    std::vector<std::pair<Timestamp, double>> egfr_values;
};

double round2(double v) { return std::round(v * 100.0) / 100.0; }

PatientPlan generate_patient(const SynthConfig& cfg, int index, Archetype kind) {
    Pcg32 rng(cfg.seed, static_cast<uint64_t>(index) + 1);  // stream 0 reserved
    PatientPlan plan;
    plan.kind = kind;

    PersonRecord& p = plan.person;
    p.person_id = index + 1;
    double gu = rng.uniform();
    p.gender = gu < 0.48 ? Gender::male : (gu < 0.96 ? Gender::female : Gender::unknown);
    p.birth_year = static_cast<int>(rng.uniform_int(1935, 1985));

    const Date obs_start = static_cast<Date>(days_from_civil(2010, 1, 1) + rng.uniform_int(0, 364));
    const double obs_years = rng.uniform(6.0, 9.0);
    const Date obs_end = obs_start + static_cast<Date>(obs_years * 365.0);

    const double egfr0 = rng.uniform(cfg.egfr_start_range.first, cfg.egfr_start_range.second);
    const auto& slope_range =
        kind == Archetype::progressor ? cfg.progressor_slope_range : cfg.stable_slope_range;
    const double slope = rng.uniform(slope_range.first, slope_range.second);
    const double plateau = rng.uniform(25.0, 50.0);
    // Kidney function holds steady for a while before the decline starts, so
    // the pre-index assessment window is populated even for fast decliners.
    const double lead_years = rng.uniform(0.5, 2.0);

    // Late accelerators switch to a steep slope this long (in post-lead
    // trajectory years) after the point where the slow decline crosses 60.
    double switch_years = 0.0, late_slope = 0.0;
    if (kind == Archetype::late) {
        switch_years = (egfr0 - 60.0) / -slope +
                       rng.uniform(kLateDelayMinYears, kLateDelayMaxYears);
        late_slope = rng.uniform(kLateSlopeRange.first, kLateSlopeRange.second);
    }

    // Operative decline rate at a given day; the late switch is the only case
    // where it changes over a patient's history.
    auto slope_at = [&](Date day) {
        double years = static_cast<double>(day - obs_start) / 365.0 - lead_years;
        return kind == Archetype::late && years > switch_years ? late_slope : slope;
    };

    auto egfr_at = [&](Date day) {
        double years = std::max(0.0, static_cast<double>(day - obs_start) / 365.0 - lead_years);
        double v;
        if (kind == Archetype::late && years > switch_years) {
            v = std::max(egfr0 + slope * switch_years + late_slope * (years - switch_years), 6.0);
        } else {
            v = egfr0 + slope * years;
            v = std::max(v, kind == Archetype::stable ? plateau : 6.0);
        }
        return v + rng.gauss(0.0, cfg.noise_sd);
    };

    // Severity signal that scales with how fast this kidney is currently
    // failing, not with the group label: slow decliners look the same in
    // every group, and late accelerators look stable right up to the switch,
    // so longer prediction horizons are intrinsically harder.
    auto severity_at = [&](Date day) { return -slope_at(day); };  // eGFR lost per year
    auto marker_p_at = [&](Date day) {
        return std::clamp(0.02 + (severity_at(day) - 15.0) * 0.0022, 0.02, 0.32);
    };
    auto uacr_base_at = [&](Date day) { return 20.0 + 1.2 * severity_at(day); };
    bool diagnosed = false;

    const double mean_gap_days = 365.0 / cfg.visits_per_year;
    int64_t next_visit_local_id = 1;
    Date day = obs_start;
    while (day < obs_end || plan.visits.empty()) {
        VisitRecord v;
        v.person_id = p.person_id;
        v.visit_id = p.person_id * 100000 + next_visit_local_id++;
        double tu = rng.uniform();
        int64_t duration;
        if (tu < 0.85) {
            v.visit_type = VisitType::outpatient;
            duration = rng.uniform_int(30 * 60, 4 * 3600);
        } else if (tu < 0.95) {
            v.visit_type = VisitType::inpatient;
            duration = rng.uniform_int(kSecondsPerDay, 3 * kSecondsPerDay);
        } else {
            v.visit_type = VisitType::emergency;
            duration = rng.uniform_int(2 * 3600, 8 * 3600);
        }
        v.start = day_start(day) + 8 * 3600 + rng.uniform_int(0, 8 * 3600 - 1);
        v.end = v.start + duration;
        plan.visits.push_back(v);

        auto event_time = [&]() { return v.start + rng.uniform_int(0, duration); };
        auto add_event = [&](Domain domain, int64_t concept_id, Timestamp at,
                             std::optional<int64_t> visit_id, std::optional<double> value) {
            EventRecord e;
            e.domain = domain;
            e.concept_id = concept_id;
            e.at = at;
            e.person_id = p.person_id;
            e.visit_id = visit_id;
            e.value = value;
            plan.events.push_back(e);
        };

        // eGFR panel: first visit always, then most visits.
        if (plan.visits.size() == 1 || rng.bernoulli(0.85)) {
            Timestamp at = event_time();
            double value = round2(egfr_at(day));
            add_event(Domain::measurement, SynthConcepts::egfr, at, v.visit_id, value);
            plan.egfr_values.emplace_back(at, value);
        }
        if (rng.bernoulli(0.5)) {
            double value = round2(std::max(1.0, uacr_base_at(day) + rng.gauss(0.0, 8.0)));
            add_event(Domain::measurement, SynthConcepts::uacr, event_time(), v.visit_id, value);
        }
        if (rng.bernoulli(0.6)) {
            add_event(Domain::measurement, SynthConcepts::lab_glucose, event_time(), v.visit_id,
                      round2(rng.gauss(100.0, 15.0)));
        }
        if (rng.bernoulli(0.6)) {
            add_event(Domain::measurement, SynthConcepts::lab_hemoglobin, event_time(), v.visit_id,
                      round2(rng.gauss(13.0, 1.5)));
        }
        if (rng.bernoulli(0.02)) {
            add_event(Domain::measurement, SynthConcepts::lab_unvalued, event_time(), v.visit_id,
                      std::nullopt);
        }

        // Background events; the five marker condition/drug pairs are drawn
        // independently per visit with severity-scaled rates, so the marker
        // *count* in a window tracks how fast the kidney is failing.
        for (int k = 0; k < 2; ++k) {
            if (rng.bernoulli(0.4)) {
                add_event(Domain::condition,
                          SynthConcepts::background_condition_base +
                              rng.uniform_int(0, cfg.n_background_concepts - 1),
                          event_time(), v.visit_id, std::nullopt);
            }
        }
        const double marker_p = marker_p_at(day);
        for (int k = 0; k < 5; ++k) {
            if (rng.bernoulli(marker_p)) {
                add_event(Domain::condition, SynthConcepts::marker_condition_base + k,
                          event_time(), v.visit_id, std::nullopt);
            }
        }
        if (rng.bernoulli(0.5)) {
            add_event(Domain::drug,
                      SynthConcepts::background_drug_base +
                          rng.uniform_int(0, cfg.n_background_concepts - 1),
                      event_time(), v.visit_id, std::nullopt);
        }
        for (int k = 0; k < 5; ++k) {
            if (rng.bernoulli(marker_p)) {
                add_event(Domain::drug, SynthConcepts::marker_drug_base + k, event_time(),
                          v.visit_id, std::nullopt);
            }
        }
        if (rng.bernoulli(0.3)) {
            add_event(Domain::procedure,
                      SynthConcepts::background_procedure_base +
                          rng.uniform_int(0, cfg.n_background_concepts - 1),
                      event_time(), v.visit_id, std::nullopt);
        }

        // CKD diagnosis once the trajectory has crossed the stage-3a line.
        if (!diagnosed && !plan.egfr_values.empty() && plan.egfr_values.back().second < 60.0 &&
            rng.bernoulli(0.6)) {
            add_event(Domain::condition, SynthConcepts::ckd_diagnosis, event_time(), v.visit_id,
                      std::nullopt);
            diagnosed = true;
        }

        // Occasional ambulatory event one hour before the visit; visits are
        // at least a day apart so this never lands inside another visit.
        if (rng.bernoulli(0.08)) {
            add_event(Domain::condition,
                      SynthConcepts::background_condition_base +
                          rng.uniform_int(0, cfg.n_background_concepts - 1),
                      v.start - 3600, std::nullopt, std::nullopt);
        }

        int gap_days = std::max<int64_t>(1, rng.uniform_int(
                                                static_cast<int64_t>(mean_gap_days * 0.5),
                                                static_cast<int64_t>(mean_gap_days * 1.5)));
        day = date_of(v.end) + gap_days;
    }
    return plan;
}

}  // namespace

SynthReport generate_synthetic(const SynthConfig& cfg, const std::string& dir_path) {
    cfg.validate();

    const int n_progressors =
        static_cast<int>(std::lround(cfg.n_patients * cfg.progressor_fraction));
    const int n_late = static_cast<int>(
        std::lround((cfg.n_patients - n_progressors) * kLateFraction));

    std::vector<PersonRecord> persons;
    std::vector<VisitRecord> visits;
    std::vector<EventRecord> events;
    SynthReport report;

    double prog_sum = 0, stable_sum = 0;
    size_t prog_n = 0, stable_n = 0;

    for (int i = 0; i < cfg.n_patients; ++i) {
        Archetype kind = i < n_progressors ? Archetype::progressor
                         : i < n_progressors + n_late ? Archetype::late
                                                      : Archetype::stable;
        PatientPlan plan = generate_patient(cfg, i, kind);
        persons.push_back(plan.person);
        for (auto& v : plan.visits) visits.push_back(v);
        for (auto& e : plan.events) events.push_back(e);

        if (!plan.egfr_values.empty()) {
            Timestamp last = plan.egfr_values.back().first;
            for (const auto& [at, value] : plan.egfr_values) {
                if (last - at <= 365 * kSecondsPerDay) {
                    // Late accelerators progress too, so they belong in the
                    // progressing bucket of the planted-signal check.
                    if (plan.kind != Archetype::stable) {
                        prog_sum += value;
                        ++prog_n;
                    } else {
                        stable_sum += value;
                        ++stable_n;
                    }
                }
            }
        }
    }

    // Stable global event ids: per-domain counters in person order.
    int64_t next_id[4] = {1, 1, 1, 1};
    for (auto& e : events) e.event_id = next_id[static_cast<size_t>(e.domain)]++;

    report.n_persons = persons.size();
    report.n_visits = visits.size();
    for (const auto& e : events) {
        switch (e.domain) {
            case Domain::condition: ++report.n_conditions; break;
            case Domain::drug: ++report.n_drugs; break;
            case Domain::procedure: ++report.n_procedures; break;
            case Domain::measurement: ++report.n_measurements; break;
        }
    }
    report.progressor_final_year_egfr = prog_n ? prog_sum / static_cast<double>(prog_n) : 0.0;
    report.stable_final_year_egfr = stable_n ? stable_sum / static_cast<double>(stable_n) : 0.0;
    if (prog_n && stable_n &&
        report.progressor_final_year_egfr >= report.stable_final_year_egfr) {
        throw std::runtime_error("synthetic signal check failed: progressor final-year eGFR not "
                                 "below the stable group");
    }

    Dataset ds(std::move(persons), std::move(visits), std::move(events));
    save_dataset(ds, dir_path);
    return report;
}

}  // namespace ckdprog
