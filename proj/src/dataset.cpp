#include "ckdprog/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include "ckdprog/csv.hpp"

namespace ckdprog {

const char* const kPersonFile = "person.csv";
const char* const kVisitFile = "visit_occurrence.csv";
const char* const kConditionFile = "condition_occurrence.csv";
const char* const kDrugFile = "drug_exposure.csv";
const char* const kProcedureFile = "procedure_occurrence.csv";
const char* const kMeasurementFile = "measurement.csv";

const char* to_string(Gender g) {
    switch (g) {
        case Gender::male: return "M";
        case Gender::female: return "F";
        case Gender::unknown: return "U";
    }
    return "U";
}

const char* to_string(VisitType v) {
    switch (v) {
        case VisitType::outpatient: return "OUTPATIENT";
        case VisitType::inpatient: return "INPATIENT";
        case VisitType::emergency: return "EMERGENCY";
    }
    return "OUTPATIENT";
}

const char* to_string(Domain d) {
    switch (d) {
        case Domain::condition: return "condition";
        case Domain::drug: return "drug";
        case Domain::procedure: return "procedure";
        case Domain::measurement: return "measurement";
    }
    return "condition";
}

bool event_order_less(const EventRecord& a, const EventRecord& b) {
    return std::tie(a.at, a.domain, a.concept_id, a.event_id) <
           std::tie(b.at, b.domain, b.concept_id, b.event_id);
}

Dataset::Dataset(std::vector<PersonRecord> persons, std::vector<VisitRecord> visits,
                 std::vector<EventRecord> events)
    : persons_(std::move(persons)), visits_(std::move(visits)) {
    std::sort(persons_.begin(), persons_.end(),
              [](const auto& a, const auto& b) { return a.person_id < b.person_id; });
    std::sort(visits_.begin(), visits_.end(),
              [](const auto& a, const auto& b) { return a.visit_id < b.visit_id; });
    for (size_t i = 0; i < persons_.size(); ++i) person_index_[persons_[i].person_id] = i;
    for (size_t i = 0; i < visits_.size(); ++i) visit_index_[visits_[i].visit_id] = i;
    for (auto& e : events) events_by_person_[e.person_id].push_back(e);
    for (auto& [pid, evs] : events_by_person_) {
        std::sort(evs.begin(), evs.end(), event_order_less);
    }
}

const PersonRecord* Dataset::find_person(int64_t person_id) const {
    auto it = person_index_.find(person_id);
    return it == person_index_.end() ? nullptr : &persons_[it->second];
}

const VisitRecord* Dataset::find_visit(int64_t visit_id) const {
    auto it = visit_index_.find(visit_id);
    return it == visit_index_.end() ? nullptr : &visits_[it->second];
}

std::span<const EventRecord> Dataset::events_for(int64_t person_id,
                                                 std::optional<Timestamp> until) const {
    if (person_index_.find(person_id) == person_index_.end()) {
        throw std::runtime_error("unknown person_id: " + std::to_string(person_id));
    }
    auto it = events_by_person_.find(person_id);
    if (it == events_by_person_.end()) return {};
    std::span<const EventRecord> all(it->second);
    if (!until) return all;
    // Upper bound on timestamp only: every event at exactly `until` stays in.
    auto end = std::upper_bound(it->second.begin(), it->second.end(), *until,
                                [](Timestamp t, const EventRecord& e) { return t < e.at; });
    return all.subspan(0, static_cast<size_t>(end - it->second.begin()));
}

size_t Dataset::event_count() const {
    size_t n = 0;
    for (const auto& [pid, evs] : events_by_person_) n += evs.size();
    return n;
}

namespace {

int current_year() {
    auto now = std::chrono::system_clock::now();
    auto days = std::chrono::duration_cast<std::chrono::hours>(now.time_since_epoch()).count() / 24;
    return year_of(static_cast<Date>(days));
}

Gender parse_gender(CsvReader& r, const std::string& f) {
    if (f == "M") return Gender::male;
    if (f == "F") return Gender::female;
    if (f == "U") return Gender::unknown;
    r.fail_column("gender", "expected M, F or U, got '" + f + "'");
}

VisitType parse_visit_type(CsvReader& r, const std::string& f) {
    if (f == "OUTPATIENT") return VisitType::outpatient;
    if (f == "INPATIENT") return VisitType::inpatient;
    if (f == "EMERGENCY") return VisitType::emergency;
    r.fail_column("visit_type", "expected OUTPATIENT, INPATIENT or EMERGENCY, got '" + f + "'");
}

Timestamp parse_ts(CsvReader& r, const std::string& f, const std::string& column) {
    try {
        return parse_datetime(f);
    } catch (const std::exception& e) {
        r.fail_column(column, e.what());
    }
}

void require_columns(CsvReader& r, const std::vector<std::string>& fields, size_t n) {
    if (fields.size() != n) {
        r.fail("expected " + std::to_string(n) + " columns, got " + std::to_string(fields.size()));
    }
}

void check_unique(std::vector<int64_t> ids, const std::string& what) {
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) {
        throw std::runtime_error("duplicate " + what + ": " + std::to_string(*dup));
    }
}

std::vector<PersonRecord> load_persons(const std::string& path, int year_now) {
    CsvReader r(path);
    r.expect_header({"person_id", "gender", "birth_year"});
    std::vector<PersonRecord> out;
    std::vector<std::string> f;
    while (r.next_row(f)) {
        require_columns(r, f, 3);
        PersonRecord p;
        p.person_id = r.to_int(f[0], "person_id");
        p.gender = parse_gender(r, f[1]);
        p.birth_year = static_cast<int>(r.to_int(f[2], "birth_year"));
        if (p.birth_year < 1900 || p.birth_year > year_now) {
            r.fail_column("birth_year", "out of range [1900, " + std::to_string(year_now) + "]");
        }
        out.push_back(p);
    }
    return out;
}

std::vector<VisitRecord> load_visits(const std::string& path) {
    CsvReader r(path);
    r.expect_header({"visit_id", "person_id", "visit_type", "start_datetime", "end_datetime"});
    std::vector<VisitRecord> out;
    std::vector<std::string> f;
    while (r.next_row(f)) {
        require_columns(r, f, 5);
        VisitRecord v;
        v.visit_id = r.to_int(f[0], "visit_id");
        v.person_id = r.to_int(f[1], "person_id");
        v.visit_type = parse_visit_type(r, f[2]);
        v.start = parse_ts(r, f[3], "start_datetime");
        v.end = parse_ts(r, f[4], "end_datetime");
        if (v.start > v.end) r.fail_column("end_datetime", "visit ends before it starts");
        out.push_back(v);
    }
    return out;
}

void load_events(const std::string& path, Domain domain, bool has_value,
                 std::vector<EventRecord>& out) {
    CsvReader r(path);
    std::vector<std::string> header = {"event_id", "person_id", "visit_id", "concept_id",
                                       "event_datetime"};
    if (has_value) header.push_back("value_as_number");
    r.expect_header(header);
    std::vector<std::string> f;
    while (r.next_row(f)) {
        require_columns(r, f, header.size());
        EventRecord e;
        e.event_id = r.to_int(f[0], "event_id");
        e.domain = domain;
        e.person_id = r.to_int(f[1], "person_id");
        if (!f[2].empty()) e.visit_id = r.to_int(f[2], "visit_id");
        e.concept_id = r.to_int(f[3], "concept_id");
        e.at = parse_ts(r, f[4], "event_datetime");
        if (has_value && !f[5].empty()) e.value = r.to_double(f[5], "value_as_number");
        out.push_back(e);
    }
}

}  // namespace

Dataset load_dataset(const std::string& dir_path) {
    const std::string base = dir_path + "/";
    int year_now = current_year();

    auto persons = load_persons(base + kPersonFile, year_now);
    auto visits = load_visits(base + kVisitFile);

    std::vector<EventRecord> events;
    load_events(base + kConditionFile, Domain::condition, false, events);
    load_events(base + kDrugFile, Domain::drug, false, events);
    load_events(base + kProcedureFile, Domain::procedure, false, events);
    load_events(base + kMeasurementFile, Domain::measurement, true, events);

    {
        std::vector<int64_t> ids;
        for (const auto& p : persons) ids.push_back(p.person_id);
        check_unique(std::move(ids), "person_id");
        ids.clear();
        for (const auto& v : visits) ids.push_back(v.visit_id);
        check_unique(std::move(ids), "visit_id");
        // Event ids are unique within each source table; the domain tag keeps
        // the merged collection unambiguous.
        for (int d = 0; d < 4; ++d) {
            ids.clear();
            for (const auto& e : events) {
                if (static_cast<int>(e.domain) == d) ids.push_back(e.event_id);
            }
            check_unique(std::move(ids), std::string("event_id in ") +
                                             to_string(static_cast<Domain>(d)) + " table");
        }
    }

    Dataset ds(std::move(persons), std::move(visits), std::move(events));

    // Cross-reference validation.
    for (const auto& v : ds.visits()) {
        if (!ds.find_person(v.person_id)) {
            throw std::runtime_error("visit " + std::to_string(v.visit_id) +
                                     " references unknown person " + std::to_string(v.person_id));
        }
    }
    for (const auto& p : ds.persons()) {
        for (const auto& e : ds.events_for(p.person_id)) {
            if (e.value && e.domain != Domain::measurement) {
                throw std::runtime_error("event " + std::to_string(e.event_id) +
                                         " carries a value outside the measurement domain");
            }
            if (!e.visit_id) continue;
            const VisitRecord* v = ds.find_visit(*e.visit_id);
            if (!v) {
                throw std::runtime_error("event " + std::to_string(e.event_id) +
                                         " references unknown visit " + std::to_string(*e.visit_id));
            }
            if (v->person_id != e.person_id) {
                throw std::runtime_error("event " + std::to_string(e.event_id) + " of person " +
                                         std::to_string(e.person_id) + " references visit " +
                                         std::to_string(*e.visit_id) + " of person " +
                                         std::to_string(v->person_id));
            }
            if (e.at < v->start || e.at > v->end) {
                throw std::runtime_error("event " + std::to_string(e.event_id) + " at " +
                                         format_datetime(e.at) + " falls outside visit " +
                                         std::to_string(*e.visit_id) + " [" +
                                         format_datetime(v->start) + ", " +
                                         format_datetime(v->end) + "]");
            }
        }
    }
    // Dangling person references in events surface via events_for grouping:
    // any event person missing from the person table is unreachable there, so
    // check directly.
    size_t reachable = 0;
    for (const auto& p : ds.persons()) reachable += ds.events_for(p.person_id).size();
    if (reachable != ds.event_count()) {
        throw std::runtime_error("events reference persons absent from person.csv");
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir_path) {
    const std::string base = dir_path + "/";

    std::string person_out = "person_id,gender,birth_year\n";
    for (const auto& p : ds.persons()) {
        person_out += std::to_string(p.person_id);
        person_out += ',';
        person_out += to_string(p.gender);
        person_out += ',';
        person_out += std::to_string(p.birth_year);
        person_out += '\n';
    }
    write_file(base + kPersonFile, person_out);

    std::string visit_out = "visit_id,person_id,visit_type,start_datetime,end_datetime\n";
    for (const auto& v : ds.visits()) {
        visit_out += std::to_string(v.visit_id);
        visit_out += ',';
        visit_out += std::to_string(v.person_id);
        visit_out += ',';
        visit_out += to_string(v.visit_type);
        visit_out += ',';
        visit_out += format_datetime(v.start);
        visit_out += ',';
        visit_out += format_datetime(v.end);
        visit_out += '\n';
    }
    write_file(base + kVisitFile, visit_out);

    std::vector<EventRecord> by_domain[4];
    for (const auto& p : ds.persons()) {
        for (const auto& e : ds.events_for(p.person_id)) {
            by_domain[static_cast<size_t>(e.domain)].push_back(e);
        }
    }
    for (auto& evs : by_domain) {
        std::sort(evs.begin(), evs.end(),
                  [](const auto& a, const auto& b) { return a.event_id < b.event_id; });
    }

    auto write_events = [&](const char* file, Domain domain, bool has_value) {
        std::string out = "event_id,person_id,visit_id,concept_id,event_datetime";
        if (has_value) out += ",value_as_number";
        out += '\n';
        for (const auto& e : by_domain[static_cast<size_t>(domain)]) {
            out += std::to_string(e.event_id);
            out += ',';
            out += std::to_string(e.person_id);
            out += ',';
            if (e.visit_id) out += std::to_string(*e.visit_id);
            out += ',';
            out += std::to_string(e.concept_id);
            out += ',';
            out += format_datetime(e.at);
            if (has_value) {
                out += ',';
                if (e.value) out += format_double(*e.value);
            }
            out += '\n';
        }
        write_file(base + file, out);
    };
    write_events(kConditionFile, Domain::condition, false);
    write_events(kDrugFile, Domain::drug, false);
    write_events(kProcedureFile, Domain::procedure, false);
    write_events(kMeasurementFile, Domain::measurement, true);
}

}  // namespace ckdprog
