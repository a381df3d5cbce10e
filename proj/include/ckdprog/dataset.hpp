#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ckdprog/timeutil.hpp"

namespace ckdprog {

enum class Gender : uint8_t { male, female, unknown };

enum class VisitType : uint8_t { outpatient, inpatient, emergency };

enum class Domain : uint8_t { condition = 0, drug = 1, procedure = 2, measurement = 3 };

const char* to_string(Gender g);
const char* to_string(VisitType v);
const char* to_string(Domain d);

struct PersonRecord {
    int64_t person_id = 0;
    Gender gender = Gender::unknown;
    int birth_year = 0;

    bool operator==(const PersonRecord&) const = default;
};

struct VisitRecord {
    int64_t visit_id = 0;
    int64_t person_id = 0;
    VisitType visit_type = VisitType::outpatient;
    Timestamp start = 0;
    Timestamp end = 0;

    bool operator==(const VisitRecord&) const = default;
};

struct EventRecord {
    int64_t event_id = 0;
    Domain domain = Domain::condition;
    int64_t concept_id = 0;
    Timestamp at = 0;
    int64_t person_id = 0;
    std::optional<int64_t> visit_id;
    std::optional<double> value;  // measurements only

    bool operator==(const EventRecord&) const = default;
};

// Total order on a person's events: (timestamp, domain rank, concept, event id).
// Deterministic regardless of input row order.
bool event_order_less(const EventRecord& a, const EventRecord& b);

// Immutable after construction; safe for concurrent reads.
class Dataset {
   public:
    Dataset(std::vector<PersonRecord> persons, std::vector<VisitRecord> visits,
            std::vector<EventRecord> events);

    const std::vector<PersonRecord>& persons() const { return persons_; }
    const std::vector<VisitRecord>& visits() const { return visits_; }

    const PersonRecord* find_person(int64_t person_id) const;
    const VisitRecord* find_visit(int64_t visit_id) const;

    // Events of one person in the total order, optionally truncated to
    // timestamps <= until. Throws on unknown person.
    std::span<const EventRecord> events_for(int64_t person_id,
                                            std::optional<Timestamp> until = std::nullopt) const;

    size_t event_count() const;

   private:
    std::vector<PersonRecord> persons_;  // sorted by person_id
    std::vector<VisitRecord> visits_;    // sorted by visit_id
    std::unordered_map<int64_t, std::vector<EventRecord>> events_by_person_;
    std::unordered_map<int64_t, size_t> person_index_;
    std::unordered_map<int64_t, size_t> visit_index_;
};

// File names of the six-table directory format.
extern const char* const kPersonFile;
extern const char* const kVisitFile;
extern const char* const kConditionFile;
extern const char* const kDrugFile;
extern const char* const kProcedureFile;
extern const char* const kMeasurementFile;

// Parses and cross-validates the six tables. Throws std::runtime_error with
// file/line/column context on any defect.
Dataset load_dataset(const std::string& dir_path);

// Writes a dataset back to the six-file format (rows in id order).
void save_dataset(const Dataset& ds, const std::string& dir_path);

}  // namespace ckdprog
