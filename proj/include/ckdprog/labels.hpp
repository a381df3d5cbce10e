#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckdprog/cohort.hpp"
#include "ckdprog/dataset.hpp"

namespace ckdprog {

struct TaskSpec {
    int followup_days = 365;
    int assessment_days = 365;

    void validate() const;
    bool operator==(const TaskSpec&) const = default;
};

enum class Label : uint8_t { control = 0, caselbl = 1 };

struct LabeledExample {
    int64_t person_id = 0;
    Date anchor = 0;        // stage-3a index date
    Date window_start = 0;  // anchor - assessment_days
    Label label = Label::control;
};

// Case/control assignment per member with a stage-3a index:
//   case    iff stage5 present and stage5 - stage3a <= followup_days
//   control iff not a case and last_observed - stage3a > followup_days
//   omitted otherwise (insufficient follow-up)
std::vector<LabeledExample> label_cohort(const std::vector<CohortMember>& members,
                                         const TaskSpec& task);

// The person's events inside [start of window_start, end of anchor day].
// Nothing after the anchor day ever enters the slice.
std::vector<EventRecord> assessment_slice(const Dataset& ds, const LabeledExample& ex);

// Manifest CSV: person_id,anchor,window_start,followup_days,assessment_days,label
void write_label_manifest(const std::vector<LabeledExample>& examples, const TaskSpec& task,
                          const std::string& path);
std::vector<LabeledExample> read_label_manifest(const std::string& path, TaskSpec* task_out);

}  // namespace ckdprog
