#include "ckdprog/labels.hpp"

#include <stdexcept>

#include "ckdprog/csv.hpp"

namespace ckdprog {

void TaskSpec::validate() const {
    if (followup_days <= 0 || assessment_days <= 0) {
        throw std::runtime_error("follow-up and assessment periods must be positive");
    }
}

std::vector<LabeledExample> label_cohort(const std::vector<CohortMember>& members,
                                         const TaskSpec& task) {
    task.validate();
    std::vector<LabeledExample> out;
    for (const auto& m : members) {
        if (!m.stage3a_index) continue;
        LabeledExample ex;
        ex.person_id = m.person_id;
        ex.anchor = *m.stage3a_index;
        ex.window_start = ex.anchor - task.assessment_days;

        bool progressed_in_window =
            m.stage5_index && (*m.stage5_index - ex.anchor) <= task.followup_days;
        if (progressed_in_window) {
            // The stage-5 event itself proves sufficient observation.
            ex.label = Label::caselbl;
            out.push_back(ex);
        } else if (m.last_observed - ex.anchor > task.followup_days) {
            ex.label = Label::control;
            out.push_back(ex);
        }
        // Otherwise: no progression seen and follow-up too short; omitted.
    }
    return out;
}

std::vector<EventRecord> assessment_slice(const Dataset& ds, const LabeledExample& ex) {
    Timestamp lo = day_start(ex.window_start);
    Timestamp hi = day_end(ex.anchor);
    std::vector<EventRecord> out;
    for (const auto& e : ds.events_for(ex.person_id, hi)) {
        if (e.at >= lo) out.push_back(e);
    }
    return out;
}

void write_label_manifest(const std::vector<LabeledExample>& examples, const TaskSpec& task,
                          const std::string& path) {
    std::string out = "person_id,anchor,window_start,followup_days,assessment_days,label\n";
    for (const auto& ex : examples) {
        out += std::to_string(ex.person_id);
        out += ',';
        out += format_date(ex.anchor);
        out += ',';
        out += format_date(ex.window_start);
        out += ',';
        out += std::to_string(task.followup_days);
        out += ',';
        out += std::to_string(task.assessment_days);
        out += ',';
        out += ex.label == Label::caselbl ? "case" : "control";
        out += '\n';
    }
    write_file(path, out);
}

std::vector<LabeledExample> read_label_manifest(const std::string& path, TaskSpec* task_out) {
    CsvReader r(path);
    r.expect_header({"person_id", "anchor", "window_start", "followup_days", "assessment_days",
                     "label"});
    std::vector<LabeledExample> out;
    std::vector<std::string> f;
    bool have_task = false;
    while (r.next_row(f)) {
        if (f.size() != 6) r.fail("expected 6 columns");
        LabeledExample ex;
        ex.person_id = r.to_int(f[0], "person_id");
        ex.anchor = parse_date(f[1]);
        ex.window_start = parse_date(f[2]);
        TaskSpec task;
        task.followup_days = static_cast<int>(r.to_int(f[3], "followup_days"));
        task.assessment_days = static_cast<int>(r.to_int(f[4], "assessment_days"));
        if (task_out) {
            if (have_task && !(*task_out == task)) {
                r.fail("mixed task definitions in one manifest");
            }
            *task_out = task;
            have_task = true;
        }
        if (f[5] == "case") ex.label = Label::caselbl;
        else if (f[5] == "control") ex.label = Label::control;
        else r.fail_column("label", "expected 'case' or 'control', got '" + f[5] + "'");
        out.push_back(ex);
    }
    return out;
}

}  // namespace ckdprog
