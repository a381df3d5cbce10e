#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ckdprog/pipeline.hpp"

namespace {

struct StageDoc {
    const char* name;
    const char* help;
};

constexpr StageDoc kStages[] = {
    {"synth", "Generate a seeded synthetic dataset into the data directory"},
    {"ingest", "Load and validate the CSV tables, writing a row-count summary"},
    {"cohort", "Build the CKD progression cohort manifest"},
    {"label", "Write case/control labels for every follow-up/assessment cell"},
    {"quantiles", "Fit lab decile cut points on the training split (also writes the split)"},
    {"tokenize", "Emit token sequences and the vocabulary for pretraining"},
    {"pretrain", "Run masked-token pretraining of the encoder"},
    {"finetune", "Fine-tune the pretrained encoder for one grid cell"},
    {"evaluate", "Score the held-out test split for one grid cell"},
    {"grid", "Fine-tune and evaluate every grid cell, then write the report"},
    {"report", "Aggregate per-cell metrics into report.csv"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CKD progression sequence-modeling toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string data_dir;
    std::string work_dir;
    std::string followup_csv;
    std::string assessment_csv;
    uint64_t seed = 0;
    bool deterministic = false;
    bool audit = false;

    app.add_option("--config", config_path, "Configuration file (key=value lines, # comments)");
    app.add_option("--seed", seed, "Master RNG seed (overrides the config file)");
    app.add_option("--data-dir", data_dir, "Directory holding the six CSV tables");
    app.add_option("--work-dir", work_dir, "Directory for derived artifacts");
    app.add_option("--followup", followup_csv,
                   "Follow-up horizon in days; a comma-separated list replaces the grid");
    app.add_option("--assessment", assessment_csv,
                   "Assessment window in days; a comma-separated list replaces the grid");
    app.add_flag("--deterministic", deterministic,
                 "Force the single-threaded deterministic path (the only path; kept for "
                 "script compatibility)");
    app.add_flag("--audit-leakage", audit,
                 "Re-check every emitted token timestamp against its example's anchor");

    for (const StageDoc& s : kStages) {
        app.add_subcommand(s.name, s.help)->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        ckdprog::PipelineConfig cfg;
        if (!config_path.empty()) cfg = ckdprog::parse_config_file(config_path);
        if (app.count("--seed") > 0) cfg.seed = seed;
        if (app.count("--data-dir") > 0) cfg.data_dir = data_dir;
        if (app.count("--work-dir") > 0) cfg.work_dir = work_dir;
        std::optional<int> cell_followup;
        std::optional<int> cell_assessment;
        if (app.count("--followup") > 0) {
            cfg.followups = ckdprog::parse_int_list(followup_csv);
            if (cfg.followups.size() == 1) cell_followup = cfg.followups.front();
        }
        if (app.count("--assessment") > 0) {
            cfg.assessments = ckdprog::parse_int_list(assessment_csv);
            if (cfg.assessments.size() == 1) cell_assessment = cfg.assessments.front();
        }
        if (deterministic) cfg.deterministic = true;
        if (audit) cfg.audit_leakage = true;

        ckdprog::Pipeline pipeline(cfg);
        pipeline.run_stage(stage, cell_followup, cell_assessment);
        return 0;
    } catch (const ckdprog::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
