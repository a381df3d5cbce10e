#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ckdprog/cohort.hpp"
#include "ckdprog/labels.hpp"
#include "ckdprog/model.hpp"
#include "ckdprog/synth.hpp"
#include "ckdprog/train.hpp"

namespace ckdprog {

// Malformed configuration (bad key, bad value, impossible grid). The CLI maps
// this to exit code 2; every other failure exits 1 with the stage named.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::string data_dir = "data";
    std::string work_dir = "work";
    uint64_t seed = 42;
    bool deterministic = false;  // reference path is always sequential; flag kept for symmetry
    bool audit_leakage = false;
    std::vector<int> followups = {180, 365, 730, 1095, 1460};
    std::vector<int> assessments = {180, 365, 730};
    SynthConfig synth;
    CohortConfig cohort;
    ModelConfig model;  // vocab_size is filled in once the vocabulary exists
    TrainConfig train;
    size_t pretrain_epochs = 3;
    size_t finetune_epochs = 8;

    void validate() const;  // throws ConfigError
};

// Flat key=value configuration text with section prefixes
// (e.g. cohort.persistence_days=90); '#' comments and blank lines allowed.
PipelineConfig parse_config_file(const std::string& path);
void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value);
std::vector<int> parse_int_list(const std::string& text);  // comma-separated

// Work-directory artifact names.
std::string cohort_manifest_path(const PipelineConfig& cfg);
std::string label_manifest_path(const PipelineConfig& cfg, int followup, int assessment);
std::string split_path(const PipelineConfig& cfg);
std::string quantile_path(const PipelineConfig& cfg);
std::string vocab_path(const PipelineConfig& cfg);
std::string sequence_path(const PipelineConfig& cfg, const std::string& split);
std::string pretrain_checkpoint_path(const PipelineConfig& cfg);
std::string finetune_checkpoint_path(const PipelineConfig& cfg, int followup, int assessment);
std::string metrics_path(const PipelineConfig& cfg, int followup, int assessment);
std::string report_path(const PipelineConfig& cfg);

enum class Split : uint8_t { train, val, test };
const char* to_string(Split s);

// Stage orchestrator. Each stage reads its upstream artifacts from disk, so
// stages can be re-run individually; everything derives from the single seed.
class Pipeline {
   public:
    explicit Pipeline(PipelineConfig cfg);

    const PipelineConfig& config() const { return cfg_; }

    void run_synth();
    void run_ingest();
    void run_cohort();
    void run_label();
    void run_quantiles();  // also writes the patient split
    void run_tokenize();
    void run_pretrain();
    void run_finetune(int followup, int assessment);
    void run_evaluate(int followup, int assessment);
    void run_grid();
    void run_report();

    // Dispatches by stage name; wraps failures as "stage <name>: ...".
    void run_stage(const std::string& name, std::optional<int> followup = std::nullopt,
                   std::optional<int> assessment = std::nullopt);

    // Re-tokenizes every grid cell and counts token timestamps later than the
    // end of their example's anchor day. Zero means no leakage.
    size_t audit_leakage();

    // Sequences of one grid cell restricted to one split, labels attached.
    std::vector<TokenSequence> cell_sequences(int followup, int assessment, Split split);

   private:
    PipelineConfig cfg_;

    const Dataset& dataset();
    std::vector<CohortMember> load_cohort() const;
    std::vector<int64_t> modeling_ids(const std::vector<CohortMember>& members) const;
    SplitResult load_split() const;

    std::optional<Dataset> dataset_;  // lazily loaded, reused across stages
};

// Average rows appended to the per-cell report: one per follow-up (mean over
// its assessment columns) and one per assessment (mean over follow-ups).
void write_report(const PipelineConfig& cfg);

}  // namespace ckdprog
