#include "ckdprog/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>

#include "ckdprog/csv.hpp"
#include "ckdprog/metrics.hpp"
#include "ckdprog/quantile.hpp"
#include "ckdprog/sequence.hpp"
#include "ckdprog/timeutil.hpp"

namespace fs = std::filesystem;

namespace ckdprog {

namespace {

// Lower clamp bound for full-history windows; far enough in the past that it
// never binds, small enough in magnitude that date arithmetic cannot overflow.
constexpr Timestamp kFarPast = std::numeric_limits<Timestamp>::min() / 4;

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

int64_t config_i64(const std::string& key, const std::string& value) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size()) {
        throw ConfigError("config key " + key + ": bad integer '" + value + "'");
    }
    return out;
}

uint64_t config_u64(const std::string& key, const std::string& value) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size()) {
        throw ConfigError("config key " + key + ": bad unsigned integer '" + value + "'");
    }
    return out;
}

double config_f64(const std::string& key, const std::string& value) {
    double out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size()) {
        throw ConfigError("config key " + key + ": bad number '" + value + "'");
    }
    return out;
}

bool config_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key " + key + ": bad boolean '" + value + "'");
}

void require_artifact(const std::string& path, const std::string& producing_stage) {
    if (!fs::exists(path)) {
        throw std::runtime_error(path + " is missing; run the '" + producing_stage +
                                 "' stage first");
    }
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

void check_no_leakage(const TokenSequence& seq, Date anchor) {
    const Timestamp limit = day_end(anchor);
    for (size_t i = 0; i < seq.times.size(); ++i) {
        if (seq.times[i] > limit) {
            throw std::runtime_error("leakage audit: token '" + seq.tokens[i] + "' of person " +
                                     std::to_string(seq.person_id) + " is stamped " +
                                     format_datetime(seq.times[i]) + ", after anchor day " +
                                     format_date(anchor));
        }
    }
}

}  // namespace

void PipelineConfig::validate() const {
    try {
        if (data_dir.empty() || work_dir.empty()) {
            throw std::runtime_error("data_dir and work_dir must be non-empty");
        }
        if (followups.empty() || assessments.empty()) {
            throw std::runtime_error("the follow-up/assessment grid must be non-empty");
        }
        for (int f : followups) TaskSpec{f, assessments.front()}.validate();
        for (int a : assessments) TaskSpec{followups.front(), a}.validate();
        synth.validate();
        cohort.validate();
        train.validate();
        ModelConfig probe = model;
        probe.vocab_size = std::max<size_t>(probe.vocab_size, 6);
        probe.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::string cur;
    auto flush = [&] {
        cur = trim(cur);
        if (cur.empty()) throw ConfigError("empty entry in integer list '" + text + "'");
        out.push_back(static_cast<int>(config_i64("list", cur)));
        cur.clear();
    };
    for (char c : text) {
        if (c == ',') {
            flush();
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "paths.data_dir") {
        cfg.data_dir = value;
    } else if (key == "paths.work_dir") {
        cfg.work_dir = value;
    } else if (key == "pipeline.seed") {
        cfg.seed = config_u64(key, value);
    } else if (key == "pipeline.deterministic") {
        cfg.deterministic = config_bool(key, value);
    } else if (key == "pipeline.audit_leakage") {
        cfg.audit_leakage = config_bool(key, value);
    } else if (key == "grid.followups") {
        cfg.followups = parse_int_list(value);
    } else if (key == "grid.assessments") {
        cfg.assessments = parse_int_list(value);
    } else if (key == "synth.n_patients") {
        cfg.synth.n_patients = static_cast<int>(config_i64(key, value));
    } else if (key == "synth.progressor_fraction") {
        cfg.synth.progressor_fraction = config_f64(key, value);
    } else if (key == "synth.visits_per_year") {
        cfg.synth.visits_per_year = config_f64(key, value);
    } else if (key == "synth.noise_sd") {
        cfg.synth.noise_sd = config_f64(key, value);
    } else if (key == "synth.n_background_concepts") {
        cfg.synth.n_background_concepts = static_cast<int>(config_i64(key, value));
    } else if (key == "cohort.persistence_days") {
        cfg.cohort.persistence_days = static_cast<int>(config_i64(key, value));
    } else if (key == "cohort.egfr_concept_id") {
        cfg.cohort.egfr_concept_id = config_i64(key, value);
    } else if (key == "cohort.uacr_concept_id") {
        cfg.cohort.uacr_concept_id = config_i64(key, value);
    } else if (key == "cohort.egfr_stage3a_threshold") {
        cfg.cohort.egfr_stage3a_threshold = config_f64(key, value);
    } else if (key == "cohort.egfr_stage5_threshold") {
        cfg.cohort.egfr_stage5_threshold = config_f64(key, value);
    } else if (key == "cohort.uacr_threshold") {
        cfg.cohort.uacr_threshold = config_f64(key, value);
    } else if (key == "cohort.ckd_concept_ids") {
        cfg.cohort.ckd_concept_ids.clear();
        for (int64_t id : parse_int_list(value)) cfg.cohort.ckd_concept_ids.insert(id);
    } else if (key == "model.n_layers") {
        cfg.model.n_layers = static_cast<size_t>(config_u64(key, value));
    } else if (key == "model.n_heads") {
        cfg.model.n_heads = static_cast<size_t>(config_u64(key, value));
    } else if (key == "model.d_model") {
        cfg.model.d_model = static_cast<size_t>(config_u64(key, value));
    } else if (key == "model.d_ff") {
        cfg.model.d_ff = static_cast<size_t>(config_u64(key, value));
    } else if (key == "model.max_len") {
        cfg.model.max_len = static_cast<size_t>(config_u64(key, value));
    } else if (key == "model.dropout_p") {
        cfg.model.dropout_p = config_f64(key, value);
    } else if (key == "model.tie_mlm_head") {
        cfg.model.tie_mlm_head = config_bool(key, value);
    } else if (key == "train.lr") {
        cfg.train.lr = config_f64(key, value);
    } else if (key == "train.batch_size") {
        cfg.train.batch_size = static_cast<size_t>(config_u64(key, value));
    } else if (key == "train.pretrain_epochs") {
        cfg.pretrain_epochs = static_cast<size_t>(config_u64(key, value));
    } else if (key == "train.finetune_epochs") {
        cfg.finetune_epochs = static_cast<size_t>(config_u64(key, value));
    } else if (key == "train.patience") {
        cfg.train.patience = static_cast<size_t>(config_u64(key, value));
    } else if (key == "train.mask_prob") {
        cfg.train.mask_prob = config_f64(key, value);
    } else if (key == "train.freeze_encoder") {
        cfg.train.freeze_encoder = config_bool(key, value);
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

PipelineConfig parse_config_file(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    PipelineConfig cfg;
    size_t line_no = 0;
    size_t begin = 0;
    while (begin <= text.size()) {
        size_t end = text.find('\n', begin);
        if (end == std::string::npos) end = text.size();
        std::string line = trim(text.substr(begin, end - begin));
        begin = end + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
        }
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        if (begin > text.size()) break;
    }
    return cfg;
}

std::string cohort_manifest_path(const PipelineConfig& cfg) { return cfg.work_dir + "/cohort.csv"; }

std::string label_manifest_path(const PipelineConfig& cfg, int followup, int assessment) {
    return cfg.work_dir + "/labels_F" + std::to_string(followup) + "_A" +
           std::to_string(assessment) + ".csv";
}

std::string split_path(const PipelineConfig& cfg) { return cfg.work_dir + "/split.csv"; }
std::string quantile_path(const PipelineConfig& cfg) { return cfg.work_dir + "/quantiles.txt"; }
std::string vocab_path(const PipelineConfig& cfg) { return cfg.work_dir + "/vocab.txt"; }

std::string sequence_path(const PipelineConfig& cfg, const std::string& split) {
    return cfg.work_dir + "/seq_" + split + ".tsv";
}

std::string pretrain_checkpoint_path(const PipelineConfig& cfg) {
    return cfg.work_dir + "/pretrain.ckpt";
}

std::string finetune_checkpoint_path(const PipelineConfig& cfg, int followup, int assessment) {
    return cfg.work_dir + "/model_F" + std::to_string(followup) + "_A" +
           std::to_string(assessment) + ".ckpt";
}

std::string metrics_path(const PipelineConfig& cfg, int followup, int assessment) {
    return cfg.work_dir + "/metrics_F" + std::to_string(followup) + "_A" +
           std::to_string(assessment) + ".csv";
}

std::string report_path(const PipelineConfig& cfg) { return cfg.work_dir + "/report.csv"; }

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

const Dataset& Pipeline::dataset() {
    if (!dataset_) dataset_.emplace(load_dataset(cfg_.data_dir));
    return *dataset_;
}

std::vector<CohortMember> Pipeline::load_cohort() const {
    require_artifact(cohort_manifest_path(cfg_), "cohort");
    return read_cohort_manifest(cohort_manifest_path(cfg_));
}

std::vector<int64_t> Pipeline::modeling_ids(const std::vector<CohortMember>& members) const {
    std::vector<int64_t> ids;
    for (const auto& m : members) {
        if (m.stage3a_index) ids.push_back(m.person_id);
    }
    return ids;
}

SplitResult Pipeline::load_split() const {
    require_artifact(split_path(cfg_), "quantiles");
    CsvReader reader(split_path(cfg_));
    reader.expect_header({"person_id", "split"});
    SplitResult out;
    std::vector<std::string> fields;
    while (reader.next_row(fields)) {
        int64_t id = reader.to_int(fields[0], "person_id");
        if (fields[1] == "train") {
            out.train.push_back(id);
        } else if (fields[1] == "val") {
            out.val.push_back(id);
        } else if (fields[1] == "test") {
            out.test.push_back(id);
        } else {
            reader.fail_column("split", "expected train/val/test, got '" + fields[1] + "'");
        }
    }
    return out;
}

void Pipeline::run_synth() {
    SynthConfig s = cfg_.synth;
    s.seed = cfg_.seed;
    ensure_dir(cfg_.data_dir);
    generate_synthetic(s, cfg_.data_dir);
    dataset_.reset();  // force a reload on next use
}

void Pipeline::run_ingest() {
    const Dataset& ds = dataset();
    size_t by_domain[4] = {0, 0, 0, 0};
    for (const auto& p : ds.persons()) {
        for (const auto& e : ds.events_for(p.person_id)) {
            ++by_domain[static_cast<size_t>(e.domain)];
        }
    }
    std::string out = "table,rows\n";
    out += "person," + std::to_string(ds.persons().size()) + "\n";
    out += "visit_occurrence," + std::to_string(ds.visits().size()) + "\n";
    out += "condition_occurrence," + std::to_string(by_domain[0]) + "\n";
    out += "drug_exposure," + std::to_string(by_domain[1]) + "\n";
    out += "procedure_occurrence," + std::to_string(by_domain[2]) + "\n";
    out += "measurement," + std::to_string(by_domain[3]) + "\n";
    ensure_dir(cfg_.work_dir);
    write_file(cfg_.work_dir + "/ingest_summary.csv", out);
}

void Pipeline::run_cohort() {
    std::vector<CohortMember> members = build_cohort(dataset(), cfg_.cohort);
    ensure_dir(cfg_.work_dir);
    write_cohort_manifest(members, cohort_manifest_path(cfg_));
}

void Pipeline::run_label() {
    const std::vector<CohortMember> members = load_cohort();
    ensure_dir(cfg_.work_dir);
    for (int f : cfg_.followups) {
        for (int a : cfg_.assessments) {
            const TaskSpec task{f, a};
            write_label_manifest(label_cohort(members, task), task,
                                 label_manifest_path(cfg_, f, a));
        }
    }
}

void Pipeline::run_quantiles() {
    const std::vector<CohortMember> members = load_cohort();
    const SplitResult split =
        split_patients(modeling_ids(members), cfg_.train.train_frac, cfg_.train.val_frac,
                       derive_seed(cfg_.seed, "split"));
    ensure_dir(cfg_.work_dir);

    std::string split_csv = "person_id,split\n";
    auto add_rows = [&](const std::vector<int64_t>& ids, const char* name) {
        for (int64_t id : ids) split_csv += std::to_string(id) + "," + name + "\n";
    };
    // Rows grouped by split, ids ascending inside each group.
    add_rows(split.train, "train");
    add_rows(split.val, "val");
    add_rows(split.test, "test");
    write_file(split_path(cfg_), split_csv);

    const Dataset& ds = dataset();
    std::map<int64_t, std::vector<double>> values_by_concept;
    for (const auto& m : members) {
        if (!m.stage3a_index) continue;
        if (!std::binary_search(split.train.begin(), split.train.end(), m.person_id)) continue;
        for (const auto& e : ds.events_for(m.person_id, day_end(*m.stage3a_index))) {
            if (e.domain == Domain::measurement && e.value) {
                values_by_concept[e.concept_id].push_back(*e.value);
            }
        }
    }
    QuantileMap::fit(values_by_concept).save(quantile_path(cfg_));
}

void Pipeline::run_tokenize() {
    const std::vector<CohortMember> members = load_cohort();
    const SplitResult split = load_split();
    require_artifact(quantile_path(cfg_), "quantiles");
    const QuantileMap qm = QuantileMap::load(quantile_path(cfg_));
    const Dataset& ds = dataset();

    std::vector<TokenSequence> per_split[3];
    for (const auto& m : members) {
        if (!m.stage3a_index) continue;
        Split which;
        if (std::binary_search(split.train.begin(), split.train.end(), m.person_id)) {
            which = Split::train;
        } else if (std::binary_search(split.val.begin(), split.val.end(), m.person_id)) {
            which = Split::val;
        } else if (std::binary_search(split.test.begin(), split.test.end(), m.person_id)) {
            which = Split::test;
        } else {
            throw std::runtime_error("person " + std::to_string(m.person_id) +
                                     " is missing from the split file");
        }
        const Timestamp limit = day_end(*m.stage3a_index);
        auto span = ds.events_for(m.person_id, limit);
        std::vector<EventRecord> slice(span.begin(), span.end());
        TokenSequence seq = tokenize(slice, *ds.find_person(m.person_id), ds, qm,
                                     TokenTimeClamp{kFarPast, limit});
        if (cfg_.audit_leakage) check_no_leakage(seq, *m.stage3a_index);
        per_split[static_cast<size_t>(which)].push_back(std::move(seq));
    }

    Vocabulary vocab;
    for (const auto& seq : per_split[0]) vocab.add_sequence(seq);
    ensure_dir(cfg_.work_dir);
    vocab.save(vocab_path(cfg_));
    write_sequences(per_split[0], sequence_path(cfg_, "train"));
    write_sequences(per_split[1], sequence_path(cfg_, "val"));
    write_sequences(per_split[2], sequence_path(cfg_, "test"));
}

void Pipeline::run_pretrain() {
    require_artifact(vocab_path(cfg_), "tokenize");
    require_artifact(sequence_path(cfg_, "train"), "tokenize");
    require_artifact(sequence_path(cfg_, "val"), "tokenize");
    const Vocabulary vocab = Vocabulary::load(vocab_path(cfg_));
    const std::vector<TokenSequence> train_seqs = read_sequences(sequence_path(cfg_, "train"));
    const std::vector<TokenSequence> val_seqs = read_sequences(sequence_path(cfg_, "val"));

    ModelConfig mcfg = cfg_.model;
    mcfg.vocab_size = static_cast<size_t>(vocab.size());
    TrainConfig tcfg = cfg_.train;
    tcfg.epochs = cfg_.pretrain_epochs;
    tcfg.seed = derive_seed(cfg_.seed, "pretrain");

    PretrainResult res = pretrain(train_seqs, val_seqs, vocab, mcfg, tcfg);
    save_checkpoint(pretrain_checkpoint_path(cfg_), mcfg, res.params, vocab.content_hash());
    write_train_log(res.log, cfg_.work_dir + "/pretrain_log.tsv");
}

std::vector<TokenSequence> Pipeline::cell_sequences(int followup, int assessment, Split split) {
    require_artifact(label_manifest_path(cfg_, followup, assessment), "label");
    TaskSpec task;
    const std::vector<LabeledExample> examples =
        read_label_manifest(label_manifest_path(cfg_, followup, assessment), &task);
    const SplitResult split_res = load_split();
    require_artifact(quantile_path(cfg_), "quantiles");
    const QuantileMap qm = QuantileMap::load(quantile_path(cfg_));
    const Dataset& ds = dataset();

    const std::vector<int64_t>& wanted = split == Split::train  ? split_res.train
                                         : split == Split::val ? split_res.val
                                                               : split_res.test;
    std::vector<TokenSequence> out;
    for (const auto& ex : examples) {
        if (!std::binary_search(wanted.begin(), wanted.end(), ex.person_id)) continue;
        const std::vector<EventRecord> slice = assessment_slice(ds, ex);
        TokenSequence seq =
            tokenize(slice, *ds.find_person(ex.person_id), ds, qm,
                     TokenTimeClamp{day_start(ex.window_start), day_end(ex.anchor)});
        if (cfg_.audit_leakage) check_no_leakage(seq, ex.anchor);
        seq.label = static_cast<int>(ex.label);
        out.push_back(std::move(seq));
    }
    return out;
}

void Pipeline::run_finetune(int followup, int assessment) {
    require_artifact(vocab_path(cfg_), "tokenize");
    require_artifact(pretrain_checkpoint_path(cfg_), "pretrain");
    const Vocabulary vocab = Vocabulary::load(vocab_path(cfg_));
    const Checkpoint ck = load_checkpoint(pretrain_checkpoint_path(cfg_), vocab.content_hash());

    const std::vector<TokenSequence> train_seqs = cell_sequences(followup, assessment, Split::train);
    const std::vector<TokenSequence> val_seqs = cell_sequences(followup, assessment, Split::val);

    TrainConfig tcfg = cfg_.train;
    tcfg.epochs = cfg_.finetune_epochs;
    tcfg.seed = derive_seed(cfg_.seed, "finetune",
                            static_cast<uint64_t>(followup) * 10000 + static_cast<uint64_t>(assessment));

    FinetuneResult res = finetune(ck.params, train_seqs, val_seqs, vocab, ck.config, tcfg);
    save_checkpoint(finetune_checkpoint_path(cfg_, followup, assessment), ck.config, res.params,
                    vocab.content_hash());
    write_train_log(res.log, cfg_.work_dir + "/finetune_log_F" + std::to_string(followup) + "_A" +
                                 std::to_string(assessment) + ".tsv");
}

void Pipeline::run_evaluate(int followup, int assessment) {
    require_artifact(vocab_path(cfg_), "tokenize");
    require_artifact(finetune_checkpoint_path(cfg_, followup, assessment), "finetune");
    const Vocabulary vocab = Vocabulary::load(vocab_path(cfg_));
    const Checkpoint ck =
        load_checkpoint(finetune_checkpoint_path(cfg_, followup, assessment), vocab.content_hash());

    const std::vector<TokenSequence> test_seqs = cell_sequences(followup, assessment, Split::test);
    if (test_seqs.empty()) throw std::runtime_error("evaluate: empty test split for this cell");

    const std::vector<double> probs =
        predict(ck.params, ck.config, test_seqs, vocab, cfg_.train.batch_size);
    std::vector<int> labels;
    for (const auto& s : test_seqs) labels.push_back(*s.label);

    const MetricReport rep = evaluate_scores(probs, labels);
    std::string out = std::string("followup_days,assessment_days,") + kMetricCsvColumns + "\n";
    out += std::to_string(followup) + "," + std::to_string(assessment) + "," +
           metric_csv_fields(rep) + "\n";
    write_file(metrics_path(cfg_, followup, assessment), out);
}

void Pipeline::run_grid() {
    for (int f : cfg_.followups) {
        for (int a : cfg_.assessments) {
            run_finetune(f, a);
            run_evaluate(f, a);
        }
    }
    run_report();
}

void Pipeline::run_report() { write_report(cfg_); }

size_t Pipeline::audit_leakage() {
    require_artifact(quantile_path(cfg_), "quantiles");
    const QuantileMap qm = QuantileMap::load(quantile_path(cfg_));
    const Dataset& ds = dataset();
    size_t violations = 0;
    for (int f : cfg_.followups) {
        for (int a : cfg_.assessments) {
            require_artifact(label_manifest_path(cfg_, f, a), "label");
            TaskSpec task;
            const auto examples = read_label_manifest(label_manifest_path(cfg_, f, a), &task);
            for (const auto& ex : examples) {
                const std::vector<EventRecord> slice = assessment_slice(ds, ex);
                TokenSequence seq =
                    tokenize(slice, *ds.find_person(ex.person_id), ds, qm,
                             TokenTimeClamp{day_start(ex.window_start), day_end(ex.anchor)});
                const Timestamp limit = day_end(ex.anchor);
                for (Timestamp t : seq.times) {
                    if (t > limit) ++violations;
                }
            }
        }
    }
    return violations;
}

void Pipeline::run_stage(const std::string& name, std::optional<int> followup,
                         std::optional<int> assessment) {
    auto need_cell = [&]() -> std::pair<int, int> {
        if (cfg_.followups.size() == 1 && !followup) followup = cfg_.followups.front();
        if (cfg_.assessments.size() == 1 && !assessment) assessment = cfg_.assessments.front();
        if (!followup || !assessment) {
            throw ConfigError("stage '" + name + "' needs a single --followup and --assessment");
        }
        return {*followup, *assessment};
    };
    try {
        if (name == "synth") {
            run_synth();
        } else if (name == "ingest") {
            run_ingest();
        } else if (name == "cohort") {
            run_cohort();
        } else if (name == "label") {
            run_label();
        } else if (name == "quantiles") {
            run_quantiles();
        } else if (name == "tokenize") {
            run_tokenize();
        } else if (name == "pretrain") {
            run_pretrain();
        } else if (name == "finetune") {
            auto [f, a] = need_cell();
            run_finetune(f, a);
        } else if (name == "evaluate") {
            auto [f, a] = need_cell();
            run_evaluate(f, a);
        } else if (name == "grid") {
            run_grid();
        } else if (name == "report") {
            run_report();
        } else {
            throw ConfigError("unknown stage: " + name);
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + name + ": " + e.what());
    }
}

namespace {

MetricReport mean_report(const std::vector<MetricReport>& reports) {
    MetricReport avg;
    const double n = static_cast<double>(reports.size());
    for (const auto& r : reports) {
        avg.roc_auc += r.roc_auc / n;
        avg.pr_auc += r.pr_auc / n;
        avg.accuracy += r.accuracy / n;
        avg.specificity += r.specificity / n;
        avg.precision += r.precision / n;
        avg.recall += r.recall / n;
        avg.f1 += r.f1 / n;
        avg.n_pos += r.n_pos;
        avg.n_neg += r.n_neg;
        avg.degenerate = avg.degenerate || r.degenerate;
    }
    avg.threshold = reports.empty() ? 0.5 : reports.front().threshold;
    return avg;
}

}  // namespace

void write_report(const PipelineConfig& cfg) {
    std::map<std::pair<int, int>, MetricReport> cells;
    for (int f : cfg.followups) {
        for (int a : cfg.assessments) {
            require_artifact(metrics_path(cfg, f, a), "evaluate");
            CsvReader reader(metrics_path(cfg, f, a));
            std::vector<std::string> header;
            split_csv_line(std::string("followup_days,assessment_days,") + kMetricCsvColumns,
                           header);
            reader.expect_header(header);
            std::vector<std::string> fields;
            if (!reader.next_row(fields)) reader.fail("metrics file has no data row");
            cells[{f, a}] = parse_metric_csv_fields(fields, 2);
        }
    }

    std::string out = std::string("row_type,followup_days,assessment_days,") + kMetricCsvColumns + "\n";
    for (int f : cfg.followups) {
        for (int a : cfg.assessments) {
            out += "cell," + std::to_string(f) + "," + std::to_string(a) + "," +
                   metric_csv_fields(cells.at({f, a})) + "\n";
        }
    }
    for (int f : cfg.followups) {
        std::vector<MetricReport> row;
        for (int a : cfg.assessments) row.push_back(cells.at({f, a}));
        out += "followup_avg," + std::to_string(f) + ",," + metric_csv_fields(mean_report(row)) + "\n";
    }
    for (int a : cfg.assessments) {
        std::vector<MetricReport> col;
        for (int f : cfg.followups) col.push_back(cells.at({f, a}));
        out += "assessment_avg,," + std::to_string(a) + "," + metric_csv_fields(mean_report(col)) + "\n";
    }
    write_file(report_path(cfg), out);
}

}  // namespace ckdprog
