#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckdprog/model.hpp"
#include "ckdprog/rng.hpp"
#include "ckdprog/sequence.hpp"

namespace ckdprog {

struct TrainConfig {
    double lr = 1e-4;
    size_t batch_size = 32;
    size_t epochs = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double mask_prob = 0.15;
    double mask_mask = 0.8;    // selected -> [MASK]
    double mask_random = 0.1;  // selected -> random non-special id
    double mask_keep = 0.1;    // selected -> unchanged
    double train_frac = 0.7;
    double val_frac = 0.15;
    double test_frac = 0.15;
    size_t patience = 3;  // consecutive non-improving epochs tolerated
    uint64_t seed = 42;
    bool freeze_encoder = false;

    void validate() const;
};

struct SplitResult {
    std::vector<int64_t> train, val, test;  // each sorted ascending
};

// Patient-level split: sort+dedup the ids, seeded shuffle, then take
// floor(n*train_frac) for train, floor(n*val_frac) for val, rest for test.
SplitResult split_patients(std::vector<int64_t> person_ids, double train_frac, double val_frac,
                           uint64_t seed);

struct MlmInstance {
    std::vector<int32_t> ids;      // corrupted input
    std::vector<int32_t> targets;  // original id at selected positions, else kIgnoreTarget
};

// BERT-style corruption. Eligible positions are real (mask 1) and non-special;
// each is selected independently with probability mask_prob, then becomes
// [MASK] (mask_mask), a uniform random non-special id (mask_random), or stays
// unchanged (mask_keep).
MlmInstance apply_mlm_mask(const std::vector<int32_t>& ids, const std::vector<uint8_t>& mask,
                           int32_t vocab_size, const TrainConfig& cfg, Pcg32& rng);

// Adam with bias-corrected moments (Kingma-Ba defaults from TrainConfig).
class Adam {
   public:
    Adam(const ModelConfig& mcfg, const TrainConfig& tcfg);

    // theta -= lr * mhat / (sqrt(vhat) + eps). head_only restricts the update
    // to the classification head (cls_w, cls_b).
    void step(ModelParams& params, const ModelParams& grads, bool head_only = false);
    size_t steps() const { return t_; }

   private:
    TrainConfig cfg_;
    ModelParams m_, v_;
    size_t t_ = 0;
};

struct EpochLog {
    size_t epoch = 0;           // 1-based
    double train_metric = 0.0;  // mean train loss
    double val_metric = 0.0;    // val MLM loss, or val ROC-AUC when fine-tuning
    double wall_seconds = 0.0;
};

// One line per epoch: epoch TAB train TAB val TAB wall_seconds.
void write_train_log(const std::vector<EpochLog>& log, const std::string& path);

struct PretrainResult {
    ModelParams params;  // best-validation weights
    size_t best_epoch = 0;
    std::vector<EpochLog> log;
};

// Masked-language-model pretraining over the training sequences, early
// stopping on validation MLM loss. The validation corruption is re-derived
// from the same seed every epoch so its loss is comparable across epochs.
// epochs == 0 returns the freshly initialized parameters unchanged.
PretrainResult pretrain(const std::vector<TokenSequence>& train_seqs,
                        const std::vector<TokenSequence>& val_seqs, const Vocabulary& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg);

struct FinetuneResult {
    ModelParams params;
    size_t best_epoch = 0;
    double best_val_auc = 0.0;
    std::vector<EpochLog> log;
};

// Binary-classification fine-tuning from pretrained weights; early stops on
// validation ROC-AUC. Every sequence must carry a label and both classes must
// be present in train and val.
FinetuneResult finetune(const ModelParams& start, const std::vector<TokenSequence>& train_seqs,
                        const std::vector<TokenSequence>& val_seqs, const Vocabulary& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg);

// Per-example classification probabilities, dropout off, input order kept.
std::vector<double> predict(const ModelParams& params, const ModelConfig& mcfg,
                            const std::vector<TokenSequence>& seqs, const Vocabulary& vocab,
                            size_t batch_size);

}  // namespace ckdprog
