#include "ckdprog/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ckdprog/csv.hpp"
#include "ckdprog/metrics.hpp"

namespace ckdprog {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::runtime_error("train: lr must be positive");
    if (batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::runtime_error("train: betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::runtime_error("train: adam_eps must be positive");
    if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
        throw std::runtime_error("train: mask_prob must lie in [0, 1]");
    }
    if (std::abs(mask_mask + mask_random + mask_keep - 1.0) > 1e-9) {
        throw std::runtime_error("train: mask action shares must sum to 1");
    }
    if (mask_mask < 0.0 || mask_random < 0.0 || mask_keep < 0.0) {
        throw std::runtime_error("train: mask action shares must be non-negative");
    }
    if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0 ||
        std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw std::runtime_error("train: split fractions must be non-negative and sum to 1");
    }
    if (patience < 1) throw std::runtime_error("train: patience must be >= 1");
}

SplitResult split_patients(std::vector<int64_t> person_ids, double train_frac, double val_frac,
                           uint64_t seed) {
    if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0 + 1e-9) {
        throw std::runtime_error("split: invalid fractions");
    }
    // Sort and dedup first so the split depends only on the id set, not on
    // the caller's ordering.
    std::sort(person_ids.begin(), person_ids.end());
    person_ids.erase(std::unique(person_ids.begin(), person_ids.end()), person_ids.end());

    Pcg32 rng(seed);
    for (size_t i = person_ids.size(); i > 1; --i) {  // Fisher-Yates
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(person_ids[i - 1], person_ids[j]);
    }

    const size_t n = person_ids.size();
    const size_t n_train = static_cast<size_t>(static_cast<double>(n) * train_frac);
    const size_t n_val = static_cast<size_t>(static_cast<double>(n) * val_frac);

    SplitResult out;
    out.train.assign(person_ids.begin(), person_ids.begin() + n_train);
    out.val.assign(person_ids.begin() + n_train, person_ids.begin() + n_train + n_val);
    out.test.assign(person_ids.begin() + n_train + n_val, person_ids.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

MlmInstance apply_mlm_mask(const std::vector<int32_t>& ids, const std::vector<uint8_t>& mask,
                           int32_t vocab_size, const TrainConfig& cfg, Pcg32& rng) {
    if (ids.size() != mask.size()) throw std::runtime_error("mlm mask: shape mismatch");
    if (vocab_size <= Vocabulary::kUnk + 1) {
        throw std::runtime_error("mlm mask: vocabulary has no maskable tokens");
    }
    MlmInstance out;
    out.ids = ids;
    out.targets.assign(ids.size(), kIgnoreTarget);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (!mask[i] || ids[i] <= Vocabulary::kUnk) continue;  // padding and specials stay
        if (rng.uniform() >= cfg.mask_prob) continue;
        out.targets[i] = ids[i];
        const double action = rng.uniform();
        if (action < cfg.mask_mask) {
            out.ids[i] = Vocabulary::kMask;
        } else if (action < cfg.mask_mask + cfg.mask_random) {
            out.ids[i] = static_cast<int32_t>(
                rng.uniform_int(Vocabulary::kUnk + 1, static_cast<int64_t>(vocab_size) - 1));
        }
        // else: keep the original id (still predicted).
    }
    return out;
}

namespace {

void zero_params(ModelParams& p) {
    visit_params(p, [](const std::string&, ParamKind, Mat& m) { m.zero(); });
}

struct EncodedCorpus {
    std::vector<EncodedSequence> enc;
    std::vector<int8_t> labels;  // only when labeled
};

EncodedCorpus encode_corpus(const std::vector<TokenSequence>& seqs, const Vocabulary& vocab,
                            const ModelConfig& mcfg, bool need_labels) {
    EncodedCorpus out;
    out.enc.reserve(seqs.size());
    for (const auto& s : seqs) {
        out.enc.push_back(encode(s, vocab, static_cast<int>(mcfg.max_len)));
        if (need_labels) {
            if (!s.label) throw std::runtime_error("training: unlabeled sequence for classification");
            out.labels.push_back(static_cast<int8_t>(*s.label));
        }
    }
    return out;
}

// Fills a classify- or mlm-shaped batch from corpus rows [begin, end).
Batch fill_batch(const EncodedCorpus& corpus, const std::vector<size_t>& order, size_t begin,
                 size_t end, size_t max_len) {
    Batch b;
    b.n = end - begin;
    b.len = max_len;
    b.ids.resize(b.n * b.len);
    b.mask.resize(b.n * b.len);
    for (size_t i = begin; i < end; ++i) {
        const EncodedSequence& e = corpus.enc[order[i]];
        std::copy(e.ids.begin(), e.ids.end(), b.ids.begin() + (i - begin) * b.len);
        std::copy(e.mask.begin(), e.mask.end(), b.mask.begin() + (i - begin) * b.len);
        if (!corpus.labels.empty()) b.labels.push_back(corpus.labels[order[i]]);
    }
    return b;
}

void corrupt_batch(Batch& b, int32_t vocab_size, const TrainConfig& cfg, Pcg32& rng) {
    b.mlm_targets.assign(b.n * b.len, kIgnoreTarget);
    for (size_t e = 0; e < b.n; ++e) {
        std::vector<int32_t> row(b.ids.begin() + e * b.len, b.ids.begin() + (e + 1) * b.len);
        std::vector<uint8_t> msk(b.mask.begin() + e * b.len, b.mask.begin() + (e + 1) * b.len);
        MlmInstance inst = apply_mlm_mask(row, msk, vocab_size, cfg, rng);
        std::copy(inst.ids.begin(), inst.ids.end(), b.ids.begin() + e * b.len);
        std::copy(inst.targets.begin(), inst.targets.end(), b.mlm_targets.begin() + e * b.len);
    }
}

std::vector<size_t> identity_order(size_t n) {
    std::vector<size_t> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

void shuffle_order(std::vector<size_t>& v, Pcg32& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

// Mean MLM loss over a corpus with a fresh corruption stream; dropout off.
double mlm_eval_loss(const ModelParams& params, const ModelConfig& mcfg, const TrainConfig& tcfg,
                     const EncodedCorpus& corpus, int32_t vocab_size, uint64_t mask_seed) {
    Pcg32 rng(mask_seed);
    const std::vector<size_t> order = identity_order(corpus.enc.size());
    double loss_sum = 0.0;
    size_t target_sum = 0;
    for (size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
        const size_t end = std::min(order.size(), begin + tcfg.batch_size);
        Batch b = fill_batch(corpus, order, begin, end, mcfg.max_len);
        corrupt_batch(b, vocab_size, tcfg, rng);
        ForwardOutput out = forward(params, mcfg, b, Mode::mlm);
        loss_sum += out.loss * static_cast<double>(out.n_mlm_targets);
        target_sum += out.n_mlm_targets;
    }
    return target_sum ? loss_sum / static_cast<double>(target_sum) : 0.0;
}

double wall_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Adam::Adam(const ModelConfig& mcfg, const TrainConfig& tcfg)
    : cfg_(tcfg), m_(ModelParams::shaped(mcfg)), v_(ModelParams::shaped(mcfg)) {}

void Adam::step(ModelParams& params, const ModelParams& grads, bool head_only) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    std::vector<std::string> names;
    std::vector<Mat*> tp, mp, vp;
    std::vector<const Mat*> gp;
    visit_params(params, [&](const std::string& n, ParamKind, Mat& m) {
        names.push_back(n);
        tp.push_back(&m);
    });
    visit_params(grads, [&](const std::string&, ParamKind, const Mat& m) { gp.push_back(&m); });
    visit_params(m_, [&](const std::string&, ParamKind, Mat& m) { mp.push_back(&m); });
    visit_params(v_, [&](const std::string&, ParamKind, Mat& m) { vp.push_back(&m); });
    if (gp.size() != tp.size()) throw std::runtime_error("adam: gradient shape family mismatch");

    for (size_t i = 0; i < tp.size(); ++i) {
        if (head_only && names[i] != "cls_w" && names[i] != "cls_b") continue;
        if (!tp[i]->same_shape(*gp[i])) throw std::runtime_error("adam: tensor shape mismatch");
        for (size_t j = 0; j < tp[i]->size(); ++j) {
            const double g = gp[i]->a[j];
            double& m = mp[i]->a[j];
            double& v = vp[i]->a[j];
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
            v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            tp[i]->a[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
        }
    }
}

void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::string out;
    for (const auto& e : log) {
        out += std::to_string(e.epoch);
        out += '\t';
        out += format_double(e.train_metric);
        out += '\t';
        out += format_double(e.val_metric);
        out += '\t';
        out += format_double(e.wall_seconds);
        out += '\n';
    }
    write_file(path, out);
}

PretrainResult pretrain(const std::vector<TokenSequence>& train_seqs,
                        const std::vector<TokenSequence>& val_seqs, const Vocabulary& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    if (train_seqs.empty()) throw std::runtime_error("pretrain: no training sequences");
    if (val_seqs.empty()) throw std::runtime_error("pretrain: no validation sequences");
    if (static_cast<size_t>(vocab.size()) != mcfg.vocab_size) {
        throw std::runtime_error("pretrain: vocabulary size does not match model config");
    }

    PretrainResult res;
    res.params = init_params(mcfg, derive_seed(tcfg.seed, "init"));
    if (tcfg.epochs == 0) return res;

    const EncodedCorpus train = encode_corpus(train_seqs, vocab, mcfg, false);
    const EncodedCorpus val = encode_corpus(val_seqs, vocab, mcfg, false);
    const uint64_t val_mask_seed = derive_seed(tcfg.seed, "val");

    Pcg32 rng_order(derive_seed(tcfg.seed, "order"));
    Pcg32 rng_mask(derive_seed(tcfg.seed, "mask"));
    Pcg32 rng_dropout(derive_seed(tcfg.seed, "dropout"));

    ModelParams params = res.params;
    ModelParams grads = ModelParams::shaped(mcfg);
    Adam adam(mcfg, tcfg);

    double best_val = std::numeric_limits<double>::infinity();
    size_t bad_epochs = 0;
    std::vector<size_t> order = identity_order(train.enc.size());

    for (size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_order(order, rng_order);
        double loss_sum = 0.0;
        size_t target_sum = 0;
        for (size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
            const size_t end = std::min(order.size(), begin + tcfg.batch_size);
            Batch b = fill_batch(train, order, begin, end, mcfg.max_len);
            corrupt_batch(b, vocab.size(), tcfg, rng_mask);
            zero_params(grads);
            ForwardOutput out = backward(params, mcfg, b, Mode::mlm, grads, &rng_dropout);
            if (!std::isfinite(out.loss) || !all_finite(grads)) {
                throw std::runtime_error("pretrain: diverged (non-finite loss or gradient) at epoch " +
                                         std::to_string(epoch));
            }
            adam.step(params, grads);
            loss_sum += out.loss * static_cast<double>(out.n_mlm_targets);
            target_sum += out.n_mlm_targets;
        }
        const double train_loss = target_sum ? loss_sum / static_cast<double>(target_sum) : 0.0;
        const double val_loss = mlm_eval_loss(params, mcfg, tcfg, val, vocab.size(), val_mask_seed);
        res.log.push_back({epoch, train_loss, val_loss, wall_since(t0)});

        if (val_loss < best_val) {
            best_val = val_loss;
            res.params = params;
            res.best_epoch = epoch;
            bad_epochs = 0;
        } else if (++bad_epochs >= tcfg.patience) {
            break;
        }
    }
    return res;
}

FinetuneResult finetune(const ModelParams& start, const std::vector<TokenSequence>& train_seqs,
                        const std::vector<TokenSequence>& val_seqs, const Vocabulary& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    if (train_seqs.empty()) throw std::runtime_error("finetune: no training sequences");
    if (val_seqs.empty()) throw std::runtime_error("finetune: no validation sequences");
    if (static_cast<size_t>(vocab.size()) != mcfg.vocab_size) {
        throw std::runtime_error("finetune: vocabulary size does not match model config");
    }

    const EncodedCorpus train = encode_corpus(train_seqs, vocab, mcfg, true);
    const EncodedCorpus val = encode_corpus(val_seqs, vocab, mcfg, true);
    auto single_class = [](const std::vector<int8_t>& ys) {
        bool pos = false, neg = false;
        for (int8_t y : ys) (y ? pos : neg) = true;
        return !(pos && neg);
    };
    if (single_class(train.labels)) {
        throw std::runtime_error("finetune: training split holds a single class");
    }
    if (single_class(val.labels)) {
        throw std::runtime_error("finetune: validation split holds a single class");
    }

    Pcg32 rng_order(derive_seed(tcfg.seed, "order"));
    Pcg32 rng_dropout(derive_seed(tcfg.seed, "dropout"));

    FinetuneResult res;
    res.params = start;
    ModelParams params = start;
    ModelParams grads = ModelParams::shaped(mcfg);
    Adam adam(mcfg, tcfg);

    const std::vector<int> val_labels(val.labels.begin(), val.labels.end());
    const std::vector<size_t> val_order = identity_order(val.enc.size());

    double best_auc = -1.0;
    size_t bad_epochs = 0;
    std::vector<size_t> order = identity_order(train.enc.size());

    for (size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_order(order, rng_order);
        double loss_sum = 0.0;
        size_t n_sum = 0;
        for (size_t begin = 0; begin < order.size(); begin += tcfg.batch_size) {
            const size_t end = std::min(order.size(), begin + tcfg.batch_size);
            Batch b = fill_batch(train, order, begin, end, mcfg.max_len);
            zero_params(grads);
            ForwardOutput out = backward(params, mcfg, b, Mode::classify, grads, &rng_dropout);
            if (!std::isfinite(out.loss) || !all_finite(grads)) {
                throw std::runtime_error("finetune: diverged (non-finite loss or gradient) at epoch " +
                                         std::to_string(epoch));
            }
            adam.step(params, grads, tcfg.freeze_encoder);
            loss_sum += out.loss * static_cast<double>(b.n);
            n_sum += b.n;
        }
        const double train_loss = loss_sum / static_cast<double>(n_sum);

        std::vector<double> val_probs;
        for (size_t begin = 0; begin < val_order.size(); begin += tcfg.batch_size) {
            const size_t end = std::min(val_order.size(), begin + tcfg.batch_size);
            Batch b = fill_batch(val, val_order, begin, end, mcfg.max_len);
            ForwardOutput out = forward(params, mcfg, b, Mode::classify);
            val_probs.insert(val_probs.end(), out.probs.begin(), out.probs.end());
        }
        const double val_auc = roc_auc(val_probs, val_labels);
        res.log.push_back({epoch, train_loss, val_auc, wall_since(t0)});

        if (val_auc > best_auc) {
            best_auc = val_auc;
            res.params = params;
            res.best_epoch = epoch;
            res.best_val_auc = val_auc;
            bad_epochs = 0;
        } else if (++bad_epochs >= tcfg.patience) {
            break;
        }
    }
    return res;
}

std::vector<double> predict(const ModelParams& params, const ModelConfig& mcfg,
                            const std::vector<TokenSequence>& seqs, const Vocabulary& vocab,
                            size_t batch_size) {
    if (batch_size < 1) throw std::runtime_error("predict: batch_size must be >= 1");
    EncodedCorpus corpus = encode_corpus(seqs, vocab, mcfg, false);
    corpus.labels.assign(corpus.enc.size(), 0);  // classify mode wants labels; loss is discarded
    const std::vector<size_t> order = identity_order(corpus.enc.size());
    std::vector<double> probs;
    probs.reserve(seqs.size());
    for (size_t begin = 0; begin < order.size(); begin += batch_size) {
        const size_t end = std::min(order.size(), begin + batch_size);
        Batch b = fill_batch(corpus, order, begin, end, mcfg.max_len);
        ForwardOutput out = forward(params, mcfg, b, Mode::classify);
        probs.insert(probs.end(), out.probs.begin(), out.probs.end());
    }
    return probs;
}

}  // namespace ckdprog
