#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ckdprog/mat.hpp"
#include "ckdprog/rng.hpp"

namespace ckdprog {

// Transformer encoder (BERT-family): learned positional embeddings, pre-norm
// residual blocks, GELU feed-forward, masked-language-model head tied to the
// input embedding, and a single-unit sigmoid classification head on [CLS].
// Everything runs in 64-bit floats with hand-written backprop so analytic
// gradients can be checked against central finite differences.

struct ModelConfig {
    size_t n_layers = 2;
    size_t n_heads = 2;
    size_t d_model = 32;
    size_t d_ff = 64;
    size_t max_len = 128;
    size_t vocab_size = 0;  // set from the vocabulary
    double dropout_p = 0.1; // training only; evaluation always runs dropout-free
    bool tie_mlm_head = true;

    // Small configuration that trains in seconds on a CPU.
    static ModelConfig desk_scale(size_t vocab_size);
    // Layer/head/width counts of the full-size model (slow without BLAS).
    static ModelConfig full_scale(size_t vocab_size);

    size_t d_head() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
    Mat ln1_g, ln1_b;        // 1 x d_model
    Mat wq, wk, wv, wo;      // d_model x d_model
    Mat bq, bk, bv, bo;      // 1 x d_model
    Mat ln2_g, ln2_b;        // 1 x d_model
    Mat w1, b1;              // d_model x d_ff, 1 x d_ff
    Mat w2, b2;              // d_ff x d_model, 1 x d_model
};

struct ModelParams {
    Mat tok_emb;             // vocab_size x d_model
    Mat pos_emb;             // max_len x d_model
    std::vector<LayerParams> layers;
    Mat lnf_g, lnf_b;        // 1 x d_model
    Mat mlm_w;               // vocab_size x d_model; empty when head is tied
    Mat mlm_bias;            // 1 x vocab_size
    Mat cls_w, cls_b;        // 1 x d_model, 1 x 1

    // All-zero tensors with the shapes cfg implies (grads, Adam moments).
    static ModelParams shaped(const ModelConfig& cfg);
};

enum class ParamKind { weight, bias, ln_scale };

// Visits every parameter tensor in a fixed order. The names are stable; the
// checkpoint format and the optimizer both key off this traversal.
template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
    fn("tok_emb", ParamKind::weight, p.tok_emb);
    fn("pos_emb", ParamKind::weight, p.pos_emb);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        auto& lay = p.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        fn(pre + "ln1_g", ParamKind::ln_scale, lay.ln1_g);
        fn(pre + "ln1_b", ParamKind::bias, lay.ln1_b);
        fn(pre + "wq", ParamKind::weight, lay.wq);
        fn(pre + "bq", ParamKind::bias, lay.bq);
        fn(pre + "wk", ParamKind::weight, lay.wk);
        fn(pre + "bk", ParamKind::bias, lay.bk);
        fn(pre + "wv", ParamKind::weight, lay.wv);
        fn(pre + "bv", ParamKind::bias, lay.bv);
        fn(pre + "wo", ParamKind::weight, lay.wo);
        fn(pre + "bo", ParamKind::bias, lay.bo);
        fn(pre + "ln2_g", ParamKind::ln_scale, lay.ln2_g);
        fn(pre + "ln2_b", ParamKind::bias, lay.ln2_b);
        fn(pre + "w1", ParamKind::weight, lay.w1);
        fn(pre + "b1", ParamKind::bias, lay.b1);
        fn(pre + "w2", ParamKind::weight, lay.w2);
        fn(pre + "b2", ParamKind::bias, lay.b2);
    }
    fn("lnf_g", ParamKind::ln_scale, p.lnf_g);
    fn("lnf_b", ParamKind::bias, p.lnf_b);
    if (!p.mlm_w.empty()) fn("mlm_w", ParamKind::weight, p.mlm_w);
    fn("mlm_bias", ParamKind::bias, p.mlm_bias);
    fn("cls_w", ParamKind::weight, p.cls_w);
    fn("cls_b", ParamKind::bias, p.cls_b);
}

size_t param_count(const ModelParams& p);
bool all_finite(const ModelParams& p);

// Seeded initialization: weights ~ N(0, 0.02^2) truncated at +-2 sigma,
// layer-norm scales 1, every bias 0.
ModelParams init_params(const ModelConfig& cfg, uint64_t seed);

// A batch of fixed-length rows. mask is 1 for real tokens, 0 for [PAD]
// padding; mlm_targets uses kIgnoreTarget at positions without a target.
struct Batch {
    size_t n = 0;
    size_t len = 0;
    std::vector<int32_t> ids;          // n * len
    std::vector<uint8_t> mask;         // n * len
    std::vector<int32_t> mlm_targets;  // n * len (mlm mode)
    std::vector<int8_t> labels;        // n (classify mode)

    int32_t id(size_t b, size_t t) const { return ids[b * len + t]; }
    uint8_t m(size_t b, size_t t) const { return mask[b * len + t]; }
};

constexpr int32_t kIgnoreTarget = -1;

enum class Mode { mlm, classify };

struct ForwardOutput {
    double loss = 0.0;
    size_t n_mlm_targets = 0;          // positions contributing to the MLM mean
    std::vector<double> probs;         // classify: per-example probability
    std::vector<Mat> mlm_logits;       // mlm: one len x vocab matrix per example
    // keep_attention only: per example, n_layers*n_heads matrices of len x len
    // softmax weights (rows of padded queries are zero).
    std::vector<std::vector<Mat>> attention;
};

struct ForwardOptions {
    Pcg32* dropout_rng = nullptr;  // null or dropout_p == 0 -> no dropout
    bool keep_attention = false;
};

ForwardOutput forward(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, Mode mode,
                      const ForwardOptions& opts = {});

// Runs forward with activation caches, then accumulates dLoss/dParam into
// grads (which must be ModelParams::shaped(cfg)). Returns the forward output.
ForwardOutput backward(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, Mode mode,
                       ModelParams& grads, Pcg32* dropout_rng = nullptr);

// Checkpoint container: text header (config, vocabulary hash, tensor
// directory) followed by raw little-endian doubles in visitation order.
struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    uint64_t vocab_hash = 0;
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                     uint64_t vocab_hash);
Checkpoint load_checkpoint(const std::string& path,
                           std::optional<uint64_t> expect_vocab_hash = std::nullopt);

}  // namespace ckdprog
