#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ckdprog/csv.hpp"
#include "ckdprog/model.hpp"
#include "ckdprog/sequence.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace ckdprog;

namespace {

// One layer, eight wide: big enough to exercise every code path, small
// enough that exhaustive finite differences stay fast.
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.max_len = 12;
    cfg.vocab_size = 12;
    cfg.dropout_p = 0.0;
    return cfg;
}

Batch make_batch(const std::vector<std::vector<int32_t>>& rows, size_t len) {
    Batch b;
    b.n = rows.size();
    b.len = len;
    b.ids.assign(b.n * len, Vocabulary::kPad);
    b.mask.assign(b.n * len, 0);
    b.mlm_targets.assign(b.n * len, kIgnoreTarget);
    for (size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() <= len);
        for (size_t t = 0; t < rows[i].size(); ++t) {
            b.ids[i * len + t] = rows[i][t];
            b.mask[i * len + t] = 1;
        }
    }
    return b;
}

// Batch used throughout: example 0 has four trailing pads, example 1 is full.
Batch grad_batch(Mode mode) {
    Batch b = make_batch({{Vocabulary::kCls, 5, Vocabulary::kMask, 7, 8, 9, 10, Vocabulary::kSep},
                          {Vocabulary::kCls, 5, 6, 7, Vocabulary::kMask, 9, 10, 11, 6, 7, 8,
                           Vocabulary::kSep}},
                         12);
    if (mode == Mode::mlm) {
        b.mlm_targets[0 * 12 + 2] = 6;   // the masked slot
        b.mlm_targets[0 * 12 + 4] = 8;   // a kept slot predicting itself
        b.mlm_targets[1 * 12 + 4] = 8;
    } else {
        b.labels = {1, 0};
    }
    return b;
}

std::vector<std::pair<std::string, Mat*>> tensor_list(ModelParams& p) {
    std::vector<std::pair<std::string, Mat*>> out;
    visit_params(p, [&](const std::string& name, ParamKind, Mat& m) { out.push_back({name, &m}); });
    return out;
}

}  // namespace

TEST_CASE("initialization matches the truncated-normal recipe") {
    ModelConfig cfg;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.max_len = 64;
    cfg.vocab_size = 200;
    ModelParams p = init_params(cfg, 7);

    double sum = 0.0, sum_sq = 0.0;
    size_t n_weights = 0;
    visit_params(p, [&](const std::string&, ParamKind kind, Mat& m) {
        for (double v : m.a) {
            switch (kind) {
                case ParamKind::weight:
                    CHECK(std::abs(v) <= 0.04);  // clipped at two sigma
                    sum += v;
                    sum_sq += v * v;
                    ++n_weights;
                    break;
                case ParamKind::bias:
                    CHECK(v == 0.0);
                    break;
                case ParamKind::ln_scale:
                    CHECK(v == 1.0);
                    break;
            }
        }
    });
    REQUIRE(n_weights > 10000);

    // Closed-form sd of a standard normal truncated to [-2, 2], scaled by 0.02.
    const double pi = 3.14159265358979323846;
    const double c = 2.0;
    const double phi_c = std::exp(-0.5 * c * c) / std::sqrt(2.0 * pi);
    const double mass = std::erf(c / std::sqrt(2.0));  // 2*Phi(c) - 1
    const double expect_sd = 0.02 * std::sqrt(1.0 - 2.0 * c * phi_c / mass);

    const double mean = sum / static_cast<double>(n_weights);
    const double sd = std::sqrt(sum_sq / static_cast<double>(n_weights) - mean * mean);
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::abs(sd - expect_sd) / expect_sd < 0.05);

    // Seeding is exact: same seed bitwise-identical, different seed not.
    ModelParams again = init_params(cfg, 7);
    ModelParams other = init_params(cfg, 8);
    CHECK(p.tok_emb.a == again.tok_emb.a);
    CHECK(p.layers[1].w1.a == again.layers[1].w1.a);
    CHECK(p.tok_emb.a != other.tok_emb.a);
}

TEST_CASE("config validation rejects inconsistent shapes") {
    ModelConfig cfg = tiny_config();
    CHECK_NOTHROW(cfg.validate());
    ModelConfig bad = cfg;
    bad.n_layers = 0;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.d_model = 9;  // not a multiple of n_heads
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.vocab_size = 5;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.dropout_p = 1.0;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.max_len = 1;
    CHECK_THROWS(bad.validate());

    CHECK(ModelConfig::desk_scale(100).d_model == 32);
    CHECK_NOTHROW(ModelConfig::desk_scale(100).validate());
    CHECK_NOTHROW(ModelConfig::full_scale(100).validate());
}

TEST_CASE("batch validation") {
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 1);

    Batch b = grad_batch(Mode::mlm);
    b.ids[3] = 12;  // outside vocab_size
    CHECK_THROWS(forward(p, cfg, b, Mode::mlm));

    b = grad_batch(Mode::mlm);
    b.mlm_targets[0 * 12 + 10] = 6;  // padded position
    CHECK_THROWS(forward(p, cfg, b, Mode::mlm));

    b = grad_batch(Mode::classify);
    b.mask[0] = 0;  // no [CLS] to classify from
    CHECK_THROWS(forward(p, cfg, b, Mode::classify));

    Batch empty;
    CHECK_THROWS(forward(p, cfg, empty, Mode::mlm));
}

TEST_CASE("untrained MLM loss sits at ln(vocab)") {
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 3);
    Batch b = grad_batch(Mode::mlm);
    ForwardOutput out = forward(p, cfg, b, Mode::mlm);
    CHECK(out.n_mlm_targets == 3);
    const double uniform_loss = std::log(static_cast<double>(cfg.vocab_size));
    CHECK(std::abs(out.loss - uniform_loss) / uniform_loss < 0.02);
}

TEST_CASE("classification loss is exactly the log of the reported probability") {
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 4);
    Batch one = make_batch({{Vocabulary::kCls, 5, 6, 7, Vocabulary::kSep}}, 8);

    one.labels = {1};
    ForwardOutput pos = forward(p, cfg, one, Mode::classify);
    REQUIRE(pos.probs.size() == 1);
    CHECK(pos.probs[0] > 0.0);
    CHECK(pos.probs[0] < 1.0);
    CHECK(std::abs(pos.loss - (-std::log(pos.probs[0]))) < 1e-12);

    one.labels = {0};
    ForwardOutput neg = forward(p, cfg, one, Mode::classify);
    CHECK(std::abs(neg.loss - (-std::log(1.0 - neg.probs[0]))) < 1e-12);
}

TEST_CASE("padding and batch composition never change an example's outputs") {
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 5);
    std::vector<int32_t> x = {Vocabulary::kCls, 5, 6, 7, 8, 9, 10, Vocabulary::kSep};
    std::vector<int32_t> y = {Vocabulary::kCls, 5, 6, 7, 8, 9, 10, 11, 6, 7, 8, Vocabulary::kSep};

    Batch padded = make_batch({x, y}, 12);  // x carries four pads
    Batch alone = make_batch({x}, 8);       // no padding at all
    padded.labels = {1, 0};
    alone.labels = {1};

    ForwardOutput both = forward(p, cfg, padded, Mode::classify);
    ForwardOutput solo = forward(p, cfg, alone, Mode::classify);
    CHECK(both.probs[0] == solo.probs[0]);  // bitwise: pads must be invisible

    // Same check through the MLM head, row by row.
    Batch padded_m = make_batch({x, y}, 12);
    Batch alone_m = make_batch({x}, 8);
    padded_m.mlm_targets[2] = 6;
    alone_m.mlm_targets[2] = 6;
    ForwardOutput both_m = forward(p, cfg, padded_m, Mode::mlm);
    ForwardOutput solo_m = forward(p, cfg, alone_m, Mode::mlm);
    CHECK(both_m.loss == solo_m.loss);
    for (size_t t = 0; t < 8; ++t) {
        for (size_t v = 0; v < cfg.vocab_size; ++v) {
            CHECK(both_m.mlm_logits[0](t, v) == solo_m.mlm_logits[0](t, v));
        }
    }
}

TEST_CASE("attention weights respect the padding mask") {
    ModelConfig cfg = tiny_config();
    cfg.n_layers = 2;
    ModelParams p = init_params(cfg, 6);
    Batch b = grad_batch(Mode::mlm);  // example 0 has pads at 8..11

    ForwardOptions opts;
    opts.keep_attention = true;
    ForwardOutput out = forward(p, cfg, b, Mode::mlm, opts);
    REQUIRE(out.attention.size() == 2);
    REQUIRE(out.attention[0].size() == cfg.n_layers * cfg.n_heads);

    for (const Mat& att : out.attention[0]) {
        REQUIRE(att.rows == 12);
        REQUIRE(att.cols == 12);
        for (size_t q = 0; q < 12; ++q) {
            double row_sum = 0.0;
            for (size_t k = 0; k < 12; ++k) {
                CHECK(att(q, k) >= 0.0);
                if (k >= 8) CHECK(att(q, k) == 0.0);  // padded keys get no mass
                row_sum += att(q, k);
            }
            if (q < 8) {
                CHECK(std::abs(row_sum - 1.0) < 1e-12);
            } else {
                CHECK(row_sum == 0.0);  // padded queries are skipped outright
            }
        }
    }
}

TEST_CASE("analytic gradients match central finite differences everywhere") {
    ModelConfig cfg = tiny_config();
    // The narrow model has steep third derivatives, so a smaller step keeps
    // the truncation error of the central difference well under the bound.
    const double eps = 1e-4;

    for (Mode mode : {Mode::mlm, Mode::classify}) {
        Batch b = grad_batch(mode);
        ModelParams p = init_params(cfg, 11);
        ModelParams grads = ModelParams::shaped(cfg);
        backward(p, cfg, b, mode, grads);

        std::map<std::string, Mat*> gmap;
        for (auto& [name, m] : tensor_list(grads)) gmap[name] = m;

        size_t checked = 0;
        double worst = 0.0;
        for (auto& [name, tensor] : tensor_list(p)) {
            Mat* g = gmap.at(name);
            REQUIRE(g->same_shape(*tensor));
            for (size_t i = 0; i < tensor->size(); ++i) {
                const double saved = tensor->a[i];
                tensor->a[i] = saved + eps;
                const double up = forward(p, cfg, b, mode).loss;
                tensor->a[i] = saved - eps;
                const double down = forward(p, cfg, b, mode).loss;
                tensor->a[i] = saved;
                const double fd = (up - down) / (2.0 * eps);
                const double an = g->a[i];
                const double rel = std::abs(an - fd) / std::max(1e-2, std::abs(an) + std::abs(fd));
                worst = std::max(worst, rel);
                ++checked;
            }
        }
        CHECK(checked == param_count(p));  // every coordinate, no sampling
        CHECK(worst < 1e-3);
        INFO("mode ", mode == Mode::mlm ? "mlm" : "classify", " worst rel err ", worst);
    }
}

TEST_CASE("a batch without MLM targets contributes nothing") {
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 12);
    Batch b = grad_batch(Mode::mlm);
    std::fill(b.mlm_targets.begin(), b.mlm_targets.end(), kIgnoreTarget);

    ModelParams grads = ModelParams::shaped(cfg);
    ForwardOutput out = backward(p, cfg, b, Mode::mlm, grads);
    CHECK(out.loss == 0.0);
    CHECK(out.n_mlm_targets == 0);
    visit_params(grads, [&](const std::string&, ParamKind, Mat& m) {
        for (double v : m.a) CHECK(v == 0.0);
    });
}

TEST_CASE("duplicating an example leaves the mean gradient unchanged") {
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 13);
    std::vector<int32_t> x = {Vocabulary::kCls, 5, 6, 7, 8, Vocabulary::kSep};

    Batch once = make_batch({x}, 8);
    once.labels = {1};
    Batch twice = make_batch({x, x}, 8);
    twice.labels = {1, 1};

    ModelParams g1 = ModelParams::shaped(cfg);
    ModelParams g2 = ModelParams::shaped(cfg);
    backward(p, cfg, once, Mode::classify, g1);
    backward(p, cfg, twice, Mode::classify, g2);

    std::map<std::string, Mat*> m2;
    for (auto& [name, m] : tensor_list(g2)) m2[name] = m;
    for (auto& [name, m] : tensor_list(g1)) {
        Mat* other = m2.at(name);
        for (size_t i = 0; i < m->size(); ++i) {
            CHECK(std::abs(m->a[i] - other->a[i]) <=
                  1e-12 * std::max(1.0, std::abs(m->a[i])));
        }
    }
}

TEST_CASE("dropout is driven entirely by the provided generator") {
    ModelConfig cfg = tiny_config();
    cfg.dropout_p = 0.3;
    ModelParams p = init_params(cfg, 14);
    Batch b = grad_batch(Mode::classify);

    ForwardOutput eval = forward(p, cfg, b, Mode::classify);  // no rng: dropout off

    Pcg32 rng_a(99);
    ForwardOptions opt_a;
    opt_a.dropout_rng = &rng_a;
    ForwardOutput drop_a = forward(p, cfg, b, Mode::classify, opt_a);

    Pcg32 rng_b(99);
    ForwardOptions opt_b;
    opt_b.dropout_rng = &rng_b;
    ForwardOutput drop_b = forward(p, cfg, b, Mode::classify, opt_b);

    Pcg32 rng_c(100);
    ForwardOptions opt_c;
    opt_c.dropout_rng = &rng_c;
    ForwardOutput drop_c = forward(p, cfg, b, Mode::classify, opt_c);

    CHECK(drop_a.loss == drop_b.loss);  // same generator state, same masks
    CHECK(drop_a.loss != eval.loss);
    CHECK(drop_a.loss != drop_c.loss);

    // p == 0 ignores the generator completely.
    ModelConfig quiet = cfg;
    quiet.dropout_p = 0.0;
    ModelParams q = init_params(quiet, 14);
    Pcg32 rng_d(7);
    ForwardOptions opt_d;
    opt_d.dropout_rng = &rng_d;
    CHECK(forward(q, quiet, b, Mode::classify, opt_d).loss ==
          forward(q, quiet, b, Mode::classify).loss);
}

TEST_CASE("checkpoints round-trip bitwise and verify their vocabulary hash") {
    TempDir tmp("ckpt");
    ModelConfig cfg = tiny_config();
    ModelParams p = init_params(cfg, 21);
    const std::string path = tmp.file("model.ckpt");
    save_checkpoint(path, cfg, p, 0xDEADBEEFull);

    Checkpoint ck = load_checkpoint(path, 0xDEADBEEFull);
    CHECK(ck.config == cfg);
    CHECK(ck.vocab_hash == 0xDEADBEEFull);
    std::map<std::string, Mat*> loaded;
    for (auto& [name, m] : tensor_list(ck.params)) loaded[name] = m;
    size_t tensors = 0;
    for (auto& [name, m] : tensor_list(p)) {
        CHECK(loaded.at(name)->a == m->a);
        ++tensors;
    }
    CHECK(tensors == loaded.size());

    // Saving the same state twice produces the same bytes.
    const std::string path2 = tmp.file("model2.ckpt");
    save_checkpoint(path2, cfg, p, 0xDEADBEEFull);
    CHECK(read_file(path) == read_file(path2));

    CHECK_THROWS(load_checkpoint(path, 0x1234ull));        // wrong hash
    CHECK_NOTHROW(load_checkpoint(path));                  // no expectation

    std::string bytes = read_file(path);
    write_file(tmp.file("short.ckpt"), std::string_view(bytes).substr(0, bytes.size() / 2));
    CHECK_THROWS(load_checkpoint(tmp.file("short.ckpt")));

    write_file(tmp.file("junk.ckpt"), "not a checkpoint\n{}\n");
    CHECK_THROWS(load_checkpoint(tmp.file("junk.ckpt")));
}
