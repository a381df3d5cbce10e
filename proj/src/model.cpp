#include "ckdprog/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace ckdprog {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;    // 1/sqrt(2)
constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2*pi)

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow; -log(sigmoid(z)) == softplus(-z).
double softplus(double t) {
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

}  // namespace

ModelConfig ModelConfig::desk_scale(size_t vocab_size) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    return cfg;
}

ModelConfig ModelConfig::full_scale(size_t vocab_size) {
    ModelConfig cfg;
    cfg.n_layers = 6;
    cfg.n_heads = 6;
    cfg.d_model = 768;
    cfg.d_ff = 3072;
    cfg.max_len = 512;
    cfg.vocab_size = vocab_size;
    return cfg;
}

void ModelConfig::validate() const {
    if (n_layers < 1) throw std::runtime_error("model: n_layers must be >= 1");
    if (n_heads < 1) throw std::runtime_error("model: n_heads must be >= 1");
    if (d_model < 1 || d_model % n_heads != 0) {
        throw std::runtime_error("model: d_model must be a positive multiple of n_heads");
    }
    if (d_ff < 1) throw std::runtime_error("model: d_ff must be >= 1");
    if (max_len < 2) throw std::runtime_error("model: max_len must be >= 2");
    if (vocab_size < 6) throw std::runtime_error("model: vocab_size must cover the specials");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw std::runtime_error("model: dropout_p must lie in [0, 1)");
    }
}

ModelParams ModelParams::shaped(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.tok_emb = Mat(cfg.vocab_size, cfg.d_model);
    p.pos_emb = Mat(cfg.max_len, cfg.d_model);
    p.layers.resize(cfg.n_layers);
    for (auto& lay : p.layers) {
        lay.ln1_g = Mat(1, cfg.d_model);
        lay.ln1_b = Mat(1, cfg.d_model);
        lay.wq = Mat(cfg.d_model, cfg.d_model);
        lay.wk = Mat(cfg.d_model, cfg.d_model);
        lay.wv = Mat(cfg.d_model, cfg.d_model);
        lay.wo = Mat(cfg.d_model, cfg.d_model);
        lay.bq = Mat(1, cfg.d_model);
        lay.bk = Mat(1, cfg.d_model);
        lay.bv = Mat(1, cfg.d_model);
        lay.bo = Mat(1, cfg.d_model);
        lay.ln2_g = Mat(1, cfg.d_model);
        lay.ln2_b = Mat(1, cfg.d_model);
        lay.w1 = Mat(cfg.d_model, cfg.d_ff);
        lay.b1 = Mat(1, cfg.d_ff);
        lay.w2 = Mat(cfg.d_ff, cfg.d_model);
        lay.b2 = Mat(1, cfg.d_model);
    }
    p.lnf_g = Mat(1, cfg.d_model);
    p.lnf_b = Mat(1, cfg.d_model);
    if (!cfg.tie_mlm_head) p.mlm_w = Mat(cfg.vocab_size, cfg.d_model);
    p.mlm_bias = Mat(1, cfg.vocab_size);
    p.cls_w = Mat(1, cfg.d_model);
    p.cls_b = Mat(1, 1);
    return p;
}

size_t param_count(const ModelParams& p) {
    size_t n = 0;
    visit_params(p, [&](const std::string&, ParamKind, const Mat& m) { n += m.size(); });
    return n;
}

bool all_finite(const ModelParams& p) {
    bool ok = true;
    visit_params(p, [&](const std::string&, ParamKind, const Mat& m) {
        for (double v : m.a) {
            if (!std::isfinite(v)) ok = false;
        }
    });
    return ok;
}

ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
    ModelParams p = ModelParams::shaped(cfg);
    Pcg32 rng(seed);
    visit_params(p, [&](const std::string&, ParamKind kind, Mat& m) {
        switch (kind) {
            case ParamKind::weight:
                for (double& v : m.a) v = 0.02 * rng.truncated_gauss2();
                break;
            case ParamKind::ln_scale:
                for (double& v : m.a) v = 1.0;
                break;
            case ParamKind::bias:
                break;  // shaped() zeroed them
        }
    });
    return p;
}

namespace {

void check_batch(const ModelConfig& cfg, const Batch& batch, Mode mode) {
    if (batch.n == 0 || batch.len == 0) throw std::runtime_error("model: empty batch");
    if (batch.len > cfg.max_len) throw std::runtime_error("model: batch length exceeds max_len");
    if (batch.ids.size() != batch.n * batch.len || batch.mask.size() != batch.n * batch.len) {
        throw std::runtime_error("model: batch shape mismatch");
    }
    for (size_t i = 0; i < batch.ids.size(); ++i) {
        if (batch.ids[i] < 0 || static_cast<size_t>(batch.ids[i]) >= cfg.vocab_size) {
            throw std::runtime_error("model: token id outside vocabulary");
        }
        if (batch.mask[i] > 1) throw std::runtime_error("model: mask entries must be 0/1");
    }
    for (size_t b = 0; b < batch.n; ++b) {
        bool any = false;
        for (size_t t = 0; t < batch.len; ++t) any = any || batch.m(b, t);
        if (!any) throw std::runtime_error("model: example without any unmasked position");
    }
    if (mode == Mode::mlm) {
        if (batch.mlm_targets.size() != batch.n * batch.len) {
            throw std::runtime_error("model: mlm target shape mismatch");
        }
        for (size_t i = 0; i < batch.mlm_targets.size(); ++i) {
            int32_t tgt = batch.mlm_targets[i];
            if (tgt == kIgnoreTarget) continue;
            if (tgt < 0 || static_cast<size_t>(tgt) >= cfg.vocab_size) {
                throw std::runtime_error("model: mlm target outside vocabulary");
            }
            if (!batch.mask[i]) throw std::runtime_error("model: mlm target at padded position");
        }
    } else {
        if (batch.labels.size() != batch.n) throw std::runtime_error("model: label count mismatch");
        for (int8_t y : batch.labels) {
            if (y != 0 && y != 1) throw std::runtime_error("model: labels must be 0/1");
        }
        for (size_t b = 0; b < batch.n; ++b) {
            if (!batch.m(b, 0)) {
                throw std::runtime_error("model: classify mode needs a real token at position 0");
            }
        }
    }
}

// Inverted dropout in place; keep stays empty when dropout is off.
void apply_dropout(Mat& x, std::vector<uint8_t>& keep, double p, Pcg32* rng) {
    keep.clear();
    if (rng == nullptr || p <= 0.0) return;
    keep.resize(x.size());
    const double scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < x.size(); ++i) {
        if (rng->uniform() < p) {
            keep[i] = 0;
            x.a[i] = 0.0;
        } else {
            keep[i] = 1;
            x.a[i] *= scale;
        }
    }
}

void dropout_backward(Mat& d, const std::vector<uint8_t>& keep, double p) {
    if (keep.empty()) return;
    const double scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < d.size(); ++i) d.a[i] = keep[i] ? d.a[i] * scale : 0.0;
}

// y = g (x - mean) / sqrt(var + eps) + b, per row; mean/rstd cached for backward.
void layer_norm(const Mat& x, const Mat& g, const Mat& b, Mat& y, std::vector<double>& mean,
                std::vector<double>& rstd) {
    const size_t n = x.cols;
    y = Mat(x.rows, n);
    mean.resize(x.rows);
    rstd.resize(x.rows);
    for (size_t r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        double mu = 0.0;
        for (size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double rs = 1.0 / std::sqrt(var + kLnEps);
        mean[r] = mu;
        rstd[r] = rs;
        double* yr = y.row(r);
        for (size_t j = 0; j < n; ++j) yr[j] = g.a[j] * (xr[j] - mu) * rs + b.a[j];
    }
}

// Accumulates dg/db and adds dL/dx into dx_acc (which may already hold the
// residual passthrough term).
void layer_norm_backward(const Mat& dy, const Mat& x, const std::vector<double>& mean,
                         const std::vector<double>& rstd, const Mat& g, Mat& dg, Mat& db,
                         Mat& dx_acc) {
    const size_t n = x.cols;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t r = 0; r < x.rows; ++r) {
        const double* xr = x.row(r);
        const double* dyr = dy.row(r);
        double* dxr = dx_acc.row(r);
        const double mu = mean[r];
        const double rs = rstd[r];
        double sum_t = 0.0, sum_tx = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double xh = (xr[j] - mu) * rs;
            dg.a[j] += dyr[j] * xh;
            db.a[j] += dyr[j];
            double t = dyr[j] * g.a[j];
            sum_t += t;
            sum_tx += t * xh;
        }
        const double mt = sum_t * inv_n;
        const double mtx = sum_tx * inv_n;
        for (size_t j = 0; j < n; ++j) {
            double xh = (xr[j] - mu) * rs;
            double t = dyr[j] * g.a[j];
            dxr[j] += rs * (t - mt - xh * mtx);
        }
    }
}

// y = x W + b (bias broadcast over rows).
void linear(const Mat& x, const Mat& w, const Mat& b, Mat& y) {
    y = Mat(x.rows, w.cols);
    matmul_acc(y, x, w);
    for (size_t r = 0; r < y.rows; ++r) {
        double* yr = y.row(r);
        for (size_t j = 0; j < y.cols; ++j) yr[j] += b.a[j];
    }
}

void linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dw, Mat& db, Mat* dx_acc) {
    matmul_tn_acc(dw, x, dy);
    for (size_t r = 0; r < dy.rows; ++r) {
        const double* dyr = dy.row(r);
        for (size_t j = 0; j < dy.cols; ++j) db.a[j] += dyr[j];
    }
    if (dx_acc != nullptr) matmul_nt_acc(*dx_acc, dy, w);
}

struct LayerCache {
    Mat x_in, ln1_out;
    std::vector<double> m1, r1;
    Mat q, k, v, ctx;
    std::vector<Mat> att;  // per head, len x len softmax weights
    Mat att_proj;          // branch value after projection and dropout
    std::vector<uint8_t> drop_att;
    Mat x_mid, ln2_out;
    std::vector<double> m2, r2;
    Mat ff1, ff_act, ff2;
    std::vector<uint8_t> drop_ff;
};

struct ExampleCache {
    std::vector<uint8_t> drop_emb;
    std::vector<LayerCache> layers;
    Mat x_final, lnf_out;
    std::vector<double> mf, rf;
    Mat logits;      // mlm: len x vocab
    double z = 0.0;  // classify pre-sigmoid
    double prob = 0.0;
};

// Encoder stack for one example. Padded key positions are skipped outright in
// attention (not -inf'd), so activations at real positions are bit-identical
// with or without a padding tail; padded query rows are never computed.
void encode_example(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, size_t b,
                    ExampleCache& c, Pcg32* dropout_rng) {
    const size_t len = batch.len;
    const size_t h_dim = cfg.d_model;
    const size_t dh = cfg.d_head();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat x(len, h_dim);
    for (size_t t = 0; t < len; ++t) {
        const double* te = p.tok_emb.row(static_cast<size_t>(batch.id(b, t)));
        const double* pe = p.pos_emb.row(t);
        double* xr = x.row(t);
        for (size_t j = 0; j < h_dim; ++j) xr[j] = te[j] + pe[j];
    }
    apply_dropout(x, c.drop_emb, cfg.dropout_p, dropout_rng);

    c.layers.resize(cfg.n_layers);
    std::vector<double> score(len);
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = c.layers[l];
        const LayerParams& lp = p.layers[l];
        lc.x_in = std::move(x);

        layer_norm(lc.x_in, lp.ln1_g, lp.ln1_b, lc.ln1_out, lc.m1, lc.r1);
        linear(lc.ln1_out, lp.wq, lp.bq, lc.q);
        linear(lc.ln1_out, lp.wk, lp.bk, lc.k);
        linear(lc.ln1_out, lp.wv, lp.bv, lc.v);

        lc.ctx = Mat(len, h_dim);
        lc.att.assign(cfg.n_heads, Mat(len, len));
        for (size_t h = 0; h < cfg.n_heads; ++h) {
            const size_t o = h * dh;
            Mat& att = lc.att[h];
            for (size_t t = 0; t < len; ++t) {
                if (!batch.m(b, t)) continue;  // padded queries never attend
                const double* qt = lc.q.row(t) + o;
                double mx = -std::numeric_limits<double>::infinity();
                for (size_t s = 0; s < len; ++s) {
                    if (!batch.m(b, s)) continue;
                    const double* ks = lc.k.row(s) + o;
                    double dot = 0.0;
                    for (size_t j = 0; j < dh; ++j) dot += qt[j] * ks[j];
                    score[s] = dot * scale;
                    mx = std::max(mx, score[s]);
                }
                double denom = 0.0;
                for (size_t s = 0; s < len; ++s) {
                    if (!batch.m(b, s)) continue;
                    double e = std::exp(score[s] - mx);
                    att(t, s) = e;
                    denom += e;
                }
                const double inv = 1.0 / denom;
                double* ct = lc.ctx.row(t) + o;
                for (size_t s = 0; s < len; ++s) {
                    if (!batch.m(b, s)) continue;
                    att(t, s) *= inv;
                    const double w = att(t, s);
                    const double* vs = lc.v.row(s) + o;
                    for (size_t j = 0; j < dh; ++j) ct[j] += w * vs[j];
                }
            }
        }
        linear(lc.ctx, lp.wo, lp.bo, lc.att_proj);
        apply_dropout(lc.att_proj, lc.drop_att, cfg.dropout_p, dropout_rng);

        lc.x_mid = lc.x_in;
        for (size_t i = 0; i < lc.x_mid.size(); ++i) lc.x_mid.a[i] += lc.att_proj.a[i];

        layer_norm(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2_out, lc.m2, lc.r2);
        linear(lc.ln2_out, lp.w1, lp.b1, lc.ff1);
        lc.ff_act = Mat(len, cfg.d_ff);
        for (size_t i = 0; i < lc.ff1.size(); ++i) lc.ff_act.a[i] = gelu(lc.ff1.a[i]);
        linear(lc.ff_act, lp.w2, lp.b2, lc.ff2);
        apply_dropout(lc.ff2, lc.drop_ff, cfg.dropout_p, dropout_rng);

        x = lc.x_mid;
        for (size_t i = 0; i < x.size(); ++i) x.a[i] += lc.ff2.a[i];
    }
    c.x_final = std::move(x);
    layer_norm(c.x_final, p.lnf_g, p.lnf_b, c.lnf_out, c.mf, c.rf);
}

// MLM head on one example: logits = h E^T + bias; returns summed cross-entropy
// over this example's target positions and bumps n_targets.
double mlm_head_example(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, size_t b,
                        ExampleCache& c, size_t& n_targets) {
    const Mat& emb = cfg.tie_mlm_head ? p.tok_emb : p.mlm_w;
    c.logits = Mat(batch.len, cfg.vocab_size);
    matmul_nt_acc(c.logits, c.lnf_out, emb);
    for (size_t t = 0; t < batch.len; ++t) {
        double* lr = c.logits.row(t);
        for (size_t v = 0; v < cfg.vocab_size; ++v) lr[v] += p.mlm_bias.a[v];
    }
    double loss_sum = 0.0;
    for (size_t t = 0; t < batch.len; ++t) {
        int32_t tgt = batch.mlm_targets[b * batch.len + t];
        if (tgt == kIgnoreTarget) continue;
        const double* lr = c.logits.row(t);
        double mx = lr[0];
        for (size_t v = 1; v < cfg.vocab_size; ++v) mx = std::max(mx, lr[v]);
        double sum = 0.0;
        for (size_t v = 0; v < cfg.vocab_size; ++v) sum += std::exp(lr[v] - mx);
        loss_sum += mx + std::log(sum) - lr[static_cast<size_t>(tgt)];
        ++n_targets;
    }
    return loss_sum;
}

double classify_head_example(const ModelParams& p, const Batch& batch, size_t b, ExampleCache& c) {
    double z = p.cls_b.a[0];
    const double* h0 = c.lnf_out.row(0);
    for (size_t j = 0; j < p.cls_w.cols; ++j) z += p.cls_w.a[j] * h0[j];
    c.z = z;
    c.prob = sigmoid(z);
    return batch.labels[b] == 1 ? softplus(-z) : softplus(z);
}

// Reverse pass for one example; loss_scale is d(batch loss)/d(example sum),
// i.e. 1/n_targets for mlm and 1/batch_n for classify.
void backward_example(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, size_t b,
                      Mode mode, ExampleCache& c, double loss_scale, ModelParams& grads) {
    const size_t len = batch.len;
    const size_t h_dim = cfg.d_model;
    const size_t dh = cfg.d_head();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat dlnf(len, h_dim);
    if (mode == Mode::mlm) {
        const Mat& emb = cfg.tie_mlm_head ? p.tok_emb : p.mlm_w;
        Mat& demb = cfg.tie_mlm_head ? grads.tok_emb : grads.mlm_w;
        for (size_t t = 0; t < len; ++t) {
            int32_t tgt = batch.mlm_targets[b * len + t];
            if (tgt == kIgnoreTarget) continue;
            const double* lr = c.logits.row(t);
            double mx = lr[0];
            for (size_t v = 1; v < cfg.vocab_size; ++v) mx = std::max(mx, lr[v]);
            double sum = 0.0;
            for (size_t v = 0; v < cfg.vocab_size; ++v) sum += std::exp(lr[v] - mx);
            const double inv = 1.0 / sum;
            const double* ht = c.lnf_out.row(t);
            double* dlt = dlnf.row(t);
            for (size_t v = 0; v < cfg.vocab_size; ++v) {
                double prob = std::exp(lr[v] - mx) * inv;
                double d = (prob - (static_cast<int32_t>(v) == tgt ? 1.0 : 0.0)) * loss_scale;
                grads.mlm_bias.a[v] += d;
                const double* ev = emb.row(v);
                double* dev = demb.row(v);
                for (size_t j = 0; j < h_dim; ++j) {
                    dlt[j] += d * ev[j];
                    dev[j] += d * ht[j];
                }
            }
        }
    } else {
        const double dz = (c.prob - static_cast<double>(batch.labels[b])) * loss_scale;
        const double* h0 = c.lnf_out.row(0);
        double* dl0 = dlnf.row(0);
        for (size_t j = 0; j < h_dim; ++j) {
            dl0[j] += dz * p.cls_w.a[j];
            grads.cls_w.a[j] += dz * h0[j];
        }
        grads.cls_b.a[0] += dz;
    }

    Mat dx(len, h_dim);
    layer_norm_backward(dlnf, c.x_final, c.mf, c.rf, p.lnf_g, grads.lnf_g, grads.lnf_b, dx);

    for (size_t l = cfg.n_layers; l-- > 0;) {
        LayerCache& lc = c.layers[l];
        const LayerParams& lp = p.layers[l];
        LayerParams& gl = grads.layers[l];

        // Feed-forward branch: dx holds d/d(x_out); the same matrix also
        // carries the residual passthrough toward x_mid.
        Mat dff2 = dx;
        dropout_backward(dff2, lc.drop_ff, cfg.dropout_p);
        Mat dff_act(len, cfg.d_ff);
        linear_backward(lc.ff_act, lp.w2, dff2, gl.w2, gl.b2, &dff_act);
        Mat dff1(len, cfg.d_ff);
        for (size_t i = 0; i < dff1.size(); ++i) dff1.a[i] = dff_act.a[i] * gelu_grad(lc.ff1.a[i]);
        Mat dln2(len, h_dim);
        linear_backward(lc.ln2_out, lp.w1, dff1, gl.w1, gl.b1, &dln2);
        layer_norm_backward(dln2, lc.x_mid, lc.m2, lc.r2, lp.ln2_g, gl.ln2_g, gl.ln2_b, dx);

        // Attention branch: dx now holds d/d(x_mid).
        Mat datt_proj = dx;
        dropout_backward(datt_proj, lc.drop_att, cfg.dropout_p);
        Mat dctx(len, h_dim);
        linear_backward(lc.ctx, lp.wo, datt_proj, gl.wo, gl.bo, &dctx);

        Mat dq(len, h_dim), dk(len, h_dim), dv(len, h_dim);
        std::vector<double> datt(len);
        for (size_t h = 0; h < cfg.n_heads; ++h) {
            const size_t o = h * dh;
            const Mat& att = lc.att[h];
            for (size_t t = 0; t < len; ++t) {
                if (!batch.m(b, t)) continue;
                const double* dct = dctx.row(t) + o;
                double sum_av = 0.0;
                for (size_t s = 0; s < len; ++s) {
                    if (!batch.m(b, s)) continue;
                    const double w = att(t, s);
                    const double* vs = lc.v.row(s) + o;
                    double* dvs = dv.row(s) + o;
                    double d = 0.0;
                    for (size_t j = 0; j < dh; ++j) {
                        d += dct[j] * vs[j];
                        dvs[j] += w * dct[j];
                    }
                    datt[s] = d;
                    sum_av += w * d;
                }
                double* dqt = dq.row(t) + o;
                const double* qt = lc.q.row(t) + o;
                for (size_t s = 0; s < len; ++s) {
                    if (!batch.m(b, s)) continue;
                    const double ds = att(t, s) * (datt[s] - sum_av) * scale;
                    const double* ks = lc.k.row(s) + o;
                    double* dks = dk.row(s) + o;
                    for (size_t j = 0; j < dh; ++j) {
                        dqt[j] += ds * ks[j];
                        dks[j] += ds * qt[j];
                    }
                }
            }
        }
        Mat dln1(len, h_dim);
        linear_backward(lc.ln1_out, lp.wq, dq, gl.wq, gl.bq, &dln1);
        linear_backward(lc.ln1_out, lp.wk, dk, gl.wk, gl.bk, &dln1);
        linear_backward(lc.ln1_out, lp.wv, dv, gl.wv, gl.bv, &dln1);
        layer_norm_backward(dln1, lc.x_in, lc.m1, lc.r1, lp.ln1_g, gl.ln1_g, gl.ln1_b, dx);
        // dx now holds d/d(x_in) for the next-lower layer.
    }

    dropout_backward(dx, c.drop_emb, cfg.dropout_p);
    for (size_t t = 0; t < len; ++t) {
        const double* dxr = dx.row(t);
        double* dte = grads.tok_emb.row(static_cast<size_t>(batch.id(b, t)));
        double* dpe = grads.pos_emb.row(t);
        for (size_t j = 0; j < h_dim; ++j) {
            dte[j] += dxr[j];
            dpe[j] += dxr[j];
        }
    }
}

size_t count_mlm_targets(const Batch& batch) {
    size_t n = 0;
    for (int32_t tgt : batch.mlm_targets) {
        if (tgt != kIgnoreTarget) ++n;
    }
    return n;
}

}  // namespace

ForwardOutput forward(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, Mode mode,
                      const ForwardOptions& opts) {
    cfg.validate();
    check_batch(cfg, batch, mode);
    ForwardOutput out;
    double loss_sum = 0.0;
    for (size_t b = 0; b < batch.n; ++b) {
        ExampleCache c;
        encode_example(p, cfg, batch, b, c, opts.dropout_rng);
        if (mode == Mode::mlm) {
            loss_sum += mlm_head_example(p, cfg, batch, b, c, out.n_mlm_targets);
            out.mlm_logits.push_back(std::move(c.logits));
        } else {
            loss_sum += classify_head_example(p, batch, b, c);
            out.probs.push_back(c.prob);
        }
        if (opts.keep_attention) {
            std::vector<Mat> att;
            for (auto& lc : c.layers) {
                for (auto& a : lc.att) att.push_back(std::move(a));
            }
            out.attention.push_back(std::move(att));
        }
    }
    if (mode == Mode::mlm) {
        out.loss = out.n_mlm_targets ? loss_sum / static_cast<double>(out.n_mlm_targets) : 0.0;
    } else {
        out.loss = loss_sum / static_cast<double>(batch.n);
    }
    return out;
}

ForwardOutput backward(const ModelParams& p, const ModelConfig& cfg, const Batch& batch, Mode mode,
                       ModelParams& grads, Pcg32* dropout_rng) {
    cfg.validate();
    check_batch(cfg, batch, mode);
    ForwardOutput out;
    const size_t total_targets = mode == Mode::mlm ? count_mlm_targets(batch) : 0;
    const double loss_scale = mode == Mode::mlm
                                  ? (total_targets ? 1.0 / static_cast<double>(total_targets) : 0.0)
                                  : 1.0 / static_cast<double>(batch.n);
    double loss_sum = 0.0;
    for (size_t b = 0; b < batch.n; ++b) {
        ExampleCache c;
        encode_example(p, cfg, batch, b, c, dropout_rng);
        if (mode == Mode::mlm) {
            loss_sum += mlm_head_example(p, cfg, batch, b, c, out.n_mlm_targets);
        } else {
            loss_sum += classify_head_example(p, batch, b, c);
            out.probs.push_back(c.prob);
        }
        backward_example(p, cfg, batch, b, mode, c, loss_scale, grads);
    }
    if (mode == Mode::mlm) {
        out.loss = out.n_mlm_targets ? loss_sum / static_cast<double>(out.n_mlm_targets) : 0.0;
    } else {
        out.loss = loss_sum / static_cast<double>(batch.n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kCheckpointMagic = "ckdprog-checkpoint-v1";
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params,
                     uint64_t vocab_hash) {
    cfg.validate();
    nlohmann::json header;
    header["config"] = {
        {"n_layers", cfg.n_layers},   {"n_heads", cfg.n_heads},
        {"d_model", cfg.d_model},     {"d_ff", cfg.d_ff},
        {"max_len", cfg.max_len},     {"vocab_size", cfg.vocab_size},
        {"dropout_p", cfg.dropout_p}, {"tie_mlm_head", cfg.tie_mlm_head},
    };
    header["vocab_hash"] = std::to_string(vocab_hash);
    nlohmann::json tensors = nlohmann::json::array();
    visit_params(params, [&](const std::string& name, ParamKind, const Mat& m) {
        tensors.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
    });
    header["tensors"] = std::move(tensors);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << kCheckpointMagic << "\n" << header.dump() << "\n";
    visit_params(params, [&](const std::string&, ParamKind, const Mat& m) {
        out.write(reinterpret_cast<const char*>(m.a.data()),
                  static_cast<std::streamsize>(m.a.size() * sizeof(double)));
    });
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::optional<uint64_t> expect_vocab_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string magic, header_line;
    if (!std::getline(in, magic) || magic != kCheckpointMagic) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    if (!std::getline(in, header_line)) {
        throw std::runtime_error("truncated checkpoint header: " + path);
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad checkpoint header in " + path + ": " + e.what());
    }

    Checkpoint ck;
    try {
        const auto& jc = header.at("config");
        ck.config.n_layers = jc.at("n_layers").get<size_t>();
        ck.config.n_heads = jc.at("n_heads").get<size_t>();
        ck.config.d_model = jc.at("d_model").get<size_t>();
        ck.config.d_ff = jc.at("d_ff").get<size_t>();
        ck.config.max_len = jc.at("max_len").get<size_t>();
        ck.config.vocab_size = jc.at("vocab_size").get<size_t>();
        ck.config.dropout_p = jc.at("dropout_p").get<double>();
        ck.config.tie_mlm_head = jc.at("tie_mlm_head").get<bool>();
        ck.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad checkpoint header in " + path + ": " + e.what());
    }
    ck.config.validate();
    if (expect_vocab_hash && *expect_vocab_hash != ck.vocab_hash) {
        throw std::runtime_error("checkpoint vocabulary hash mismatch: " + path);
    }

    ck.params = ModelParams::shaped(ck.config);
    const auto& tensors = header.at("tensors");
    size_t idx = 0;
    std::string problem;
    visit_params(ck.params, [&](const std::string& name, ParamKind, Mat& m) {
        if (!problem.empty()) return;
        if (idx >= tensors.size()) {
            problem = "checkpoint is missing tensor " + name;
            return;
        }
        const auto& jt = tensors[idx++];
        if (jt.at("name").get<std::string>() != name ||
            jt.at("rows").get<size_t>() != m.rows || jt.at("cols").get<size_t>() != m.cols) {
            problem = "checkpoint tensor mismatch at " + name;
            return;
        }
        in.read(reinterpret_cast<char*>(m.a.data()),
                static_cast<std::streamsize>(m.a.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(m.a.size() * sizeof(double))) {
            problem = "checkpoint data truncated at " + name;
        }
    });
    if (problem.empty() && idx != tensors.size()) problem = "checkpoint lists extra tensors";
    if (!problem.empty()) throw std::runtime_error(problem + ": " + path);
    if (!all_finite(ck.params)) throw std::runtime_error("checkpoint holds non-finite values: " + path);
    return ck;
}

}  // namespace ckdprog
