#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "chmc/errors.hpp"
#include "chmc/mat.hpp"
#include "chmc/masking.hpp"
#include "chmc/rng.hpp"
#include "chmc/tokenizer.hpp"

namespace chmc {

// Desk-scale BERT-style encoder: post-layer-norm transformer blocks, learned
// position embeddings, tanh pooler over the CLS hidden state, MLM output
// projection tied to the token embeddings. Templated on the scalar type so
// gradient checking can run the whole stack in 64-bit.
struct EncoderConfig {
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int max_len = 64;
    int vocab_size = 0;
    double dropout = 0.1;

    void validate() const {
        if (n_layers < 0 || n_heads <= 0 || d_model <= 0 || d_ff <= 0 || max_len <= 0 ||
            vocab_size <= 0)
            throw ConfigError("encoder dimensions must be positive");
        if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
    }
};

template <typename S>
struct LayerParams {
    Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections, (out x in) weights
    Mat<S> ln1_g, ln1_b;
    Mat<S> w1, b1, w2, b2;  // feed-forward
    Mat<S> ln2_g, ln2_b;
};

template <typename S>
struct EncoderParams {
    EncoderConfig cfg;
    Mat<S> tok_emb;   // (V x d)
    Mat<S> pos_emb;   // (max_len x d)
    Mat<S> emb_ln_g, emb_ln_b;
    std::vector<LayerParams<S>> layers;
    Mat<S> mlm_bias;  // (1 x V); output projection is tied to tok_emb
    Mat<S> pooler_w;  // (d x d)
    Mat<S> pooler_b;

    static EncoderParams zeros(const EncoderConfig& cfg) {
        cfg.validate();
        EncoderParams p;
        p.cfg = cfg;
        const size_t d = static_cast<size_t>(cfg.d_model);
        const size_t f = static_cast<size_t>(cfg.d_ff);
        const size_t v = static_cast<size_t>(cfg.vocab_size);
        p.tok_emb = Mat<S>(v, d);
        p.pos_emb = Mat<S>(static_cast<size_t>(cfg.max_len), d);
        p.emb_ln_g = Mat<S>(1, d);
        p.emb_ln_b = Mat<S>(1, d);
        p.layers.resize(static_cast<size_t>(cfg.n_layers));
        for (auto& l : p.layers) {
            l.wq = Mat<S>(d, d); l.bq = Mat<S>(1, d);
            l.wk = Mat<S>(d, d); l.bk = Mat<S>(1, d);
            l.wv = Mat<S>(d, d); l.bv = Mat<S>(1, d);
            l.wo = Mat<S>(d, d); l.bo = Mat<S>(1, d);
            l.ln1_g = Mat<S>(1, d); l.ln1_b = Mat<S>(1, d);
            l.w1 = Mat<S>(f, d); l.b1 = Mat<S>(1, f);
            l.w2 = Mat<S>(d, f); l.b2 = Mat<S>(1, d);
            l.ln2_g = Mat<S>(1, d); l.ln2_b = Mat<S>(1, d);
        }
        p.mlm_bias = Mat<S>(1, v);
        p.pooler_w = Mat<S>(d, d);
        p.pooler_b = Mat<S>(1, d);
        return p;
    }

    // normal(0, 0.02) weights, zero biases, unit layer-norm gains
    static EncoderParams init(const EncoderConfig& cfg, uint64_t seed) {
        EncoderParams p = zeros(cfg);
        Rng rng(mix_seed(seed, "encoder_init"));
        auto fill_normal = [&](Mat<S>& m) {
            for (auto& v : m.a) v = static_cast<S>(rng.normal() * 0.02);
        };
        auto fill_ones = [](Mat<S>& m) {
            for (auto& v : m.a) v = S(1);
        };
        fill_normal(p.tok_emb);
        fill_normal(p.pos_emb);
        fill_ones(p.emb_ln_g);
        for (auto& l : p.layers) {
            fill_normal(l.wq); fill_normal(l.wk); fill_normal(l.wv); fill_normal(l.wo);
            fill_ones(l.ln1_g);
            fill_normal(l.w1); fill_normal(l.w2);
            fill_ones(l.ln2_g);
        }
        fill_normal(p.pooler_w);
        return p;
    }

    template <typename F>
    void for_each(F&& f) {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        f("emb_ln.g", emb_ln_g);
        f("emb_ln.b", emb_ln_b);
        for (size_t i = 0; i < layers.size(); ++i) {
            const std::string pre = "layer" + std::to_string(i) + ".";
            auto& l = layers[i];
            f(pre + "wq", l.wq); f(pre + "bq", l.bq);
            f(pre + "wk", l.wk); f(pre + "bk", l.bk);
            f(pre + "wv", l.wv); f(pre + "bv", l.bv);
            f(pre + "wo", l.wo); f(pre + "bo", l.bo);
            f(pre + "ln1.g", l.ln1_g); f(pre + "ln1.b", l.ln1_b);
            f(pre + "w1", l.w1); f(pre + "b1", l.b1);
            f(pre + "w2", l.w2); f(pre + "b2", l.b2);
            f(pre + "ln2.g", l.ln2_g); f(pre + "ln2.b", l.ln2_b);
        }
        f("mlm_bias", mlm_bias);
        f("pooler.w", pooler_w);
        f("pooler.b", pooler_b);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<EncoderParams*>(this)->for_each(
            [&](const std::string& n, Mat<S>& m) { f(n, static_cast<const Mat<S>&>(m)); });
    }
};

// Flattened (b*T + t) token batch. attn_mask is 1 for real tokens, 0 for PAD.
struct Batch {
    size_t n = 0;  // examples
    size_t len = 0;
    std::vector<int> ids;
    std::vector<uint8_t> attn_mask;
    std::vector<int> targets;  // kIgnoreTarget where no MLM target

    static Batch from_sequences(const std::vector<TokenSequence>& seqs);
    static Batch from_masked(const std::vector<TokenSequence>& seqs, const MaskingConfig& cfg,
                             uint64_t seed, size_t vocab_size);
};

inline Batch Batch::from_sequences(const std::vector<TokenSequence>& seqs) {
    Batch b;
    if (seqs.empty()) return b;
    b.n = seqs.size();
    b.len = seqs[0].size();
    for (const auto& s : seqs) {
        if (s.size() != b.len) throw ValidationError("ragged batch: sequence lengths differ");
        for (size_t i = 0; i < s.size(); ++i) {
            b.ids.push_back(s.ids[i]);
            b.attn_mask.push_back(s.ids[i] == kPadId ? 0 : 1);
            b.targets.push_back(kIgnoreTarget);
        }
    }
    return b;
}

inline Batch Batch::from_masked(const std::vector<TokenSequence>& seqs, const MaskingConfig& cfg,
                                uint64_t seed, size_t vocab_size) {
    Batch b = from_sequences(seqs);
    for (size_t e = 0; e < seqs.size(); ++e) {
        MaskedExample ex = mask_sequence(seqs[e], cfg, mix_seed(seed, e), vocab_size);
        for (size_t i = 0; i < b.len; ++i) {
            b.ids[e * b.len + i] = ex.input_ids[i];
            b.targets[e * b.len + i] = ex.target_ids[i];
        }
    }
    return b;
}

namespace detail {

template <typename S>
struct LnCache {
    Mat<S> xhat;     // (rows x d)
    Mat<S> inv_std;  // (rows x 1)
};

template <typename S>
void layer_norm_forward(const Mat<S>& x, const Mat<S>& g, const Mat<S>& b, Mat<S>& y,
                        LnCache<S>& cache) {
    const size_t rows = x.rows, d = x.cols;
    const S eps = static_cast<S>(1e-12);
    cache.xhat = Mat<S>(rows, d);
    cache.inv_std = Mat<S>(rows, 1);
    y = Mat<S>(rows, d);
    for (size_t i = 0; i < rows; ++i) {
        const S* xi = x.row(i);
        S mean = S(0);
        for (size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<S>(d);
        S var = S(0);
        for (size_t j = 0; j < d; ++j) {
            S c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<S>(d);
        S inv = S(1) / std::sqrt(var + eps);
        cache.inv_std.at(i, 0) = inv;
        S* xh = cache.xhat.row(i);
        S* yi = y.row(i);
        for (size_t j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mean) * inv;
            yi[j] = g.at(0, j) * xh[j] + b.at(0, j);
        }
    }
}

template <typename S>
void layer_norm_backward(const Mat<S>& dy, const Mat<S>& g, const LnCache<S>& cache, Mat<S>& dx,
                         Mat<S>& dg, Mat<S>& db) {
    const size_t rows = dy.rows, d = dy.cols;
    dx = Mat<S>(rows, d);
    for (size_t i = 0; i < rows; ++i) {
        const S* dyi = dy.row(i);
        const S* xh = cache.xhat.row(i);
        const S inv = cache.inv_std.at(i, 0);
        S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
        for (size_t j = 0; j < d; ++j) {
            S dxh = dyi[j] * g.at(0, j);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
            dg.at(0, j) += dyi[j] * xh[j];
            db.at(0, j) += dyi[j];
        }
        const S inv_d = S(1) / static_cast<S>(d);
        S* dxi = dx.row(i);
        for (size_t j = 0; j < d; ++j) {
            S dxh = dyi[j] * g.at(0, j);
            dxi[j] = inv * (dxh - sum_dxhat * inv_d - xh[j] * sum_dxhat_xhat * inv_d);
        }
    }
}

template <typename S>
S gelu(S x) {
    return x * S(0.5) * std::erfc(-x * S(0.7071067811865476));
}

template <typename S>
S gelu_grad(S x) {
    const S phi = std::exp(-x * x * S(0.5)) * S(0.3989422804014327);
    return S(0.5) * std::erfc(-x * S(0.7071067811865476)) + x * phi;
}

// inverted-dropout multiplier mask; empty Mat means identity
template <typename S>
Mat<S> dropout_mask(size_t rows, size_t cols, double p, Rng& rng) {
    Mat<S> m(rows, cols);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    for (auto& v : m.a) v = rng.uniform() < p ? S(0) : keep_scale;
    return m;
}

template <typename S>
void apply_mask(Mat<S>& x, const Mat<S>& m) {
    if (m.empty()) return;
    for (size_t i = 0; i < x.a.size(); ++i) x.a[i] *= m.a[i];
}

}  // namespace detail

template <typename S>
struct LayerCache {
    Mat<S> input;                 // (B*T x d)
    Mat<S> q, k, v;               // (B*T x d)
    Mat<S> att;                   // (B*H*T x T), softmax probs
    Mat<S> att_drop;              // dropout mask on att (may be empty)
    Mat<S> ctx;                   // (B*T x d), heads concatenated
    Mat<S> attn_out_drop;         // dropout mask on attention output
    detail::LnCache<S> ln1;
    Mat<S> h_mid;                 // after first residual + LN
    Mat<S> ff_pre;                // (B*T x d_ff) pre-activation
    Mat<S> ff_drop;               // dropout mask on FF output
    detail::LnCache<S> ln2;
    Mat<S> h_out;
};

template <typename S>
struct ForwardCache {
    Mat<S> emb_sum;               // token + position embeddings
    detail::LnCache<S> emb_ln;
    Mat<S> emb_drop;              // dropout mask
    Mat<S> emb_out;               // embedding output fed to layer 0
    std::vector<LayerCache<S>> layers;
    Mat<S> pool_pre;              // (B x d) pooler pre-activation
    Mat<S> cls;                   // (B x d) tanh-pooled CLS embedding

    const Mat<S>& hidden() const { return layers.empty() ? emb_out : layers.back().h_out; }
};

// Full forward pass. dropout_p > 0 uses seeded inverted dropout (training
// mode); dropout_p == 0 is the deterministic inference path.
template <typename S>
ForwardCache<S> encoder_forward(const EncoderParams<S>& p, const Batch& batch, double dropout_p,
                                uint64_t dropout_seed) {
    const auto& cfg = p.cfg;
    const size_t B = batch.n, T = batch.len;
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t H = static_cast<size_t>(cfg.n_heads);
    const size_t dh = d / H;
    const size_t f = static_cast<size_t>(cfg.d_ff);
    if (B == 0) throw ValidationError("empty batch");
    if (T > static_cast<size_t>(cfg.max_len)) throw ValidationError("sequence longer than max_len");
    for (int id : batch.ids)
        if (id < 0 || id >= cfg.vocab_size)
            throw ValidationError("token id out of range: " + std::to_string(id));

    Rng drop_rng(mix_seed(dropout_seed, "dropout"));
    ForwardCache<S> cache;
    const size_t rows = B * T;

    cache.emb_sum = Mat<S>(rows, d);
    for (size_t b = 0; b < B; ++b) {
        for (size_t t = 0; t < T; ++t) {
            const size_t r = b * T + t;
            const S* te = p.tok_emb.row(static_cast<size_t>(batch.ids[r]));
            const S* pe = p.pos_emb.row(t);
            S* out = cache.emb_sum.row(r);
            for (size_t j = 0; j < d; ++j) out[j] = te[j] + pe[j];
        }
    }
    detail::layer_norm_forward(cache.emb_sum, p.emb_ln_g, p.emb_ln_b, cache.emb_out, cache.emb_ln);
    if (dropout_p > 0.0) {
        cache.emb_drop = detail::dropout_mask<S>(rows, d, dropout_p, drop_rng);
        detail::apply_mask(cache.emb_out, cache.emb_drop);
    }

    const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
    const Mat<S>* h = &cache.emb_out;
    cache.layers.resize(p.layers.size());
    for (size_t li = 0; li < p.layers.size(); ++li) {
        const auto& lp = p.layers[li];
        auto& lc = cache.layers[li];
        lc.input = *h;

        lc.q = Mat<S>(rows, d);
        lc.k = Mat<S>(rows, d);
        lc.v = Mat<S>(rows, d);
        gemm_nt(lc.input, lp.wq, lc.q);
        add_bias_rows(lc.q, lp.bq);
        gemm_nt(lc.input, lp.wk, lc.k);
        add_bias_rows(lc.k, lp.bk);
        gemm_nt(lc.input, lp.wv, lc.v);
        add_bias_rows(lc.v, lp.bv);

        lc.att = Mat<S>(B * H * T, T);
        if (dropout_p > 0.0)
            lc.att_drop = detail::dropout_mask<S>(B * H * T, T, dropout_p, drop_rng);
        lc.ctx = Mat<S>(rows, d);
        std::vector<S> scores(T);
        for (size_t b = 0; b < B; ++b) {
            for (size_t hh = 0; hh < H; ++hh) {
                const size_t off = hh * dh;
                for (size_t t = 0; t < T; ++t) {
                    const S* qt = lc.q.row(b * T + t) + off;
                    S maxv = S(-1e30);
                    for (size_t j = 0; j < T; ++j) {
                        if (!batch.attn_mask[b * T + j]) {
                            scores[j] = S(-1e30);
                            continue;
                        }
                        const S* kj = lc.k.row(b * T + j) + off;
                        S acc = S(0);
                        for (size_t c = 0; c < dh; ++c) acc += qt[c] * kj[c];
                        scores[j] = acc * inv_sqrt_dh;
                        if (scores[j] > maxv) maxv = scores[j];
                    }
                    S denom = S(0);
                    S* prow = lc.att.row((b * H + hh) * T + t);
                    for (size_t j = 0; j < T; ++j) {
                        if (!batch.attn_mask[b * T + j]) {
                            prow[j] = S(0);
                            continue;
                        }
                        prow[j] = std::exp(scores[j] - maxv);
                        denom += prow[j];
                    }
                    for (size_t j = 0; j < T; ++j) prow[j] /= denom;
                    // context = (dropped) probs . V
                    S* ctx = lc.ctx.row(b * T + t) + off;
                    const S* dmask =
                        lc.att_drop.empty() ? nullptr : lc.att_drop.row((b * H + hh) * T + t);
                    for (size_t j = 0; j < T; ++j) {
                        S pj = prow[j];
                        if (dmask) pj *= dmask[j];
                        if (pj == S(0)) continue;
                        const S* vj = lc.v.row(b * T + j) + off;
                        for (size_t c = 0; c < dh; ++c) ctx[c] += pj * vj[c];
                    }
                }
            }
        }

        Mat<S> att_out(rows, d);
        gemm_nt(lc.ctx, lp.wo, att_out);
        add_bias_rows(att_out, lp.bo);
        if (dropout_p > 0.0) {
            lc.attn_out_drop = detail::dropout_mask<S>(rows, d, dropout_p, drop_rng);
            detail::apply_mask(att_out, lc.attn_out_drop);
        }
        for (size_t i = 0; i < rows * d; ++i) att_out.a[i] += lc.input.a[i];
        detail::layer_norm_forward(att_out, lp.ln1_g, lp.ln1_b, lc.h_mid, lc.ln1);

        lc.ff_pre = Mat<S>(rows, f);
        gemm_nt(lc.h_mid, lp.w1, lc.ff_pre);
        add_bias_rows(lc.ff_pre, lp.b1);
        Mat<S> ff_act(rows, f);
        for (size_t i = 0; i < rows * f; ++i) ff_act.a[i] = detail::gelu(lc.ff_pre.a[i]);
        Mat<S> ff_out(rows, d);
        gemm_nt(ff_act, lp.w2, ff_out);
        add_bias_rows(ff_out, lp.b2);
        if (dropout_p > 0.0) {
            lc.ff_drop = detail::dropout_mask<S>(rows, d, dropout_p, drop_rng);
            detail::apply_mask(ff_out, lc.ff_drop);
        }
        for (size_t i = 0; i < rows * d; ++i) ff_out.a[i] += lc.h_mid.a[i];
        detail::layer_norm_forward(ff_out, lp.ln2_g, lp.ln2_b, lc.h_out, lc.ln2);

        if (!all_finite(lc.h_out))
            throw NumericError("non-finite hidden state at layer " + std::to_string(li));
        h = &lc.h_out;
    }

    // tanh pooler over the CLS position
    Mat<S> h0(B, d);
    for (size_t b = 0; b < B; ++b) {
        const S* src = cache.hidden().row(b * T);
        std::copy(src, src + d, h0.row(b));
    }
    cache.pool_pre = Mat<S>(B, d);
    gemm_nt(h0, p.pooler_w, cache.pool_pre);
    add_bias_rows(cache.pool_pre, p.pooler_b);
    cache.cls = Mat<S>(B, d);
    for (size_t i = 0; i < B * d; ++i) cache.cls.a[i] = std::tanh(cache.pool_pre.a[i]);
    return cache;
}

// Accumulates gradients for dHidden (loss wrt final hidden states, may be
// empty) plus dCls (loss wrt pooled CLS embedding, may be empty).
template <typename S>
void encoder_backward(const EncoderParams<S>& p, const Batch& batch, const ForwardCache<S>& cache,
                      const Mat<S>& dHidden, const Mat<S>& dCls, EncoderParams<S>& grads) {
    const auto& cfg = p.cfg;
    const size_t B = batch.n, T = batch.len;
    const size_t d = static_cast<size_t>(cfg.d_model);
    const size_t H = static_cast<size_t>(cfg.n_heads);
    const size_t dh = d / H;
    const size_t rows = B * T;
    const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

    Mat<S> dh_total = dHidden.empty() ? Mat<S>(rows, d) : dHidden;

    if (!dCls.empty()) {
        // cls = tanh(pool_pre); pool_pre = h0 . pooler_w^T + pooler_b
        Mat<S> dpool(B, d);
        for (size_t i = 0; i < B * d; ++i) {
            const S th = cache.cls.a[i];
            dpool.a[i] = dCls.a[i] * (S(1) - th * th);
        }
        Mat<S> h0(B, d);
        for (size_t b = 0; b < B; ++b) {
            const S* src = cache.hidden().row(b * T);
            std::copy(src, src + d, h0.row(b));
        }
        gemm_tn(dpool, h0, grads.pooler_w, true);
        add_col_sums(dpool, grads.pooler_b);
        Mat<S> dh0(B, d);
        gemm_nn(dpool, p.pooler_w, dh0);
        for (size_t b = 0; b < B; ++b) {
            S* dst = dh_total.row(b * T);
            const S* src = dh0.row(b);
            for (size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    }

    Mat<S> dcur = std::move(dh_total);
    for (size_t li = p.layers.size(); li-- > 0;) {
        const auto& lp = p.layers[li];
        const auto& lc = cache.layers[li];
        auto& lg = grads.layers[li];

        // LN2
        Mat<S> dsum2;
        detail::layer_norm_backward(dcur, lp.ln2_g, lc.ln2, dsum2, lg.ln2_g, lg.ln2_b);

        // FF branch
        Mat<S> dff_out = dsum2;  // copy; residual handled below
        detail::apply_mask(dff_out, lc.ff_drop);
        Mat<S> ff_act(rows, lc.ff_pre.cols);
        for (size_t i = 0; i < ff_act.a.size(); ++i) ff_act.a[i] = detail::gelu(lc.ff_pre.a[i]);
        gemm_tn(dff_out, ff_act, lg.w2, true);
        add_col_sums(dff_out, lg.b2);
        Mat<S> dff_act(rows, lc.ff_pre.cols);
        gemm_nn(dff_out, lp.w2, dff_act);
        for (size_t i = 0; i < dff_act.a.size(); ++i)
            dff_act.a[i] *= detail::gelu_grad(lc.ff_pre.a[i]);
        gemm_tn(dff_act, lc.h_mid, lg.w1, true);
        add_col_sums(dff_act, lg.b1);
        Mat<S> dh_mid(rows, d);
        gemm_nn(dff_act, lp.w1, dh_mid);
        for (size_t i = 0; i < rows * d; ++i) dh_mid.a[i] += dsum2.a[i];  // residual

        // LN1
        Mat<S> dsum1;
        detail::layer_norm_backward(dh_mid, lp.ln1_g, lc.ln1, dsum1, lg.ln1_g, lg.ln1_b);

        // attention output projection
        Mat<S> datt_out = dsum1;
        detail::apply_mask(datt_out, lc.attn_out_drop);
        gemm_tn(datt_out, lc.ctx, lg.wo, true);
        add_col_sums(datt_out, lg.bo);
        Mat<S> dctx(rows, d);
        gemm_nn(datt_out, lp.wo, dctx);

        // attention core
        Mat<S> dq(rows, d), dk(rows, d), dv(rows, d);
        std::vector<S> dprow(T), dscore(T);
        for (size_t b = 0; b < B; ++b) {
            for (size_t hh = 0; hh < H; ++hh) {
                const size_t off = hh * dh;
                for (size_t t = 0; t < T; ++t) {
                    const S* prow = lc.att.row((b * H + hh) * T + t);
                    const S* dmask =
                        lc.att_drop.empty() ? nullptr : lc.att_drop.row((b * H + hh) * T + t);
                    const S* dctx_t = dctx.row(b * T + t) + off;
                    // dV and d(dropped probs)
                    for (size_t j = 0; j < T; ++j) {
                        S pj = prow[j];
                        S pj_drop = dmask ? pj * dmask[j] : pj;
                        const S* vj = lc.v.row(b * T + j) + off;
                        S acc = S(0);
                        for (size_t c = 0; c < dh; ++c) acc += dctx_t[c] * vj[c];
                        dprow[j] = dmask ? acc * dmask[j] : acc;
                        if (pj_drop != S(0)) {
                            S* dvj = dv.row(b * T + j) + off;
                            for (size_t c = 0; c < dh; ++c) dvj[c] += pj_drop * dctx_t[c];
                        }
                    }
                    // softmax backward
                    S dot = S(0);
                    for (size_t j = 0; j < T; ++j) dot += dprow[j] * prow[j];
                    for (size_t j = 0; j < T; ++j) dscore[j] = prow[j] * (dprow[j] - dot);
                    // dQ, dK
                    S* dqt = dq.row(b * T + t) + off;
                    const S* qt = lc.q.row(b * T + t) + off;
                    for (size_t j = 0; j < T; ++j) {
                        const S ds = dscore[j] * inv_sqrt_dh;
                        if (ds == S(0)) continue;
                        const S* kj = lc.k.row(b * T + j) + off;
                        S* dkj = dk.row(b * T + j) + off;
                        for (size_t c = 0; c < dh; ++c) {
                            dqt[c] += ds * kj[c];
                            dkj[c] += ds * qt[c];
                        }
                    }
                }
            }
        }

        // projections back to the layer input
        Mat<S> dinput = dsum1;  // residual path
        gemm_tn(dq, lc.input, lg.wq, true);
        add_col_sums(dq, lg.bq);
        gemm_nn(dq, lp.wq, dinput, true);
        gemm_tn(dk, lc.input, lg.wk, true);
        add_col_sums(dk, lg.bk);
        gemm_nn(dk, lp.wk, dinput, true);
        gemm_tn(dv, lc.input, lg.wv, true);
        add_col_sums(dv, lg.bv);
        gemm_nn(dv, lp.wv, dinput, true);

        dcur = std::move(dinput);
    }

    // embedding layer-norm and lookups
    detail::apply_mask(dcur, cache.emb_drop);
    Mat<S> demb;
    detail::layer_norm_backward(dcur, p.emb_ln_g, cache.emb_ln, demb, grads.emb_ln_g,
                                grads.emb_ln_b);
    for (size_t b = 0; b < B; ++b) {
        for (size_t t = 0; t < T; ++t) {
            const size_t r = b * T + t;
            const S* g = demb.row(r);
            S* te = grads.tok_emb.row(static_cast<size_t>(batch.ids[r]));
            S* pe = grads.pos_emb.row(t);
            for (size_t j = 0; j < d; ++j) {
                te[j] += g[j];
                pe[j] += g[j];
            }
        }
    }
}

struct MlmStats {
    double loss = 0.0;
    size_t n_targets = 0;
    size_t n_correct = 0;  // top-1 recovery at target positions
};

// Cross-entropy over tied-embedding logits at target positions. When grads
// is non-null, accumulates dHidden (resized by caller) plus tok_emb/mlm_bias
// gradients. Mean is taken over all target positions in the batch.
template <typename S>
MlmStats mlm_head(const EncoderParams<S>& p, const Batch& batch, const ForwardCache<S>& cache,
                  Mat<S>* dHidden, EncoderParams<S>* grads) {
    const size_t d = static_cast<size_t>(p.cfg.d_model);
    const size_t v = static_cast<size_t>(p.cfg.vocab_size);
    MlmStats stats;
    for (int t : batch.targets)
        if (t != kIgnoreTarget) ++stats.n_targets;
    if (stats.n_targets == 0) return stats;

    const Mat<S>& hidden = cache.hidden();
    std::vector<S> logits(v);
    const S inv_n = S(1) / static_cast<S>(stats.n_targets);
    double loss = 0.0;
    for (size_t r = 0; r < batch.targets.size(); ++r) {
        const int target = batch.targets[r];
        if (target == kIgnoreTarget) continue;
        const S* h = hidden.row(r);
        S maxv = S(-1e30);
        size_t argmax = 0;
        for (size_t j = 0; j < v; ++j) {
            const S* e = p.tok_emb.row(j);
            S acc = p.mlm_bias.at(0, j);
            for (size_t c = 0; c < d; ++c) acc += h[c] * e[c];
            logits[j] = acc;
            if (acc > maxv) {
                maxv = acc;
                argmax = j;
            }
        }
        if (argmax == static_cast<size_t>(target)) ++stats.n_correct;
        S denom = S(0);
        for (size_t j = 0; j < v; ++j) denom += std::exp(logits[j] - maxv);
        const S log_denom = std::log(denom) + maxv;
        loss += static_cast<double>(log_denom - logits[static_cast<size_t>(target)]);
        if (grads != nullptr && dHidden != nullptr) {
            S* dh = dHidden->row(r);
            for (size_t j = 0; j < v; ++j) {
                S prob = std::exp(logits[j] - log_denom);
                S dlogit = prob * inv_n;
                if (j == static_cast<size_t>(target)) dlogit -= inv_n;
                if (dlogit == S(0)) continue;
                grads->mlm_bias.at(0, j) += dlogit;
                const S* e = p.tok_emb.row(j);
                S* de = grads->tok_emb.row(j);
                for (size_t c = 0; c < d; ++c) {
                    dh[c] += dlogit * e[c];
                    de[c] += dlogit * h[c];
                }
            }
        }
    }
    stats.loss = loss / static_cast<double>(stats.n_targets);
    return stats;
}

// Convenience wrappers matching the operation contracts.

template <typename S>
struct MlmLossResult {
    double loss = 0.0;
    size_t n_targets = 0;
    EncoderParams<S> grads;
};

template <typename S>
MlmLossResult<S> mlm_loss_and_grads(const EncoderParams<S>& p, const Batch& batch,
                                    double dropout_p = 0.0, uint64_t dropout_seed = 0) {
    if (batch.n == 0) throw ValidationError("empty batch");
    MlmLossResult<S> res;
    res.grads = EncoderParams<S>::zeros(p.cfg);
    auto cache = encoder_forward(p, batch, dropout_p, dropout_seed);
    Mat<S> dHidden(batch.n * batch.len, static_cast<size_t>(p.cfg.d_model));
    MlmStats stats = mlm_head(p, batch, cache, &dHidden, &res.grads);
    res.loss = stats.loss;
    res.n_targets = stats.n_targets;
    if (stats.n_targets == 0) return res;  // zero loss, zero grads by contract
    encoder_backward(p, batch, cache, dHidden, Mat<S>(), res.grads);
    return res;
}

template <typename S>
std::vector<S> cls_embedding(const EncoderParams<S>& p, const TokenSequence& seq) {
    Batch b = Batch::from_sequences({seq});
    auto cache = encoder_forward(p, b, 0.0, 0);
    return std::vector<S>(cache.cls.a.begin(), cache.cls.a.end());
}

}  // namespace chmc
