#include <doctest.h>

#include <cmath>

#include "chmc/encoder.hpp"
#include "chmc/errors.hpp"
#include "test_support.hpp"

using namespace chmc;

namespace {

EncoderConfig tiny_config(int layers = 1, int vocab = 29) {
    EncoderConfig cfg;
    cfg.n_layers = layers;
    cfg.n_heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 24;
    cfg.max_len = 8;
    cfg.vocab_size = vocab;
    cfg.dropout = 0.0;
    return cfg;
}

Batch tiny_mlm_batch(const EncoderConfig& cfg) {
    Batch b;
    b.n = 2;
    b.len = static_cast<size_t>(cfg.max_len);
    // ex 0: CLS w w w w w SEP PAD; ex 1: CLS w w w SEP PAD PAD PAD
    const int V = cfg.vocab_size;
    std::vector<int> ids0 = {kClsId, 16, 17, 18, 19, 20, kSepId, kPadId};
    std::vector<int> ids1 = {kClsId, V - 1, 21, 22, kSepId, kPadId, kPadId, kPadId};
    std::vector<int> tg0 = {-1, 17, -1, 25, -1, -1, -1, -1};
    std::vector<int> tg1 = {-1, -1, 23, -1, -1, -1, -1, -1};
    for (size_t i = 0; i < 8; ++i) {
        b.ids.push_back(ids0[i]);
        b.targets.push_back(tg0[i]);
        b.attn_mask.push_back(ids0[i] == kPadId ? 0 : 1);
    }
    for (size_t i = 0; i < 8; ++i) {
        b.ids.push_back(ids1[i]);
        b.targets.push_back(tg1[i]);
        b.attn_mask.push_back(ids1[i] == kPadId ? 0 : 1);
    }
    return b;
}

// central finite differences against the analytic gradient of a scalar loss
template <typename LossFn>
double max_rel_error(EncoderParams<double>& params, const EncoderParams<double>& grads,
                     LossFn loss_fn, double eps = 1e-5) {
    double worst = 0.0;
    std::vector<std::pair<std::string, Mat<double>*>> tensors;
    params.for_each([&](const std::string& n, Mat<double>& m) { tensors.emplace_back(n, &m); });
    std::vector<std::pair<std::string, const Mat<double>*>> gtensors;
    grads.for_each([&](const std::string& n, const Mat<double>& m) { gtensors.emplace_back(n, &m); });
    for (size_t t = 0; t < tensors.size(); ++t) {
        Mat<double>& m = *tensors[t].second;
        const Mat<double>& g = *gtensors[t].second;
        for (size_t i = 0; i < m.count(); ++i) {
            const double keep = m.a[i];
            m.a[i] = keep + eps;
            const double up = loss_fn();
            m.a[i] = keep - eps;
            const double down = loss_fn();
            m.a[i] = keep;
            const double fd = (up - down) / (2.0 * eps);
            const double an = g.a[i];
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("zero-layer encoder reduces to embedded layer norm") {
    EncoderConfig cfg = tiny_config(0);
    auto p = EncoderParams<double>::init(cfg, 3);
    Batch b = tiny_mlm_batch(cfg);
    auto cache = encoder_forward(p, b, 0.0, 0);
    // hidden equals normalized token+position embeddings
    CHECK(cache.hidden().rows == b.n * b.len);
    for (size_t r = 0; r < 4; ++r) {
        double mean = 0.0;
        for (size_t j = 0; j < 16; ++j)
            mean += (cache.hidden().at(r, j) - p.emb_ln_b.at(0, j)) / p.emb_ln_g.at(0, j);
        CHECK(std::abs(mean / 16.0) < 1e-9);
    }
}

TEST_CASE("attention rows over unmasked positions sum to one") {
    EncoderConfig cfg = tiny_config(2);
    auto p = EncoderParams<double>::init(cfg, 5);
    Batch b = tiny_mlm_batch(cfg);
    auto cache = encoder_forward(p, b, 0.0, 0);
    for (const auto& lc : cache.layers) {
        for (size_t row = 0; row < lc.att.rows; ++row) {
            double sum = 0.0;
            for (size_t j = 0; j < lc.att.cols; ++j) sum += lc.att.at(row, j);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("PAD tail permutation leaves the CLS embedding unchanged") {
    EncoderConfig cfg = tiny_config(2);
    auto p = EncoderParams<double>::init(cfg, 7);
    Batch b = tiny_mlm_batch(cfg);
    auto base = encoder_forward(p, b, 0.0, 0);
    // swap the PAD-position token ids (both PAD id anyway, so alter one to a
    // random content id while keeping the mask zero)
    Batch b2 = b;
    b2.ids[7] = 18;  // ex 0, masked-out tail position
    b2.ids[15] = 27;
    auto alt = encoder_forward(p, b2, 0.0, 0);
    for (size_t i = 0; i < base.cls.count(); ++i)
        CHECK(std::abs(base.cls.a[i] - alt.cls.a[i]) < 1e-6);
}

TEST_CASE("id range and mask validation") {
    EncoderConfig cfg = tiny_config(1);
    auto p = EncoderParams<double>::init(cfg, 1);
    Batch b = tiny_mlm_batch(cfg);
    b.ids[2] = cfg.vocab_size;  // out of range
    CHECK_THROWS_AS(encoder_forward(p, b, 0.0, 0), ValidationError);
}

TEST_CASE("uniform logits give ln(V) loss; confident logits give near zero") {
    EncoderConfig cfg = tiny_config(0);
    auto p = EncoderParams<double>::zeros(cfg);  // all-zero params -> uniform logits
    Batch b = tiny_mlm_batch(cfg);
    // zero embeddings make layer norm inputs zero; forward still works since
    // variance epsilon guards the division
    auto cache = encoder_forward(p, b, 0.0, 0);
    MlmStats stats = mlm_head(p, b, cache, nullptr, nullptr);
    CHECK(stats.loss == doctest::Approx(std::log(static_cast<double>(cfg.vocab_size))).epsilon(1e-9));

    // single target whose logit is pushed up: loss approaches 0
    Batch single = b;
    for (auto& t : single.targets) t = kIgnoreTarget;
    single.targets[1] = 17;
    auto p2 = EncoderParams<double>::zeros(cfg);
    p2.mlm_bias.at(0, 17) = 50.0;
    auto cache2 = encoder_forward(p2, single, 0.0, 0);
    MlmStats stats2 = mlm_head(p2, single, cache2, nullptr, nullptr);
    CHECK(stats2.loss < 1e-6);
}

TEST_CASE("zero-target batch yields zero loss and zero grads") {
    EncoderConfig cfg = tiny_config(1);
    auto p = EncoderParams<double>::init(cfg, 11);
    Batch b = tiny_mlm_batch(cfg);
    for (auto& t : b.targets) t = kIgnoreTarget;
    auto res = mlm_loss_and_grads(p, b);
    CHECK(res.loss == 0.0);
    CHECK(res.n_targets == 0);
    res.grads.for_each([&](const std::string&, const Mat<double>& g) {
        for (double v : g.a) CHECK(v == 0.0);
    });
}

TEST_CASE("analytic MLM gradients match central finite differences") {
    EncoderConfig cfg = tiny_config(1);
    auto p = EncoderParams<double>::init(cfg, 17);
    Batch b = tiny_mlm_batch(cfg);
    auto res = mlm_loss_and_grads(p, b);
    auto loss_fn = [&]() {
        auto cache = encoder_forward(p, b, 0.0, 0);
        return mlm_head(p, b, cache, nullptr, nullptr).loss;
    };
    const double err = max_rel_error(p, res.grads, loss_fn);
    CHECK(err < 1e-4);
}

TEST_CASE("cls embedding is deterministic, bounded, and d_model-sized") {
    EncoderConfig cfg = tiny_config(2);
    auto p = EncoderParams<float>::init(cfg, 19);
    TokenSequence seq;
    for (int id : {kClsId, 16, 17, kSepId, kPadId, kPadId, kPadId, kPadId}) {
        seq.ids.push_back(id);
        seq.is_special.push_back(id == kClsId || id == kSepId || id == kPadId);
        seq.is_entity.push_back(0);
        seq.is_continuation.push_back(0);
        seq.alignment.push_back({});
    }
    auto a = cls_embedding(p, seq);
    auto b = cls_embedding(p, seq);
    CHECK(a.size() == 16);
    CHECK(a == b);
    for (float v : a) {
        CHECK(v > -1.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("dropout-off forward is bitwise deterministic") {
    EncoderConfig cfg = tiny_config(2);
    auto p = EncoderParams<float>::init(cfg, 23);
    Batch b = tiny_mlm_batch(cfg);
    auto c1 = encoder_forward(p, b, 0.0, 1);
    auto c2 = encoder_forward(p, b, 0.0, 2);  // different seed, no dropout
    CHECK(c1.hidden().a == c2.hidden().a);
    CHECK(c1.cls.a == c2.cls.a);
}

TEST_CASE("training dropout is seed-deterministic and differs across seeds") {
    EncoderConfig cfg = tiny_config(1);
    cfg.dropout = 0.2;
    auto p = EncoderParams<float>::init(cfg, 29);
    Batch b = tiny_mlm_batch(cfg);
    auto c1 = encoder_forward(p, b, cfg.dropout, 42);
    auto c2 = encoder_forward(p, b, cfg.dropout, 42);
    auto c3 = encoder_forward(p, b, cfg.dropout, 43);
    CHECK(c1.hidden().a == c2.hidden().a);
    CHECK(c1.hidden().a != c3.hidden().a);
}
