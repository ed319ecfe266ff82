#include <doctest.h>

#include <cmath>
#include <fstream>

#include "chmc/checkpoint.hpp"
#include "chmc/encoder.hpp"
#include "chmc/trainer.hpp"
#include "test_support.hpp"

using namespace chmc;
using chmc_test::ontology;

namespace {

// tiny synthetic token sequences: the first content token decides the label
struct TinyTask {
    std::vector<TokenSequence> seqs;
    FinetuneData fit, dev;
    Vocab vocab;
};

TokenSequence make_seq(const std::vector<int>& content, size_t max_len) {
    TokenSequence seq;
    auto push = [&](int id, bool special) {
        seq.ids.push_back(id);
        seq.is_special.push_back(special ? 1 : 0);
        seq.is_entity.push_back(0);
        seq.is_continuation.push_back(0);
        seq.alignment.push_back({});
    };
    push(kClsId, true);
    for (int id : content) push(id, false);
    push(kSepId, true);
    while (seq.ids.size() < max_len) push(kPadId, true);
    return seq;
}

TinyTask separable_task(size_t n, size_t max_len, uint64_t seed) {
    TinyTask task;
    const auto& onto = ontology();
    Rng rng(seed);
    const std::vector<std::string> labels = {"News", "GoodsServices", "MovePeople"};
    FinetuneData all;
    for (size_t i = 0; i < n; ++i) {
        const size_t cls = rng.below(3);
        // token 20+cls is the label signal; the rest is noise
        std::vector<int> content = {20 + static_cast<int>(cls)};
        for (int k = 0; k < 4; ++k) content.push_back(30 + static_cast<int>(rng.below(8)));
        all.seqs.push_back(make_seq(content, max_len));
        std::set<std::string> lower = {labels[cls]};
        all.upper.push_back(upper_indicators(onto.derive_upper(lower), onto));
        all.lower.push_back(lower_indicators(lower, onto));
        all.lower_names.push_back(lower);
    }
    const size_t split = n * 4 / 5;
    for (size_t i = 0; i < n; ++i) {
        FinetuneData& dst = i < split ? task.fit : task.dev;
        dst.seqs.push_back(all.seqs[i]);
        dst.upper.push_back(all.upper[i]);
        dst.lower.push_back(all.lower[i]);
        dst.lower_names.push_back(all.lower_names[i]);
    }
    return task;
}

EncoderConfig small_cfg(int vocab = 48, int max_len = 8) {
    EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 32;
    cfg.d_ff = 64;
    cfg.max_len = max_len;
    cfg.vocab_size = vocab;
    cfg.dropout = 0.0;
    return cfg;
}

std::vector<TokenSequence> memorization_corpus(size_t n_sent, size_t max_len, uint64_t seed) {
    Rng rng(seed);
    std::vector<TokenSequence> seqs;
    for (size_t i = 0; i < n_sent; ++i) {
        std::vector<int> content;
        for (int k = 0; k < 6; ++k) content.push_back(kNumSpecials + static_cast<int>(rng.below(30)));
        seqs.push_back(make_seq(content, max_len));
    }
    return seqs;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("zero learning rate leaves parameters untouched") {
    auto seqs = memorization_corpus(8, 8, 3);
    TrainConfig tc;
    tc.learning_rate = 0.0;
    tc.batch_size = 4;
    tc.pretrain_epochs = 2;
    tc.eval_interval = 2;
    tc.seed = 5;
    EncoderConfig cfg = small_cfg();
    auto init = EncoderParams<float>::init(cfg, tc.seed);
    auto res = pretrain(seqs, {}, cfg, standard_mlm_config(), tc);
    bool identical = true;
    std::vector<const Mat<float>*> a, b;
    init.for_each([&](const std::string&, const Mat<float>& m) { a.push_back(&m); });
    res.params.for_each([&](const std::string&, const Mat<float>& m) { b.push_back(&m); });
    for (size_t t = 0; t < a.size(); ++t)
        if (a[t]->a != b[t]->a) identical = false;
    CHECK(identical);
}

TEST_CASE("pretraining is deterministic: identical checkpoint bytes") {
    auto seqs = memorization_corpus(12, 8, 7);
    std::vector<TokenSequence> dev(seqs.begin() + 8, seqs.end());
    std::vector<TokenSequence> fit(seqs.begin(), seqs.begin() + 8);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 4;
    tc.pretrain_epochs = 3;
    tc.eval_interval = 4;
    tc.seed = 11;
    EncoderConfig cfg = small_cfg();
    const std::string dir = chmc_test::temp_dir("ckpt_det");
    auto r1 = pretrain(fit, dev, cfg, standard_mlm_config(), tc);
    auto r2 = pretrain(fit, dev, cfg, standard_mlm_config(), tc);
    save_checkpoint({r1.params, std::nullopt, {}, r1.best_step, "dev_mlm_loss", r1.best_dev_loss},
                    dir + "/a.ckpt");
    save_checkpoint({r2.params, std::nullopt, {}, r2.best_step, "dev_mlm_loss", r2.best_dev_loss},
                    dir + "/b.ckpt");
    CHECK(file_bytes(dir + "/a.ckpt") == file_bytes(dir + "/b.ckpt"));
    CHECK(!file_bytes(dir + "/a.ckpt").empty());
}

TEST_CASE("checkpoint selection is the argmin over the recorded trace") {
    auto seqs = memorization_corpus(16, 8, 9);
    std::vector<TokenSequence> dev(seqs.begin() + 12, seqs.end());
    std::vector<TokenSequence> fit(seqs.begin(), seqs.begin() + 12);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 4;
    tc.pretrain_epochs = 4;
    tc.eval_interval = 3;
    tc.seed = 17;
    auto res = pretrain(fit, dev, small_cfg(), standard_mlm_config(), tc);
    REQUIRE(!res.trace.empty());
    double best = res.trace[0].dev_metric;
    long best_step = res.trace[0].step;
    for (const auto& e : res.trace) {
        if (e.dev_metric < best) {
            best = e.dev_metric;
            best_step = e.step;
        }
    }
    CHECK(res.best_dev_loss == doctest::Approx(best));
    CHECK(res.best_step == best_step);
}

TEST_CASE("small memorization run recovers masked tokens") {
    auto seqs = memorization_corpus(8, 8, 13);
    TrainConfig tc;
    tc.learning_rate = 2e-3;
    tc.batch_size = 8;
    tc.pretrain_epochs = 150;
    tc.eval_interval = 1000;
    tc.seed = 19;
    EncoderConfig cfg = small_cfg();
    auto res = pretrain(seqs, seqs, cfg, standard_mlm_config(), tc);
    // measure recovery on deterministic masks
    size_t targets = 0, correct = 0;
    for (size_t i = 0; i < seqs.size(); ++i) {
        Batch b = Batch::from_sequences({seqs[i]});
        MaskedExample ex =
            mask_sequence(seqs[i], standard_mlm_config(), mix_seed(999, i), cfg.vocab_size);
        for (size_t t = 0; t < b.len; ++t) {
            b.ids[t] = ex.input_ids[t];
            b.targets[t] = ex.target_ids[t];
        }
        auto cache = encoder_forward(res.params, b, 0.0, 0);
        MlmStats stats = mlm_head(res.params, b, cache, nullptr, nullptr);
        targets += stats.n_targets;
        correct += stats.n_correct;
    }
    REQUIRE(targets > 0);
    CHECK(double(correct) / double(targets) > 0.8);
}

TEST_CASE("fine-tuning separates a separable corpus") {
    TinyTask task = separable_task(120, 8, 23);
    TrainConfig tc;
    tc.learning_rate = 2e-3;
    tc.batch_size = 16;
    tc.finetune_epochs = 30;
    tc.eval_interval = 50;
    tc.seed = 29;
    EncoderConfig cfg = small_cfg();
    auto start = EncoderParams<float>::init(cfg, 31);
    auto res = finetune(start, HeadKind::SingleTask, task.fit, task.dev, ontology(), tc);
    CHECK(res.best_dev_f1 >= 0.95);
}

TEST_CASE("freezing the encoder keeps its tensors bit-identical") {
    TinyTask task = separable_task(40, 8, 37);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 8;
    tc.finetune_epochs = 2;
    tc.eval_interval = 5;
    tc.freeze_encoder = true;
    tc.seed = 41;
    EncoderConfig cfg = small_cfg();
    auto start = EncoderParams<float>::init(cfg, 43);
    auto res = finetune(start, HeadKind::LCL, task.fit, task.dev, ontology(), tc);
    std::vector<const Mat<float>*> a, b;
    start.for_each([&](const std::string&, const Mat<float>& m) { a.push_back(&m); });
    res.encoder.for_each([&](const std::string&, const Mat<float>& m) { b.push_back(&m); });
    for (size_t t = 0; t < a.size(); ++t) CHECK(a[t]->a == b[t]->a);
}

TEST_CASE("lambda zero with LCL leaves the upper layer at its initialization") {
    TinyTask task = separable_task(40, 8, 47);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 8;
    tc.finetune_epochs = 3;
    tc.eval_interval = 1000;
    tc.lambda = 0.0;
    tc.weight_decay = 0.0;  // decay would still move the untouched layer
    tc.seed = 53;
    EncoderConfig cfg = small_cfg();
    auto start = EncoderParams<float>::init(cfg, 59);
    auto res = finetune(start, HeadKind::LCL, task.fit, task.dev, ontology(), tc);
    auto init_head =
        HeadParams<float>::init(HeadKind::LCL, 32, ontology(), mix_seed(tc.seed, "head"));
    CHECK(res.head.lcl_upper_w.a == init_head.lcl_upper_w.a);
    CHECK(res.head.lcl_upper_b.a == init_head.lcl_upper_b.a);
    CHECK(res.head.lcl_lower_w.a != init_head.lcl_lower_w.a);
}

TEST_CASE("checkpoints round-trip with heads") {
    EncoderConfig cfg = small_cfg();
    auto enc = EncoderParams<float>::init(cfg, 61);
    auto head = HeadParams<float>::init(HeadKind::HMCNGlobal, 32, ontology(), 67);
    Checkpoint ck{enc, head, nlohmann::ordered_json({{"note", "test"}}), 42, "dev_lower_macro_f1",
                  0.5};
    const std::string path = chmc_test::temp_dir("ckpt_rt") + "/m.ckpt";
    save_checkpoint(ck, path);
    Checkpoint back = load_checkpoint(path, &ontology());
    CHECK(back.step == 42);
    CHECK(back.metric_name == "dev_lower_macro_f1");
    REQUIRE(back.head.has_value());
    CHECK(back.head->kind == HeadKind::HMCNGlobal);
    CHECK(back.encoder.tok_emb.a == enc.tok_emb.a);
    CHECK(back.head->global_w.a == head.global_w.a);
    CHECK(back.config_echo["note"] == "test");
}

TEST_CASE("prediction helpers map indices to names") {
    const auto& onto = ontology();
    Prediction p;
    p.lower.insert(onto.lower_index("News"));
    p.upper.insert(onto.upper_index("Report"));
    auto lower = prediction_names_lower({p}, onto);
    auto upper = prediction_names_upper({p}, onto);
    CHECK(lower[0] == std::set<std::string>{"News"});
    CHECK(upper[0] == std::set<std::string>{"Report"});
}
