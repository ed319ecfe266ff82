#include "chmc/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "chmc/adamw.hpp"
#include "chmc/errors.hpp"
#include "chmc/evaluation.hpp"
#include "chmc/log.hpp"
#include "chmc/rng.hpp"

namespace chmc {

void TrainConfig::validate() const {
    if (learning_rate < 0.0) throw ConfigError("learning_rate must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

Batch build_masked_batch(const std::vector<TokenSequence>& seqs, const std::vector<size_t>& which,
                         const MaskingConfig& cfg, uint64_t stream_seed, size_t vocab_size) {
    std::vector<TokenSequence> view;
    view.reserve(which.size());
    for (size_t i : which) view.push_back(seqs[i]);
    Batch b = Batch::from_sequences(view);
    for (size_t e = 0; e < which.size(); ++e) {
        MaskedExample ex =
            mask_sequence(seqs[which[e]], cfg, mix_seed(stream_seed, which[e]), vocab_size);
        for (size_t t = 0; t < b.len; ++t) {
            b.ids[e * b.len + t] = ex.input_ids[t];
            b.targets[e * b.len + t] = ex.target_ids[t];
        }
    }
    return b;
}

double dev_mlm_loss(const EncoderParams<float>& params, const std::vector<TokenSequence>& dev,
                    const MaskingConfig& cfg, uint64_t seed, size_t batch_size) {
    double total = 0.0;
    size_t total_targets = 0;
    for (size_t start = 0; start < dev.size(); start += batch_size) {
        std::vector<size_t> which;
        for (size_t i = start; i < std::min(dev.size(), start + batch_size); ++i) which.push_back(i);
        Batch b = build_masked_batch(dev, which, cfg, mix_seed(seed, "devmask"),
                                     static_cast<size_t>(params.cfg.vocab_size));
        auto cache = encoder_forward(params, b, 0.0, 0);
        MlmStats stats = mlm_head(params, b, cache, nullptr, nullptr);
        total += stats.loss * static_cast<double>(stats.n_targets);
        total_targets += stats.n_targets;
    }
    return total_targets ? total / static_cast<double>(total_targets) : 0.0;
}

}  // namespace

PretrainResult pretrain_from(EncoderParams<float> start, const std::vector<TokenSequence>& fit,
                             const std::vector<TokenSequence>& dev,
                             const MaskingConfig& mask_cfg, const TrainConfig& tc) {
    tc.validate();
    mask_cfg.validate();
    if (fit.empty()) throw ValidationError("empty pre-training corpus");
    const size_t vocab_size = static_cast<size_t>(start.cfg.vocab_size);

    PretrainResult res;
    res.params = start;
    EncoderParams<float> best = start;

    AdamW<float> opt(tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps,
                     tc.weight_decay);
    EncoderParams<float> grads = EncoderParams<float>::zeros(start.cfg);

    long step = 0;
    double running_loss = 0.0;
    long running_count = 0;
    bool aborted = false;

    auto eval_now = [&]() {
        const double dloss = dev.empty() ? running_loss / std::max(1L, running_count)
                                         : dev_mlm_loss(res.params, dev, mask_cfg, tc.seed,
                                                        tc.batch_size);
        TraceEntry e{step, running_count ? running_loss / running_count : 0.0, dloss};
        res.trace.push_back(e);
        running_loss = 0.0;
        running_count = 0;
        if (dloss < res.best_dev_loss) {
            res.best_dev_loss = dloss;
            res.best_step = step;
            best = res.params;
        }
        log::debug("pretrain step " + std::to_string(step) + " dev_loss " + std::to_string(dloss));
    };

    for (size_t epoch = 0; epoch < tc.pretrain_epochs && !aborted; ++epoch) {
        auto order = shuffled_indices(fit.size(), mix_seed(tc.seed, "pretrain_order", epoch));
        for (size_t off = 0; off < order.size(); off += tc.batch_size) {
            std::vector<size_t> which(order.begin() + static_cast<long>(off),
                                      order.begin() +
                                          static_cast<long>(std::min(order.size(),
                                                                     off + tc.batch_size)));
            Batch b = build_masked_batch(fit, which, mask_cfg,
                                         mix_seed(mix_seed(tc.seed, "mask"), epoch), vocab_size);
            auto cache = encoder_forward(res.params, b, res.params.cfg.dropout,
                                         mix_seed(tc.seed, "dropout", static_cast<uint64_t>(step)));
            grads.for_each([](const std::string&, Mat<float>& m) { m.zero(); });
            Mat<float> dHidden(b.n * b.len, static_cast<size_t>(res.params.cfg.d_model));
            MlmStats stats = mlm_head(res.params, b, cache, &dHidden, &grads);
            if (!std::isfinite(stats.loss)) {
                log::error("pretraining diverged at step " + std::to_string(step) +
                           "; keeping last good checkpoint");
                res.diverged = true;
                aborted = true;
                break;
            }
            if (stats.n_targets > 0) {
                encoder_backward(res.params, b, cache, dHidden, Mat<float>(), grads);
                opt.begin_step();
                opt.update_all(res.params, grads);
            } else {
                log::debug("batch without MLM targets at step " + std::to_string(step));
            }
            ++step;
            running_loss += stats.loss;
            ++running_count;
            if (step % static_cast<long>(tc.eval_interval) == 0) eval_now();
        }
    }
    if (res.trace.empty() || res.trace.back().step != step) eval_now();
    res.steps_run = step;
    res.params = best;
    return res;
}

PretrainResult pretrain(const std::vector<TokenSequence>& fit,
                        const std::vector<TokenSequence>& dev, const EncoderConfig& enc_cfg,
                        const MaskingConfig& mask_cfg, const TrainConfig& tc) {
    return pretrain_from(EncoderParams<float>::init(enc_cfg, tc.seed), fit, dev, mask_cfg, tc);
}

namespace {

struct ClsBatch {
    Mat<float> cls;
    std::vector<std::vector<uint8_t>> upper, lower;
};

}  // namespace

std::vector<Prediction> predict_corpus(const EncoderParams<float>& enc,
                                       const HeadParams<float>& head,
                                       const std::vector<TokenSequence>& seqs,
                                       const LabelOntology& ontology, double threshold,
                                       size_t batch_size, size_t threads) {
    std::vector<Prediction> preds(seqs.size());
    std::vector<size_t> starts;
    for (size_t s = 0; s < seqs.size(); s += batch_size) starts.push_back(s);

    auto work = [&](size_t chunk) {
        const size_t start = starts[chunk];
        const size_t end = std::min(seqs.size(), start + batch_size);
        std::vector<TokenSequence> view(seqs.begin() + static_cast<long>(start),
                                        seqs.begin() + static_cast<long>(end));
        Batch b = Batch::from_sequences(view);
        auto cache = encoder_forward(enc, b, 0.0, 0);
        for (size_t e = 0; e < view.size(); ++e) {
            std::vector<float> cls(cache.cls.row(e), cache.cls.row(e) + cache.cls.cols);
            ScoreSet scores = head_forward(head, cls, ontology);
            preds[start + e] = predict(scores, head.kind, threshold);
        }
    };

    if (threads <= 1) {
        for (size_t c = 0; c < starts.size(); ++c) work(c);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (size_t t = 0; t < std::min(threads, starts.size()); ++t)
            pool.emplace_back([&] {
                for (size_t c = next.fetch_add(1); c < starts.size(); c = next.fetch_add(1))
                    work(c);
            });
        for (auto& th : pool) th.join();
    }
    return preds;
}

std::vector<std::set<std::string>> prediction_names_lower(const std::vector<Prediction>& preds,
                                                          const LabelOntology& ontology) {
    std::vector<std::set<std::string>> out;
    out.reserve(preds.size());
    for (const auto& p : preds) {
        std::set<std::string> s;
        for (size_t c : p.lower) s.insert(ontology.lower_labels()[c]);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::set<std::string>> prediction_names_upper(const std::vector<Prediction>& preds,
                                                          const LabelOntology& ontology) {
    std::vector<std::set<std::string>> out;
    out.reserve(preds.size());
    for (const auto& p : preds) {
        std::set<std::string> s;
        for (size_t u : p.upper) s.insert(ontology.upper_labels()[u]);
        out.push_back(std::move(s));
    }
    return out;
}

FinetuneResult finetune(const EncoderParams<float>& start, HeadKind kind, const FinetuneData& fit,
                        const FinetuneData& dev, const LabelOntology& ontology,
                        const TrainConfig& tc) {
    tc.validate();
    if (fit.seqs.empty()) throw ValidationError("empty fine-tuning corpus");
    const size_t d = static_cast<size_t>(start.cfg.d_model);

    FinetuneResult res;
    res.encoder = start;
    res.head = HeadParams<float>::init(kind, d, ontology, mix_seed(tc.seed, "head"));
    EncoderParams<float> best_enc = res.encoder;
    HeadParams<float> best_head = res.head;

    AdamW<float> opt(tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps,
                     tc.weight_decay);
    EncoderParams<float> enc_grads = EncoderParams<float>::zeros(start.cfg);

    long step = 0;
    double running_loss = 0.0;
    long running_count = 0;
    bool aborted = false;

    auto dev_f1 = [&]() {
        if (dev.seqs.empty()) return 0.0;
        auto preds = predict_corpus(res.encoder, res.head, dev.seqs, ontology, tc.threshold,
                                    tc.batch_size);
        auto pred_lower = prediction_names_lower(preds, ontology);
        std::vector<std::set<std::string>> gold(dev.lower_names.begin(), dev.lower_names.end());
        return macro_f1(pred_lower, gold, ontology.lower_labels()).macro_f1;
    };

    auto eval_now = [&]() {
        const double f1 = dev_f1();
        res.trace.push_back({step, running_count ? running_loss / running_count : 0.0, f1});
        running_loss = 0.0;
        running_count = 0;
        if (f1 > res.best_dev_f1) {
            res.best_dev_f1 = f1;
            res.best_step = step;
            best_enc = res.encoder;
            best_head = res.head;
        }
        log::debug("finetune step " + std::to_string(step) + " dev_f1 " + std::to_string(f1));
    };

    for (size_t epoch = 0; epoch < tc.finetune_epochs && !aborted; ++epoch) {
        auto order = shuffled_indices(fit.seqs.size(), mix_seed(tc.seed, "finetune_order", epoch));
        for (size_t off = 0; off < order.size(); off += tc.batch_size) {
            std::vector<size_t> which(order.begin() + static_cast<long>(off),
                                      order.begin() +
                                          static_cast<long>(std::min(order.size(),
                                                                     off + tc.batch_size)));
            std::vector<TokenSequence> view;
            std::vector<std::vector<uint8_t>> yu, yl;
            for (size_t i : which) {
                view.push_back(fit.seqs[i]);
                yu.push_back(fit.upper[i]);
                yl.push_back(fit.lower[i]);
            }
            Batch b = Batch::from_sequences(view);
            auto cache = encoder_forward(res.encoder, b, res.encoder.cfg.dropout,
                                         mix_seed(tc.seed, "ft_dropout",
                                                  static_cast<uint64_t>(step)));
            auto head_res = head_loss_and_grads(res.head, cache.cls, yu, yl, tc.lambda, ontology);
            if (!std::isfinite(head_res.loss)) {
                log::error("fine-tuning diverged at step " + std::to_string(step) +
                           "; keeping last good checkpoint");
                res.diverged = true;
                aborted = true;
                break;
            }
            opt.begin_step();
            if (!tc.freeze_encoder) {
                enc_grads.for_each([](const std::string&, Mat<float>& m) { m.zero(); });
                encoder_backward(res.encoder, b, cache, Mat<float>(), head_res.dcls, enc_grads);
                opt.update_all(res.encoder, enc_grads);
            }
            opt.update_all(res.head, head_res.grads);
            ++step;
            running_loss += head_res.loss;
            ++running_count;
            if (step % static_cast<long>(tc.eval_interval) == 0) eval_now();
        }
    }
    if (res.trace.empty() || res.trace.back().step != step) eval_now();
    res.steps_run = step;
    res.encoder = best_enc;
    res.head = best_head;
    return res;
}

void write_trace_csv(const std::vector<TraceEntry>& trace, const std::string& metric_name,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trace: " + path);
    out << "step,train_loss," << metric_name << "\n";
    char buf[96];
    for (const auto& e : trace) {
        std::snprintf(buf, sizeof(buf), "%ld,%.6f,%.6f\n", e.step, e.train_loss, e.dev_metric);
        out << buf;
    }
}

}  // namespace chmc
