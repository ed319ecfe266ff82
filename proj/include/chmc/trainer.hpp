#pragma once

#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "chmc/encoder.hpp"
#include "chmc/heads.hpp"
#include "chmc/masking.hpp"
#include "chmc/ontology.hpp"
#include "chmc/tokenizer.hpp"

namespace chmc {

struct TrainConfig {
    double learning_rate = 5e-5;
    size_t batch_size = 32;
    double lambda = 0.1;
    size_t pretrain_epochs = 50;
    size_t finetune_epochs = 15;
    size_t eval_interval = 1000;  // steps between dev evaluations
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double threshold = 0.5;
    bool freeze_encoder = false;
    uint64_t seed = 13;

    void validate() const;
};

struct TraceEntry {
    long step = 0;
    double train_loss = 0.0;  // running mean since last entry
    double dev_metric = 0.0;
};

struct PretrainResult {
    EncoderParams<float> params;
    long best_step = 0;
    double best_dev_loss = std::numeric_limits<double>::infinity();
    std::vector<TraceEntry> trace;
    bool diverged = false;
    long steps_run = 0;
};

// Adaptive MLM pre-training. Per-example corruption streams are derived
// from (seed, epoch, corpus index) so batch composition cannot change the
// noise. Dev loss uses a fixed epoch-independent corruption so interval
// evaluations are comparable; the checkpoint with the lowest dev loss wins.
PretrainResult pretrain(const std::vector<TokenSequence>& fit,
                        const std::vector<TokenSequence>& dev, const EncoderConfig& enc_cfg,
                        const MaskingConfig& mask_cfg, const TrainConfig& tc);

// Same loop, continuing from existing parameters.
PretrainResult pretrain_from(EncoderParams<float> start, const std::vector<TokenSequence>& fit,
                             const std::vector<TokenSequence>& dev,
                             const MaskingConfig& mask_cfg, const TrainConfig& tc);

struct FinetuneData {
    std::vector<TokenSequence> seqs;
    std::vector<std::vector<uint8_t>> upper;
    std::vector<std::vector<uint8_t>> lower;
    std::vector<std::set<std::string>> lower_names;  // for dev macro-F1
};

struct FinetuneResult {
    EncoderParams<float> encoder;
    HeadParams<float> head;
    long best_step = 0;
    double best_dev_f1 = -1.0;
    std::vector<TraceEntry> trace;
    bool diverged = false;
    long steps_run = 0;
};

// Fine-tunes head (and encoder unless frozen) on the weighted MTL loss;
// dev lower-level macro-F1 selects the returned checkpoint.
FinetuneResult finetune(const EncoderParams<float>& start, HeadKind kind, const FinetuneData& fit,
                        const FinetuneData& dev, const LabelOntology& ontology,
                        const TrainConfig& tc);

// Batched deterministic inference: thresholded label predictions per doc.
std::vector<Prediction> predict_corpus(const EncoderParams<float>& enc,
                                       const HeadParams<float>& head,
                                       const std::vector<TokenSequence>& seqs,
                                       const LabelOntology& ontology, double threshold,
                                       size_t batch_size, size_t threads = 1);

std::vector<std::set<std::string>> prediction_names_lower(const std::vector<Prediction>& preds,
                                                          const LabelOntology& ontology);
std::vector<std::set<std::string>> prediction_names_upper(const std::vector<Prediction>& preds,
                                                          const LabelOntology& ontology);

void write_trace_csv(const std::vector<TraceEntry>& trace, const std::string& metric_name,
                     const std::string& path);

}  // namespace chmc
