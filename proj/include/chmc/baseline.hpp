#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "chmc/ontology.hpp"

namespace chmc {

struct TfidfConfig {
    size_t ngram_min = 1;
    size_t ngram_max = 1;
    size_t max_features = 5000;

    void validate() const;
};

// (feature index, weight) pairs with strictly increasing indices,
// L2-normalized per document.
struct SparseDoc {
    std::vector<std::pair<uint32_t, float>> entries;
};

// Fitted vocabulary and smoothed idf weights:
// idf(t) = ln((1+N)/(1+df)) + 1. Vocabulary keeps the top max_features
// n-grams by document frequency, ties by lexicographic order.
class TfidfSpace {
public:
    static TfidfSpace fit(const std::vector<std::string>& texts, const TfidfConfig& cfg);

    SparseDoc transform(const std::string& text) const;

    size_t size() const { return terms_.size(); }
    const std::vector<std::string>& terms() const { return terms_; }
    const std::vector<double>& idf() const { return idf_; }
    const TfidfConfig& config() const { return cfg_; }

    void save(const std::string& json_path) const;
    static TfidfSpace load(const std::string& json_path);

private:
    TfidfConfig cfg_;
    std::vector<std::string> terms_;
    std::vector<double> idf_;
    std::map<std::string, uint32_t> index_;
};

struct LogRegOptions {
    double l2 = 0.1;
    size_t max_iters = 20000;
    double grad_tol = 1e-6;
    uint64_t seed = 13;
    size_t threads = 1;
};

// One weight vector (plus bias) per label; labels without both a positive
// and a negative example are skipped and always score 0.
struct OvrLogReg {
    size_t n_features = 0;
    std::vector<std::string> labels;
    std::vector<std::vector<float>> weights;
    std::vector<float> bias;
    std::vector<uint8_t> trained;
    std::vector<double> final_grad_norm;
    std::vector<double> final_objective;

    double score(size_t label_idx, const SparseDoc& doc) const;  // sigmoid, 0 if untrained

    // JSON header plus a binary sidecar holding the weight matrix.
    void save(const std::string& json_path, const std::string& bin_path) const;
    static OvrLogReg load(const std::string& json_path, const std::string& bin_path);
};

// Full-batch optimization of the L2-regularized logistic loss per label
// (Nesterov-accelerated gradient descent with backtracking and restart);
// converges to grad-norm < opts.grad_tol or the iteration cap.
OvrLogReg train_ovr_logreg(const std::vector<SparseDoc>& docs,
                           const std::vector<std::string>& label_names,
                           const std::vector<std::vector<uint8_t>>& label_indicators,
                           const LogRegOptions& opts);

// Sigmoid scores per lower label; upper scores by max over children.
struct BaselinePrediction {
    std::set<std::string> upper;
    std::set<std::string> lower;
};

BaselinePrediction predict_baseline(const OvrLogReg& model, const SparseDoc& doc, double threshold,
                                    const LabelOntology& ontology);

}  // namespace chmc
