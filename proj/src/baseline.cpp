#include "chmc/baseline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "chmc/errors.hpp"
#include "chmc/log.hpp"
#include "chmc/rng.hpp"
#include "chmc/utf8.hpp"

namespace chmc {

void TfidfConfig::validate() const {
    if (ngram_min < 1 || ngram_min > ngram_max) throw ConfigError("invalid ngram range");
    if (max_features == 0) throw ConfigError("max_features must be positive");
}

namespace {

bool is_word_cp(char32_t c) {
    if (c >= U'a' && c <= U'z') return true;
    if (c >= U'0' && c <= U'9') return true;
    if (c == U'_' || c == U'#' || c == U'@' || c == U'\'') return true;
    return c >= 0x80;
}

std::vector<std::string> word_tokens_lower(const std::string& text) {
    auto cps = utf8::decode(text);
    for (auto& c : cps)
        if (c >= U'A' && c <= U'Z') c += 32;
    std::vector<std::string> toks;
    size_t i = 0;
    while (i < cps.size()) {
        if (!is_word_cp(cps[i])) {
            ++i;
            continue;
        }
        size_t s = i;
        while (i < cps.size() && is_word_cp(cps[i])) ++i;
        toks.push_back(utf8::encode(cps, s, i));
    }
    return toks;
}

std::vector<std::string> ngrams(const std::vector<std::string>& toks, size_t nmin, size_t nmax) {
    std::vector<std::string> out;
    for (size_t n = nmin; n <= nmax; ++n) {
        if (toks.size() < n) break;
        for (size_t i = 0; i + n <= toks.size(); ++i) {
            std::string g = toks[i];
            for (size_t k = 1; k < n; ++k) {
                g += ' ';
                g += toks[i + k];
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

}  // namespace

TfidfSpace TfidfSpace::fit(const std::vector<std::string>& texts, const TfidfConfig& cfg) {
    cfg.validate();
    if (texts.empty()) throw ValidationError("cannot fit TF-IDF on an empty corpus");
    std::map<std::string, size_t> df;
    for (const auto& text : texts) {
        auto grams = ngrams(word_tokens_lower(text), cfg.ngram_min, cfg.ngram_max);
        std::sort(grams.begin(), grams.end());
        grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
        for (const auto& g : grams) ++df[g];
    }
    // top max_features by document frequency, ties by lexicographic order;
    // df map iteration is already lexicographic so the sort is stable
    std::vector<std::pair<std::string, size_t>> items(df.begin(), df.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (items.size() > cfg.max_features) items.resize(cfg.max_features);
    std::sort(items.begin(), items.end());  // stable feature-id order

    TfidfSpace space;
    space.cfg_ = cfg;
    const double n_docs = static_cast<double>(texts.size());
    for (const auto& [term, dfreq] : items) {
        space.index_[term] = static_cast<uint32_t>(space.terms_.size());
        space.terms_.push_back(term);
        space.idf_.push_back(std::log((1.0 + n_docs) / (1.0 + static_cast<double>(dfreq))) + 1.0);
    }
    return space;
}

SparseDoc TfidfSpace::transform(const std::string& text) const {
    std::map<uint32_t, double> tf;
    for (const auto& g : ngrams(word_tokens_lower(text), cfg_.ngram_min, cfg_.ngram_max)) {
        auto it = index_.find(g);
        if (it != index_.end()) tf[it->second] += 1.0;
    }
    SparseDoc doc;
    double norm_sq = 0.0;
    for (const auto& [idx, count] : tf) {
        const double w = count * idf_[idx];
        norm_sq += w * w;
        doc.entries.emplace_back(idx, static_cast<float>(w));
    }
    if (norm_sq > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
        for (auto& [idx, w] : doc.entries) w *= inv;
    }
    return doc;
}

void TfidfSpace::save(const std::string& json_path) const {
    nlohmann::ordered_json j;
    j["schema"] = "tfidf-v1";
    j["ngram_min"] = cfg_.ngram_min;
    j["ngram_max"] = cfg_.ngram_max;
    j["max_features"] = cfg_.max_features;
    j["terms"] = terms_;
    j["idf"] = idf_;
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw IoError("cannot write tfidf space: " + json_path);
    out << j.dump() << "\n";
}

TfidfSpace TfidfSpace::load(const std::string& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw IoError("cannot open tfidf space: " + json_path);
    nlohmann::json j;
    in >> j;
    TfidfSpace space;
    space.cfg_.ngram_min = j.at("ngram_min").get<size_t>();
    space.cfg_.ngram_max = j.at("ngram_max").get<size_t>();
    space.cfg_.max_features = j.at("max_features").get<size_t>();
    space.terms_ = j.at("terms").get<std::vector<std::string>>();
    space.idf_ = j.at("idf").get<std::vector<double>>();
    for (size_t i = 0; i < space.terms_.size(); ++i)
        space.index_[space.terms_[i]] = static_cast<uint32_t>(i);
    return space;
}

namespace {

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double sparse_dot(const std::vector<float>& w, const SparseDoc& doc) {
    double acc = 0.0;
    for (const auto& [idx, v] : doc.entries) acc += static_cast<double>(w[idx]) * v;
    return acc;
}

struct Objective {
    const std::vector<SparseDoc>& docs;
    const std::vector<uint8_t>& y;
    double l2;
    size_t n_features;

    // value and full gradient (weights + bias); bias carries no penalty
    double eval(const std::vector<double>& wb, std::vector<double>* grad) const {
        const size_t nf = n_features;
        const double inv_n = 1.0 / static_cast<double>(docs.size());
        if (grad) std::fill(grad->begin(), grad->end(), 0.0);
        double loss = 0.0;
        for (size_t i = 0; i < docs.size(); ++i) {
            double z = wb[nf];
            for (const auto& [idx, v] : docs[i].entries) z += wb[idx] * v;
            const double yi = y[i] ? 1.0 : 0.0;
            // log(1 + exp(-s*z)) with s = +-1, stable form
            const double sz = y[i] ? z : -z;
            loss += sz > 0.0 ? std::log1p(std::exp(-sz)) : -sz + std::log1p(std::exp(sz));
            if (grad) {
                const double r = (sigmoid(z) - yi) * inv_n;
                for (const auto& [idx, v] : docs[i].entries) (*grad)[idx] += r * v;
                (*grad)[nf] += r;
            }
        }
        loss *= inv_n;
        double reg = 0.0;
        for (size_t j = 0; j < nf; ++j) {
            reg += wb[j] * wb[j];
            if (grad) (*grad)[j] += l2 * wb[j];
        }
        return loss + 0.5 * l2 * reg;
    }
};

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Nesterov-accelerated full-batch descent with backtracking line search and
// function-value restart.
void minimize(const Objective& obj, std::vector<double>& wb, size_t max_iters, double tol,
              double* out_grad_norm, double* out_value) {
    const size_t dim = wb.size();
    std::vector<double> x = wb, x_prev = wb, yv(dim), grad(dim), trial(dim);
    double step = 1.0;
    double momentum_k = 0.0;
    double fx = obj.eval(x, &grad);
    for (size_t it = 0; it < max_iters; ++it) {
        const double beta = momentum_k / (momentum_k + 3.0);
        for (size_t j = 0; j < dim; ++j) yv[j] = x[j] + beta * (x[j] - x_prev[j]);
        double fy = obj.eval(yv, &grad);
        const double gnorm = norm2(grad);
        if (gnorm < tol) {
            x = yv;
            fx = fy;
            break;
        }
        // Armijo backtracking from the extrapolated point
        double t = step;
        double f_new = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            for (size_t j = 0; j < dim; ++j) trial[j] = yv[j] - t * grad[j];
            f_new = obj.eval(trial, nullptr);
            if (f_new <= fy - 0.5 * t * gnorm * gnorm) break;
            t *= 0.5;
        }
        x_prev = x;
        x = trial;
        step = t * 2.0;
        if (f_new > fx) {
            momentum_k = 0.0;  // restart momentum when the objective rises
        } else {
            momentum_k += 1.0;
        }
        fx = f_new;
    }
    double final_norm = 0.0;
    std::vector<double> final_grad(dim);
    fx = obj.eval(x, &final_grad);
    final_norm = norm2(final_grad);
    wb = x;
    if (out_grad_norm) *out_grad_norm = final_norm;
    if (out_value) *out_value = fx;
}

}  // namespace

OvrLogReg train_ovr_logreg(const std::vector<SparseDoc>& docs,
                           const std::vector<std::string>& label_names,
                           const std::vector<std::vector<uint8_t>>& label_indicators,
                           const LogRegOptions& opts) {
    if (label_names.size() != label_indicators.size())
        throw ValidationError("label name/indicator count mismatch");
    size_t n_features = 0;
    for (const auto& d : docs)
        for (const auto& [idx, v] : d.entries) {
            if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
            n_features = std::max(n_features, static_cast<size_t>(idx) + 1);
        }

    OvrLogReg model;
    model.n_features = n_features;
    model.labels = label_names;
    const size_t n_labels = label_names.size();
    model.weights.assign(n_labels, {});
    model.bias.assign(n_labels, 0.0f);
    model.trained.assign(n_labels, 0);
    model.final_grad_norm.assign(n_labels, 0.0);
    model.final_objective.assign(n_labels, 0.0);

    auto train_one = [&](size_t li) {
        const auto& y = label_indicators[li];
        if (y.size() != docs.size()) throw ValidationError("indicator length mismatch");
        size_t pos = 0;
        for (uint8_t v : y) pos += v ? 1 : 0;
        if (pos == 0 || pos == docs.size()) {
            log::info("skipping label without both classes: " + label_names[li]);
            return;
        }
        std::vector<double> wb(n_features + 1, 0.0);
        Rng rng(mix_seed(opts.seed, "logreg", li));
        for (size_t j = 0; j < n_features; ++j) wb[j] = rng.normal() * 1e-3;
        Objective obj{docs, y, opts.l2, n_features};
        double gn = 0.0, fv = 0.0;
        minimize(obj, wb, opts.max_iters, opts.grad_tol, &gn, &fv);
        model.weights[li].assign(n_features, 0.0f);
        for (size_t j = 0; j < n_features; ++j) model.weights[li][j] = static_cast<float>(wb[j]);
        model.bias[li] = static_cast<float>(wb[n_features]);
        model.trained[li] = 1;
        model.final_grad_norm[li] = gn;
        model.final_objective[li] = fv;
    };

    const size_t threads = std::max<size_t>(1, opts.threads);
    if (threads == 1) {
        for (size_t li = 0; li < n_labels; ++li) train_one(li);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (size_t li = next.fetch_add(1); li < n_labels; li = next.fetch_add(1))
                    train_one(li);
            });
        }
        for (auto& th : pool) th.join();
    }
    return model;
}

double OvrLogReg::score(size_t label_idx, const SparseDoc& doc) const {
    if (!trained[label_idx]) return 0.0;
    return sigmoid(sparse_dot(weights[label_idx], doc) + static_cast<double>(bias[label_idx]));
}

BaselinePrediction predict_baseline(const OvrLogReg& model, const SparseDoc& doc, double threshold,
                                    const LabelOntology& ontology) {
    BaselinePrediction pred;
    std::vector<double> lower_scores(ontology.n_lower(), 0.0);
    for (size_t li = 0; li < model.labels.size(); ++li) {
        const double s = model.score(li, doc);
        lower_scores[ontology.lower_index(model.labels[li])] = s;
        if (s >= threshold) pred.lower.insert(model.labels[li]);
    }
    for (size_t u = 0; u < ontology.n_upper(); ++u) {
        double best = 0.0;
        for (size_t c : ontology.children()[u]) best = std::max(best, lower_scores[c]);
        if (best >= threshold) pred.upper.insert(ontology.upper_labels()[u]);
    }
    return pred;
}

void OvrLogReg::save(const std::string& json_path, const std::string& bin_path) const {
    nlohmann::ordered_json j;
    j["schema"] = "ovr-logreg-v1";
    j["n_features"] = n_features;
    j["labels"] = labels;
    j["bias"] = bias;
    j["trained"] = trained;
    std::ofstream out(json_path, std::ios::binary);
    if (!out) throw IoError("cannot write model: " + json_path);
    out << j.dump() << "\n";
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot write model weights: " + bin_path);
    for (size_t li = 0; li < labels.size(); ++li) {
        std::vector<float> row = trained[li] ? weights[li] : std::vector<float>(n_features, 0.0f);
        bin.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

OvrLogReg OvrLogReg::load(const std::string& json_path, const std::string& bin_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw IoError("cannot open model: " + json_path);
    nlohmann::json j;
    in >> j;
    OvrLogReg model;
    model.n_features = j.at("n_features").get<size_t>();
    model.labels = j.at("labels").get<std::vector<std::string>>();
    model.bias = j.at("bias").get<std::vector<float>>();
    model.trained = j.at("trained").get<std::vector<uint8_t>>();
    model.final_grad_norm.assign(model.labels.size(), 0.0);
    model.final_objective.assign(model.labels.size(), 0.0);
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open model weights: " + bin_path);
    for (size_t li = 0; li < model.labels.size(); ++li) {
        std::vector<float> row(model.n_features);
        bin.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!bin) throw ParseError("truncated weight file: " + bin_path);
        model.weights.push_back(std::move(row));
    }
    return model;
}

}  // namespace chmc
