#include "chmc/heads.hpp"

#include <cmath>

namespace chmc {

namespace {
const char* kHeadNames[] = {"single_task", "lcl", "lcpn", "hmcn_local", "hmcn_global"};
}

const char* head_kind_name(HeadKind k) { return kHeadNames[static_cast<size_t>(k)]; }

HeadKind head_kind_from_name(const std::string& name) {
    for (size_t i = 0; i < 5; ++i)
        if (name == kHeadNames[i]) return static_cast<HeadKind>(i);
    throw ValidationError("unknown head kind: " + name);
}

namespace {

double mean_bce(const std::vector<double>& scores, const std::vector<uint8_t>& gold) {
    if (scores.size() != gold.size()) throw ValidationError("score/indicator length mismatch");
    double total = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        const double s = scores[i];
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("score outside [0,1]");
        // clamp only to avoid log(0); the validation above already rejected
        // non-probabilities
        const double sc = std::min(std::max(s, 1e-12), 1.0 - 1e-12);
        total += gold[i] ? -std::log(sc) : -std::log(1.0 - sc);
    }
    return total / static_cast<double>(scores.size());
}

}  // namespace

double mtl_loss(const ScoreSet& scores, const std::vector<uint8_t>& gold_upper,
                const std::vector<uint8_t>& gold_lower, double lambda, HeadKind kind) {
    if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must lie in [0,1]");
    const double l_lower = mean_bce(scores.lower, gold_lower);
    if (kind == HeadKind::SingleTask) return l_lower;
    const double l_upper = mean_bce(scores.upper, gold_upper);
    double total = lambda * l_upper + (1.0 - lambda) * l_lower;
    if (kind == HeadKind::HMCNGlobal) {
        std::vector<uint8_t> concat(gold_upper);
        concat.insert(concat.end(), gold_lower.begin(), gold_lower.end());
        total += mean_bce(scores.global, concat);
    }
    return total;
}

Prediction predict(const ScoreSet& scores, HeadKind kind, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ValidationError("threshold must lie in (0,1)");
    Prediction pred;
    const size_t nu = scores.upper.size();
    for (size_t u = 0; u < nu; ++u) {
        double s = scores.upper[u];
        if (kind == HeadKind::HMCNGlobal) s = 0.5 * (s + scores.global[u]);
        if (s >= threshold) pred.upper.insert(u);
    }
    for (size_t c = 0; c < scores.lower.size(); ++c) {
        double s = scores.lower[c];
        if (kind == HeadKind::HMCNGlobal) s = 0.5 * (s + scores.global[nu + c]);
        if (s >= threshold) pred.lower.insert(c);
    }
    return pred;
}

std::vector<uint8_t> upper_indicators(const std::set<std::string>& labels,
                                      const LabelOntology& ontology) {
    std::vector<uint8_t> out(ontology.n_upper(), 0);
    for (const auto& l : labels) out[ontology.upper_index(l)] = 1;
    return out;
}

std::vector<uint8_t> lower_indicators(const std::set<std::string>& labels,
                                      const LabelOntology& ontology) {
    std::vector<uint8_t> out(ontology.n_lower(), 0);
    for (const auto& l : labels) out[ontology.lower_index(l)] = 1;
    return out;
}

}  // namespace chmc
