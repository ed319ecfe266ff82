#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "chmc/errors.hpp"
#include "chmc/mat.hpp"
#include "chmc/ontology.hpp"
#include "chmc/rng.hpp"

namespace chmc {

enum class HeadKind { SingleTask, LCL, LCPN, HMCNLocal, HMCNGlobal };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

// Per-level sigmoid scores. global is present only for HMCNGlobal and is
// ordered upper labels first, then lower labels.
struct ScoreSet {
    std::vector<double> upper;
    std::vector<double> lower;
    std::vector<double> global;
};

// All heads are single feed-forward maps over the pooled CLS embedding;
// HMCN inserts tanh poolers P1/P2 between them.
template <typename S>
struct HeadParams {
    HeadKind kind = HeadKind::SingleTask;
    size_t d_model = 0;
    size_t n_upper = 0;
    size_t n_lower = 0;

    Mat<S> st_w, st_b;                          // SingleTask: lower layer
    Mat<S> lcl_upper_w, lcl_upper_b;            // LCL: one flat layer per level
    Mat<S> lcl_lower_w, lcl_lower_b;
    Mat<S> lcpn_root_w, lcpn_root_b;            // LCPN: root + one layer per parent
    std::vector<Mat<S>> lcpn_child_w, lcpn_child_b;
    Mat<S> p1_w, p1_b, hm_upper_w, hm_upper_b;  // HMCN: chained poolers
    Mat<S> p2_w, p2_b, hm_lower_w, hm_lower_b;
    Mat<S> global_w, global_b;                  // HMCNGlobal only

    static HeadParams zeros(HeadKind kind, size_t d_model, const LabelOntology& ontology) {
        HeadParams h;
        h.kind = kind;
        h.d_model = d_model;
        h.n_upper = ontology.n_upper();
        h.n_lower = ontology.n_lower();
        const size_t d = d_model, nu = h.n_upper, nl = h.n_lower;
        switch (kind) {
            case HeadKind::SingleTask:
                h.st_w = Mat<S>(nl, d);
                h.st_b = Mat<S>(1, nl);
                break;
            case HeadKind::LCL:
                h.lcl_upper_w = Mat<S>(nu, d);
                h.lcl_upper_b = Mat<S>(1, nu);
                h.lcl_lower_w = Mat<S>(nl, d);
                h.lcl_lower_b = Mat<S>(1, nl);
                break;
            case HeadKind::LCPN:
                h.lcpn_root_w = Mat<S>(nu, d);
                h.lcpn_root_b = Mat<S>(1, nu);
                for (const auto& group : ontology.children()) {
                    h.lcpn_child_w.push_back(Mat<S>(group.size(), d));
                    h.lcpn_child_b.push_back(Mat<S>(1, group.size()));
                }
                break;
            case HeadKind::HMCNGlobal:
                h.global_w = Mat<S>(nu + nl, d);
                h.global_b = Mat<S>(1, nu + nl);
                [[fallthrough]];
            case HeadKind::HMCNLocal:
                h.p1_w = Mat<S>(d, d);
                h.p1_b = Mat<S>(1, d);
                h.hm_upper_w = Mat<S>(nu, d);
                h.hm_upper_b = Mat<S>(1, nu);
                h.p2_w = Mat<S>(d, d);
                h.p2_b = Mat<S>(1, d);
                h.hm_lower_w = Mat<S>(nl, d);
                h.hm_lower_b = Mat<S>(1, nl);
                break;
        }
        return h;
    }

    static HeadParams init(HeadKind kind, size_t d_model, const LabelOntology& ontology,
                           uint64_t seed) {
        HeadParams h = zeros(kind, d_model, ontology);
        Rng rng(mix_seed(seed, "head_init"));
        h.for_each([&](const std::string& name, Mat<S>& m) {
            if (name.ends_with(".w"))
                for (auto& v : m.a) v = static_cast<S>(rng.normal() * 0.02);
        });
        return h;
    }

    template <typename F>
    void for_each(F&& f) {
        switch (kind) {
            case HeadKind::SingleTask:
                f("head.st.w", st_w);
                f("head.st.b", st_b);
                break;
            case HeadKind::LCL:
                f("head.lcl_upper.w", lcl_upper_w);
                f("head.lcl_upper.b", lcl_upper_b);
                f("head.lcl_lower.w", lcl_lower_w);
                f("head.lcl_lower.b", lcl_lower_b);
                break;
            case HeadKind::LCPN:
                f("head.lcpn_root.w", lcpn_root_w);
                f("head.lcpn_root.b", lcpn_root_b);
                for (size_t i = 0; i < lcpn_child_w.size(); ++i) {
                    f("head.lcpn_child" + std::to_string(i) + ".w", lcpn_child_w[i]);
                    f("head.lcpn_child" + std::to_string(i) + ".b", lcpn_child_b[i]);
                }
                break;
            case HeadKind::HMCNGlobal:
            case HeadKind::HMCNLocal:
                f("head.p1.w", p1_w);
                f("head.p1.b", p1_b);
                f("head.hm_upper.w", hm_upper_w);
                f("head.hm_upper.b", hm_upper_b);
                f("head.p2.w", p2_w);
                f("head.p2.b", p2_b);
                f("head.hm_lower.w", hm_lower_w);
                f("head.hm_lower.b", hm_lower_b);
                if (kind == HeadKind::HMCNGlobal) {
                    f("head.global.w", global_w);
                    f("head.global.b", global_b);
                }
                break;
        }
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<HeadParams*>(this)->for_each(
            [&](const std::string& n, Mat<S>& m) { f(n, static_cast<const Mat<S>&>(m)); });
    }
};

namespace detail {

template <typename S>
double sigmoid_d(S z) {
    const double x = static_cast<double>(z);
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// y = x . W^T + b for a single row
template <typename S>
std::vector<S> linear_row(const S* x, const Mat<S>& w, const Mat<S>& b) {
    std::vector<S> out(w.rows);
    for (size_t i = 0; i < w.rows; ++i) {
        const S* wi = w.row(i);
        S acc = b.at(0, i);
        for (size_t j = 0; j < w.cols; ++j) acc += x[j] * wi[j];
        out[i] = acc;
    }
    return out;
}

}  // namespace detail

// Deterministic forward for one pooled CLS embedding, producing sigmoid
// probabilities. SingleTask derives upper scores as max over each parent's
// children; LCPN applies no parent gating.
template <typename S>
ScoreSet head_forward(const HeadParams<S>& params, const std::vector<S>& cls,
                      const LabelOntology& ontology) {
    if (cls.size() != params.d_model) throw ValidationError("cls dimension mismatch");
    const S* x = cls.data();
    ScoreSet out;
    auto sig = [](const std::vector<S>& zs) {
        std::vector<double> ps(zs.size());
        for (size_t i = 0; i < zs.size(); ++i) ps[i] = detail::sigmoid_d(zs[i]);
        return ps;
    };
    switch (params.kind) {
        case HeadKind::SingleTask: {
            out.lower = sig(detail::linear_row(x, params.st_w, params.st_b));
            out.upper.assign(params.n_upper, 0.0);
            for (size_t u = 0; u < params.n_upper; ++u)
                for (size_t c : ontology.children()[u])
                    out.upper[u] = std::max(out.upper[u], out.lower[c]);
            break;
        }
        case HeadKind::LCL: {
            out.upper = sig(detail::linear_row(x, params.lcl_upper_w, params.lcl_upper_b));
            out.lower = sig(detail::linear_row(x, params.lcl_lower_w, params.lcl_lower_b));
            break;
        }
        case HeadKind::LCPN: {
            out.upper = sig(detail::linear_row(x, params.lcpn_root_w, params.lcpn_root_b));
            out.lower.assign(params.n_lower, 0.0);
            for (size_t u = 0; u < params.n_upper; ++u) {
                auto zs = detail::linear_row(x, params.lcpn_child_w[u], params.lcpn_child_b[u]);
                const auto& group = ontology.children()[u];
                for (size_t k = 0; k < group.size(); ++k)
                    out.lower[group[k]] = detail::sigmoid_d(zs[k]);
            }
            break;
        }
        case HeadKind::HMCNLocal:
        case HeadKind::HMCNGlobal: {
            auto p1 = detail::linear_row(x, params.p1_w, params.p1_b);
            for (auto& v : p1) v = std::tanh(v);
            out.upper = sig(detail::linear_row(p1.data(), params.hm_upper_w, params.hm_upper_b));
            auto p2 = detail::linear_row(p1.data(), params.p2_w, params.p2_b);
            for (auto& v : p2) v = std::tanh(v);
            out.lower = sig(detail::linear_row(p2.data(), params.hm_lower_w, params.hm_lower_b));
            if (params.kind == HeadKind::HMCNGlobal)
                out.global = sig(detail::linear_row(p2.data(), params.global_w, params.global_b));
            break;
        }
    }
    return out;
}

// Weighted binary cross-entropy: lambda * mean BCE(upper) + (1 - lambda) *
// mean BCE(lower); HMCNGlobal adds mean BCE of the global scores against the
// concatenated indicators with coefficient 1. SingleTask uses the lower term
// only.
double mtl_loss(const ScoreSet& scores, const std::vector<uint8_t>& gold_upper,
                const std::vector<uint8_t>& gold_lower, double lambda, HeadKind kind);

struct Prediction {
    std::set<size_t> upper;
    std::set<size_t> lower;
};

// Thresholded decision; the threshold is inclusive. HMCNGlobal averages the
// local score with its global slice. No hierarchical filtering is applied.
Prediction predict(const ScoreSet& scores, HeadKind kind, double threshold);

// Training path: loss plus gradients for one batch of CLS embeddings.
// Computes the same objective as mtl_loss but works on logits for numeric
// stability. dcls has one row per example.
template <typename S>
struct HeadLossResult {
    double loss = 0.0;
    Mat<S> dcls;
    HeadParams<S> grads;
};

template <typename S>
HeadLossResult<S> head_loss_and_grads(const HeadParams<S>& params, const Mat<S>& cls,
                                      const std::vector<std::vector<uint8_t>>& gold_upper,
                                      const std::vector<std::vector<uint8_t>>& gold_lower,
                                      double lambda, const LabelOntology& ontology) {
    if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must lie in [0,1]");
    const size_t B = cls.rows;
    if (gold_upper.size() != B || gold_lower.size() != B)
        throw ValidationError("gold label batch size mismatch");
    const size_t d = params.d_model;
    const size_t nu = params.n_upper, nl = params.n_lower;

    HeadLossResult<S> res;
    res.grads = HeadParams<S>::zeros(params.kind, d, ontology);
    res.dcls = Mat<S>(B, d);
    double loss = 0.0;

    // per-output coefficient for the mean-BCE terms, already averaged over
    // batch and output count
    const double cu = lambda / static_cast<double>(nu * B);
    const double cl = (1.0 - lambda) / static_cast<double>(nl * B);
    const double cg = 1.0 / static_cast<double>((nu + nl) * B);

    auto bce_logit = [](double z, double y) {
        // softplus(z) - y*z, stable for both signs
        const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        return sp - y * z;
    };

    for (size_t b = 0; b < B; ++b) {
        const S* x = cls.row(b);
        S* dx = res.dcls.row(b);
        const auto& yu = gold_upper[b];
        const auto& yl = gold_lower[b];
        if (yu.size() != nu || yl.size() != nl)
            throw ValidationError("gold indicator length mismatch");

        // accumulate dLoss/dz into dz vectors, then push through linearities
        switch (params.kind) {
            case HeadKind::SingleTask: {
                auto z = detail::linear_row(x, params.st_w, params.st_b);
                for (size_t i = 0; i < nl; ++i) {
                    const double y = yl[i];
                    const double coeff = 1.0 / static_cast<double>(nl * B);
                    loss += coeff * bce_logit(static_cast<double>(z[i]), y);
                    const S dz = static_cast<S>(coeff * (detail::sigmoid_d(z[i]) - y));
                    res.grads.st_b.at(0, i) += dz;
                    const S* wi = params.st_w.row(i);
                    S* dwi = res.grads.st_w.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dwi[j] += dz * x[j];
                        dx[j] += dz * wi[j];
                    }
                }
                break;
            }
            case HeadKind::LCL: {
                auto zu = detail::linear_row(x, params.lcl_upper_w, params.lcl_upper_b);
                auto zl = detail::linear_row(x, params.lcl_lower_w, params.lcl_lower_b);
                for (size_t i = 0; i < nu; ++i) {
                    loss += cu * bce_logit(static_cast<double>(zu[i]), yu[i]);
                    const S dz = static_cast<S>(cu * (detail::sigmoid_d(zu[i]) - yu[i]));
                    res.grads.lcl_upper_b.at(0, i) += dz;
                    const S* wi = params.lcl_upper_w.row(i);
                    S* dwi = res.grads.lcl_upper_w.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dwi[j] += dz * x[j];
                        dx[j] += dz * wi[j];
                    }
                }
                for (size_t i = 0; i < nl; ++i) {
                    loss += cl * bce_logit(static_cast<double>(zl[i]), yl[i]);
                    const S dz = static_cast<S>(cl * (detail::sigmoid_d(zl[i]) - yl[i]));
                    res.grads.lcl_lower_b.at(0, i) += dz;
                    const S* wi = params.lcl_lower_w.row(i);
                    S* dwi = res.grads.lcl_lower_w.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dwi[j] += dz * x[j];
                        dx[j] += dz * wi[j];
                    }
                }
                break;
            }
            case HeadKind::LCPN: {
                auto zu = detail::linear_row(x, params.lcpn_root_w, params.lcpn_root_b);
                for (size_t i = 0; i < nu; ++i) {
                    loss += cu * bce_logit(static_cast<double>(zu[i]), yu[i]);
                    const S dz = static_cast<S>(cu * (detail::sigmoid_d(zu[i]) - yu[i]));
                    res.grads.lcpn_root_b.at(0, i) += dz;
                    const S* wi = params.lcpn_root_w.row(i);
                    S* dwi = res.grads.lcpn_root_w.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dwi[j] += dz * x[j];
                        dx[j] += dz * wi[j];
                    }
                }
                for (size_t u = 0; u < nu; ++u) {
                    const auto& group = ontology.children()[u];
                    auto zc = detail::linear_row(x, params.lcpn_child_w[u], params.lcpn_child_b[u]);
                    for (size_t k = 0; k < group.size(); ++k) {
                        const double y = yl[group[k]];
                        loss += cl * bce_logit(static_cast<double>(zc[k]), y);
                        const S dz = static_cast<S>(cl * (detail::sigmoid_d(zc[k]) - y));
                        res.grads.lcpn_child_b[u].at(0, k) += dz;
                        const S* wi = params.lcpn_child_w[u].row(k);
                        S* dwi = res.grads.lcpn_child_w[u].row(k);
                        for (size_t j = 0; j < d; ++j) {
                            dwi[j] += dz * x[j];
                            dx[j] += dz * wi[j];
                        }
                    }
                }
                break;
            }
            case HeadKind::HMCNLocal:
            case HeadKind::HMCNGlobal: {
                auto z1 = detail::linear_row(x, params.p1_w, params.p1_b);
                std::vector<S> p1(d);
                for (size_t j = 0; j < d; ++j) p1[j] = std::tanh(z1[j]);
                auto zu = detail::linear_row(p1.data(), params.hm_upper_w, params.hm_upper_b);
                auto z2 = detail::linear_row(p1.data(), params.p2_w, params.p2_b);
                std::vector<S> p2(d);
                for (size_t j = 0; j < d; ++j) p2[j] = std::tanh(z2[j]);
                auto zl = detail::linear_row(p2.data(), params.hm_lower_w, params.hm_lower_b);

                std::vector<S> dp1(d, S(0)), dp2(d, S(0));
                for (size_t i = 0; i < nu; ++i) {
                    loss += cu * bce_logit(static_cast<double>(zu[i]), yu[i]);
                    const S dz = static_cast<S>(cu * (detail::sigmoid_d(zu[i]) - yu[i]));
                    res.grads.hm_upper_b.at(0, i) += dz;
                    const S* wi = params.hm_upper_w.row(i);
                    S* dwi = res.grads.hm_upper_w.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dwi[j] += dz * p1[j];
                        dp1[j] += dz * wi[j];
                    }
                }
                for (size_t i = 0; i < nl; ++i) {
                    loss += cl * bce_logit(static_cast<double>(zl[i]), yl[i]);
                    const S dz = static_cast<S>(cl * (detail::sigmoid_d(zl[i]) - yl[i]));
                    res.grads.hm_lower_b.at(0, i) += dz;
                    const S* wi = params.hm_lower_w.row(i);
                    S* dwi = res.grads.hm_lower_w.row(i);
                    for (size_t j = 0; j < d; ++j) {
                        dwi[j] += dz * p2[j];
                        dp2[j] += dz * wi[j];
                    }
                }
                if (params.kind == HeadKind::HMCNGlobal) {
                    auto zg = detail::linear_row(p2.data(), params.global_w, params.global_b);
                    for (size_t i = 0; i < nu + nl; ++i) {
                        const double y = i < nu ? yu[i] : yl[i - nu];
                        loss += cg * bce_logit(static_cast<double>(zg[i]), y);
                        const S dz = static_cast<S>(cg * (detail::sigmoid_d(zg[i]) - y));
                        res.grads.global_b.at(0, i) += dz;
                        const S* wi = params.global_w.row(i);
                        S* dwi = res.grads.global_w.row(i);
                        for (size_t j = 0; j < d; ++j) {
                            dwi[j] += dz * p2[j];
                            dp2[j] += dz * wi[j];
                        }
                    }
                }
                // through tanh P2 back to P1
                for (size_t j = 0; j < d; ++j) {
                    const S dz2 = dp2[j] * (S(1) - p2[j] * p2[j]);
                    res.grads.p2_b.at(0, j) += dz2;
                    const S* wj = params.p2_w.row(j);
                    S* dwj = res.grads.p2_w.row(j);
                    for (size_t c = 0; c < d; ++c) {
                        dwj[c] += dz2 * p1[c];
                        dp1[c] += dz2 * wj[c];
                    }
                }
                // through tanh P1 back to cls
                for (size_t j = 0; j < d; ++j) {
                    const S dz1 = dp1[j] * (S(1) - p1[j] * p1[j]);
                    res.grads.p1_b.at(0, j) += dz1;
                    const S* wj = params.p1_w.row(j);
                    S* dwj = res.grads.p1_w.row(j);
                    for (size_t c = 0; c < d; ++c) {
                        dwj[c] += dz1 * x[c];
                        dx[c] += dz1 * wj[c];
                    }
                }
                break;
            }
        }
    }
    res.loss = loss;
    return res;
}

// Indicator vectors in ontology order for one tweet's label sets.
std::vector<uint8_t> upper_indicators(const std::set<std::string>& labels,
                                      const LabelOntology& ontology);
std::vector<uint8_t> lower_indicators(const std::set<std::string>& labels,
                                      const LabelOntology& ontology);

}  // namespace chmc
