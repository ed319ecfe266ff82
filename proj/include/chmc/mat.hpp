#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace chmc {

// Dense row-major matrix. Vectors are 1 x n. Everything the trainer touches
// is one of these, so optimizer and checkpoint code can enumerate tensors
// uniformly.
template <typename S>
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<S> a;

    Mat() = default;
    Mat(size_t r, size_t c) : rows(r), cols(c), a(r * c, S(0)) {}

    S* row(size_t i) { return a.data() + i * cols; }
    const S* row(size_t i) const { return a.data() + i * cols; }
    S& at(size_t i, size_t j) { return a[i * cols + j]; }
    S at(size_t i, size_t j) const { return a[i * cols + j]; }
    size_t count() const { return a.size(); }
    bool empty() const { return a.empty(); }
    void zero() { std::fill(a.begin(), a.end(), S(0)); }
};

// C = A * B^T (+C when accumulate). A: m x k, B: n x k, C: m x n.
// This is the forward shape for linear layers with (out x in) weights.
template <typename S>
void gemm_nt(const Mat<S>& A, const Mat<S>& B, Mat<S>& C, bool accumulate = false) {
    const size_t m = A.rows, k = A.cols, n = B.rows;
    if (!accumulate) C.zero();
    for (size_t i = 0; i < m; ++i) {
        const S* ai = A.row(i);
        S* ci = C.row(i);
        for (size_t j = 0; j < n; ++j) {
            const S* bj = B.row(j);
            S acc = S(0);
            for (size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            ci[j] += acc;
        }
    }
}

// C = A * B (+C). A: m x k, B: k x n, C: m x n.
template <typename S>
void gemm_nn(const Mat<S>& A, const Mat<S>& B, Mat<S>& C, bool accumulate = false) {
    const size_t m = A.rows, k = A.cols, n = B.cols;
    if (!accumulate) C.zero();
    for (size_t i = 0; i < m; ++i) {
        const S* ai = A.row(i);
        S* ci = C.row(i);
        for (size_t t = 0; t < k; ++t) {
            const S av = ai[t];
            if (av == S(0)) continue;
            const S* bt = B.row(t);
            for (size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

// C = A^T * B (+C). A: k x m, B: k x n, C: m x n. Weight-gradient shape.
template <typename S>
void gemm_tn(const Mat<S>& A, const Mat<S>& B, Mat<S>& C, bool accumulate = false) {
    const size_t k = A.rows, m = A.cols, n = B.cols;
    if (!accumulate) C.zero();
    for (size_t t = 0; t < k; ++t) {
        const S* at = A.row(t);
        const S* bt = B.row(t);
        for (size_t i = 0; i < m; ++i) {
            const S av = at[i];
            if (av == S(0)) continue;
            S* ci = C.row(i);
            for (size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

template <typename S>
void add_bias_rows(Mat<S>& X, const Mat<S>& b) {
    for (size_t i = 0; i < X.rows; ++i) {
        S* xi = X.row(i);
        const S* bv = b.row(0);
        for (size_t j = 0; j < X.cols; ++j) xi[j] += bv[j];
    }
}

template <typename S>
void add_col_sums(const Mat<S>& X, Mat<S>& out) {
    for (size_t i = 0; i < X.rows; ++i) {
        const S* xi = X.row(i);
        S* o = out.row(0);
        for (size_t j = 0; j < X.cols; ++j) o[j] += xi[j];
    }
}

template <typename S>
bool all_finite(const Mat<S>& X) {
    for (const S& v : X.a)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace chmc
