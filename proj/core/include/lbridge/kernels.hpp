#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lbridge/errors.hpp"
#include "lbridge/tensor.hpp"

// Forward math kernels, templated on scalar type so the same code path can run
// in float for training and in double for numeric cross-checks. All kernels
// validate shapes and throw ShapeError before touching data.

namespace lbridge::kernels {

template <typename T>
void require_rank(const BasicTensor<T>& t, size_t rank, const char* who) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(who) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + BasicTensor<T>::shape_str(t.shape));
    }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* who) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(who) + ": shape mismatch " + BasicTensor<T>::shape_str(a.shape) +
                         " vs " + BasicTensor<T>::shape_str(b.shape));
    }
}

// A[M,K] * B[K,N] -> [M,N]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.shape[1] != b.shape[0]) {
        throw ShapeError("matmul: inner dims " + std::to_string(a.shape[1]) + " vs " +
                         std::to_string(b.shape[0]));
    }
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    BasicTensor<T> out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const T av = a.at(i, p);
            if (av == T(0)) continue;
            const T* brow = b.data.data() + p * n;
            T* orow = out.data.data() + i * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// A[M,K] * B[N,K]^T -> [M,N]
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul_nt lhs");
    require_rank(b, 2, "matmul_nt rhs");
    if (a.shape[1] != b.shape[1]) {
        throw ShapeError("matmul_nt: inner dims " + std::to_string(a.shape[1]) + " vs " +
                         std::to_string(b.shape[1]));
    }
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    BasicTensor<T> out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = 0;
            const T* arow = a.data.data() + i * k;
            const T* brow = b.data.data() + j * k;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out.at(i, j) = acc;
        }
    }
    return out;
}

// A[K,M]^T * B[K,N] -> [M,N]
template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank(a, 2, "matmul_tn lhs");
    require_rank(b, 2, "matmul_tn rhs");
    if (a.shape[0] != b.shape[0]) {
        throw ShapeError("matmul_tn: inner dims " + std::to_string(a.shape[0]) + " vs " +
                         std::to_string(b.shape[0]));
    }
    const int64_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
    BasicTensor<T> out({m, n});
    for (int64_t p = 0; p < k; ++p) {
        const T* arow = a.data.data() + p * m;
        const T* brow = b.data.data() + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* orow = out.data.data() + i * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "add");
    BasicTensor<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "sub");
    BasicTensor<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "mul");
    BasicTensor<T> out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
    BasicTensor<T> out = a;
    for (T& v : out.data) v *= s;
    return out;
}

// X[M,N] + b[N], broadcast over rows.
template <typename T>
BasicTensor<T> add_row(const BasicTensor<T>& x, const BasicTensor<T>& b) {
    require_rank(x, 2, "add_row lhs");
    require_rank(b, 1, "add_row rhs");
    if (x.shape[1] != b.shape[0]) {
        throw ShapeError("add_row: width " + std::to_string(x.shape[1]) + " vs bias " +
                         std::to_string(b.shape[0]));
    }
    BasicTensor<T> out = x;
    for (int64_t i = 0; i < x.shape[0]; ++i) {
        for (int64_t j = 0; j < x.shape[1]; ++j) out.at(i, j) += b.at(j);
    }
    return out;
}

template <typename T>
T gelu_scalar(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad_scalar(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
    const T pdf = std::exp(-x * x / T(2)) / std::sqrt(T(2) * T(M_PI));
    return cdf + x * pdf;
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
    BasicTensor<T> out = x;
    for (T& v : out.data) v = gelu_scalar(v);
    return out;
}

// Row-wise softmax over the last dimension of a rank-2 tensor.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
    require_rank(x, 2, "softmax_rows");
    BasicTensor<T> out = x;
    const int64_t rows = x.shape[0], cols = x.shape[1];
    if (cols == 0) throw ShapeError("softmax_rows: zero-width rows");
    for (int64_t i = 0; i < rows; ++i) {
        T mx = out.at(i, 0);
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, out.at(i, j));
        T sum = 0;
        for (int64_t j = 0; j < cols; ++j) {
            const T e = std::exp(out.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < cols; ++j) out.at(i, j) /= sum;
    }
    return out;
}

// Causal softmax for square attention scores: entry (i, j) with j > i gets
// probability exactly 0 and contributes nothing to the row sum.
template <typename T>
BasicTensor<T> masked_softmax_rows(const BasicTensor<T>& x) {
    require_rank(x, 2, "masked_softmax_rows");
    if (x.shape[0] != x.shape[1]) {
        throw ShapeError("masked_softmax_rows: expected square scores, got " +
                         BasicTensor<T>::shape_str(x.shape));
    }
    const int64_t n = x.shape[0];
    BasicTensor<T> out({n, n});
    for (int64_t i = 0; i < n; ++i) {
        T mx = x.at(i, 0);
        for (int64_t j = 1; j <= i; ++j) mx = std::max(mx, x.at(i, j));
        T sum = 0;
        for (int64_t j = 0; j <= i; ++j) {
            const T e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j <= i; ++j) out.at(i, j) /= sum;
    }
    return out;
}

// Non-affine layer norm over each row. Optionally reports the normalized rows
// and per-row inverse std, which the backward pass needs.
template <typename T>
BasicTensor<T> layer_norm_rows(const BasicTensor<T>& x, T eps,
                               BasicTensor<T>* inv_std_out = nullptr) {
    require_rank(x, 2, "layer_norm_rows");
    const int64_t rows = x.shape[0], cols = x.shape[1];
    if (cols == 0) throw ShapeError("layer_norm_rows: zero-width rows");
    BasicTensor<T> out({rows, cols});
    if (inv_std_out) *inv_std_out = BasicTensor<T>({rows});
    for (int64_t i = 0; i < rows; ++i) {
        T mean = 0;
        for (int64_t j = 0; j < cols; ++j) mean += x.at(i, j);
        mean /= static_cast<T>(cols);
        T var = 0;
        for (int64_t j = 0; j < cols; ++j) {
            const T d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T inv = T(1) / std::sqrt(var + eps);
        if (inv_std_out) inv_std_out->at(i) = inv;
        for (int64_t j = 0; j < cols; ++j) out.at(i, j) = (x.at(i, j) - mean) * inv;
    }
    return out;
}

// Row-wise L2 normalization; a zero row has no direction and is rejected.
template <typename T>
BasicTensor<T> l2_normalize_rows(const BasicTensor<T>& x) {
    require_rank(x, 2, "l2_normalize_rows");
    BasicTensor<T> out = x;
    const int64_t rows = x.shape[0], cols = x.shape[1];
    for (int64_t i = 0; i < rows; ++i) {
        T sq = 0;
        for (int64_t j = 0; j < cols; ++j) sq += x.at(i, j) * x.at(i, j);
        const T norm = std::sqrt(sq);
        if (!(norm > T(0))) {
            throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
        }
        for (int64_t j = 0; j < cols; ++j) out.at(i, j) /= norm;
    }
    return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
    require_rank(x, 2, "transpose");
    BasicTensor<T> out({x.shape[1], x.shape[0]});
    for (int64_t i = 0; i < x.shape[0]; ++i) {
        for (int64_t j = 0; j < x.shape[1]; ++j) out.at(j, i) = x.at(i, j);
    }
    return out;
}

template <typename T>
T sum(const BasicTensor<T>& x) {
    T s = 0;
    for (const T v : x.data) s += v;
    return s;
}

template <typename T>
T mean(const BasicTensor<T>& x) {
    if (x.data.empty()) throw ShapeError("mean: empty tensor");
    return sum(x) / static_cast<T>(x.data.size());
}

// Column means of X[N,D] -> [D].
template <typename T>
BasicTensor<T> rows_mean(const BasicTensor<T>& x) {
    require_rank(x, 2, "rows_mean");
    const int64_t rows = x.shape[0], cols = x.shape[1];
    if (rows == 0) throw ShapeError("rows_mean: no rows");
    BasicTensor<T> out({cols});
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) out.at(j) += x.at(i, j);
    }
    for (int64_t j = 0; j < cols; ++j) out.at(j) /= static_cast<T>(rows);
    return out;
}

// Embedding lookup: rows of table[V,D] selected by ids.
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& table, const std::vector<int>& ids) {
    require_rank(table, 2, "gather_rows");
    const int64_t v = table.shape[0], d = table.shape[1];
    BasicTensor<T> out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v) {
            throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(v) + " rows");
        }
        std::copy_n(table.data.data() + static_cast<int64_t>(ids[i]) * d, d,
                    out.data.data() + static_cast<int64_t>(i) * d);
    }
    return out;
}

// Mean NLL of targets under row-wise softmax of logits[L,V]. If probs_out is
// given it receives the softmax rows (the backward pass reuses them).
template <typename T>
T cross_entropy_rows(const BasicTensor<T>& logits, const std::vector<int>& targets,
                     BasicTensor<T>* probs_out = nullptr) {
    require_rank(logits, 2, "cross_entropy_rows");
    if (static_cast<int64_t>(targets.size()) != logits.shape[0]) {
        throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(logits.shape[0]) + " rows");
    }
    BasicTensor<T> probs = softmax_rows(logits);
    const int64_t rows = logits.shape[0], cols = logits.shape[1];
    T nll = 0;
    for (int64_t i = 0; i < rows; ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (t < 0 || t >= cols) {
            throw ShapeError("cross_entropy_rows: target " + std::to_string(t) +
                             " outside vocab of " + std::to_string(cols));
        }
        nll -= std::log(probs.at(i, t));
    }
    if (probs_out) *probs_out = std::move(probs);
    return nll / static_cast<T>(rows);
}

}  // namespace lbridge::kernels
