#pragma once

#include <numeric>

#include "lbridge/tape.hpp"
#include "lbridge/tensor.hpp"
#include "lbridge/translator.hpp"

namespace lbridge {

struct LossWeights {
    float w_trans = 1.0f;
    float w_cycle = 0.5f;
    float w_contrast = 0.3f;
    float w_dist = 0.2f;
    float temperature = 0.07f;  // InfoNCE

    void validate() const;
};

// Scalar loss values. loss_trans averages the squared difference over every
// element; loss_cycle averages per-row squared reconstruction norms (so a unit
// vector reconstructed as zero costs 1 per side, independent of width).
float loss_trans(const Tensor& pred, const Tensor& target);
float loss_cycle(const TranslatorParams& f, const TranslatorParams& g, const Tensor& batch_src,
                 const Tensor& batch_tgt);
float loss_contrast(const Tensor& pred, const Tensor& target, float temperature);
float loss_dist(const Tensor& pred, const Tensor& target);
float composite(float l_trans, float l_cycle, float l_contrast, float l_dist,
                const LossWeights& weights);

// Tape builders with the same definitions, for training and gradient checks.
VarId loss_trans_node(Tape& tape, VarId pred, VarId target);
VarId loss_contrast_node(Tape& tape, VarId pred, VarId target, float temperature);
VarId loss_dist_node(Tape& tape, VarId pred, VarId target);
// Mean over rows of the squared difference norm (the cycle convention).
VarId row_norm_mse_node(Tape& tape, VarId recon, VarId original);

// --- templated definitions shared by the float API and the double-precision
// finite-difference oracles ---

template <typename T>
T loss_trans_t(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    kernels::require_same_shape(pred, target, "loss_trans");
    if (pred.data.empty()) throw ShapeError("loss_trans: empty batch");
    T acc = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const T d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<T>(pred.data.size());
}

template <typename T>
std::vector<int> diagonal_targets(int64_t n) {
    std::vector<int> t(static_cast<size_t>(n));
    std::iota(t.begin(), t.end(), 0);
    return t;
}

template <typename T>
T loss_contrast_t(const BasicTensor<T>& pred, const BasicTensor<T>& target, T temperature) {
    namespace k = kernels;
    k::require_same_shape(pred, target, "loss_contrast");
    k::require_rank(pred, 2, "loss_contrast");
    if (pred.shape[0] < 1) throw ShapeError("loss_contrast: empty batch");
    if (!(temperature > T(0))) throw ShapeError("loss_contrast: temperature must be positive");
    const std::vector<int> targets = diagonal_targets<T>(pred.shape[0]);
    BasicTensor<T> an = k::l2_normalize_rows(pred);
    BasicTensor<T> bn = k::l2_normalize_rows(target);
    const T inv_temp = T(1) / temperature;
    const T row_ce = k::cross_entropy_rows(k::scale(k::matmul_nt(an, bn), inv_temp), targets);
    const T col_ce = k::cross_entropy_rows(k::scale(k::matmul_nt(bn, an), inv_temp), targets);
    return T(0.5) * (row_ce + col_ce);
}

template <typename T>
T loss_dist_t(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
    namespace k = kernels;
    k::require_same_shape(pred, target, "loss_dist");
    k::require_rank(pred, 2, "loss_dist");
    if (pred.shape[0] < 2) {
        throw ShapeError("loss_dist: batch of " + std::to_string(pred.shape[0]) +
                         " rows; need at least 2 for a standard deviation");
    }
    const int64_t cols = pred.shape[1];
    const auto moments = [cols](const BasicTensor<T>& x) {
        BasicTensor<T> mu = k::rows_mean(x);
        BasicTensor<T> centered = x;
        for (int64_t i = 0; i < x.shape[0]; ++i) {
            for (int64_t j = 0; j < cols; ++j) centered.at(i, j) -= mu.at(j);
        }
        BasicTensor<T> var = k::rows_mean(k::mul(centered, centered));  // population
        BasicTensor<T> sigma = var;
        for (T& v : sigma.data) v = std::sqrt(v);
        return std::make_pair(mu, sigma);
    };
    const auto [mu_p, sig_p] = moments(pred);
    const auto [mu_t, sig_t] = moments(target);
    T mean_term = 0, std_term = 0;
    for (int64_t j = 0; j < cols; ++j) {
        const T dm = mu_p.at(j) - mu_t.at(j);
        const T ds = sig_p.at(j) - sig_t.at(j);
        mean_term += dm * dm;
        std_term += ds * ds;
    }
    return mean_term / static_cast<T>(cols) + std_term / static_cast<T>(cols);
}

}  // namespace lbridge
