#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lbridge/adamw.hpp"
#include "lbridge/errors.hpp"
#include "lbridge/kernels.hpp"
#include "lbridge/tape.hpp"
#include "lbridge/tensor.hpp"

namespace lbridge {

enum class Activation { kGelu = 0, kIdentity = 1 };

struct TranslatorConfig {
    int d_src = 64;
    int d_tgt = 64;
    int d_hidden = 32;
    int n_heads = 8;
    int n_slots = 4;
    uint32_t seed = 0;
    // kIdentity turns the extractor nonlinearity off, leaving a purely linear
    // path through the network when the attention output projection is zero.
    Activation activation = Activation::kGelu;

    void validate() const;
    int d_head() const { return d_hidden / n_heads; }
};

// One direction of the bridge: extractor (d_src -> d_hidden, nonlinearity),
// n_slots learned slot projections, a pre-norm multi-head self-attention block
// over the slots (Z + MHA(LN(Z))), mean-pool, generator (d_hidden -> d_tgt).
struct TranslatorParams {
    TranslatorConfig config;
    ParamMap params;
};

// Canonical (name, shape) listing; initialization, checkpoints, and gradient
// plumbing all follow this order.
std::vector<std::pair<std::string, std::vector<int64_t>>> translator_param_layout(
    const TranslatorConfig& config);
int64_t translator_param_count(const TranslatorConfig& config);

TranslatorParams init_translator(const TranslatorConfig& config);

constexpr float kTranslatorLnEps = 1e-5f;

// Shared forward definition; float for production, double for the
// finite-difference oracles.
template <typename T>
BasicTensor<T> translate_batch_t(const TranslatorConfig& config,
                                 const std::map<std::string, BasicTensor<T>>& params,
                                 const BasicTensor<T>& x);

Tensor translate_batch(const TranslatorParams& params, const Tensor& x);  // [N, d_src]
Tensor translate(const TranslatorParams& params, const Tensor& v);        // [d_src]
Tensor cycle(const TranslatorParams& f, const TranslatorParams& g, const Tensor& v);

// Tape-side forward for training.
struct TranslatorVars {
    std::map<std::string, VarId> leaves;
};
TranslatorVars stage_translator(Tape& tape, const TranslatorParams& params,
                                bool requires_grad = true);
VarId translate_on_tape(Tape& tape, const TranslatorConfig& config, const TranslatorVars& vars,
                        VarId x);

// --- template definition ---

template <typename T>
BasicTensor<T> translate_batch_t(const TranslatorConfig& config,
                                 const std::map<std::string, BasicTensor<T>>& params,
                                 const BasicTensor<T>& x) {
    namespace k = kernels;
    k::require_rank(x, 2, "translate");
    if (x.shape[1] != config.d_src) {
        throw ShapeError("translate: input width " + std::to_string(x.shape[1]) +
                         " does not match d_src " + std::to_string(config.d_src));
    }
    if (!x.finite()) throw NumericError("translate: non-finite input");

    const int64_t n = x.shape[0];
    const int64_t dh = config.d_hidden;
    const int64_t slots = config.n_slots;
    const int64_t head_w = config.d_head();
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(head_w));
    const T eps = static_cast<T>(kTranslatorLnEps);

    BasicTensor<T> extracted =
        k::add_row(k::matmul(x, params.at("extractor.w")), params.at("extractor.b"));
    if (config.activation == Activation::kGelu) extracted = k::gelu(extracted);

    BasicTensor<T> pooled({n, dh});
    for (int64_t i = 0; i < n; ++i) {
        BasicTensor<T> e({1, dh});
        std::copy_n(extracted.data.data() + i * dh, dh, e.data.data());
        BasicTensor<T> z({slots, dh});
        for (int64_t s = 0; s < slots; ++s) {
            const std::string tag = "slot." + std::to_string(s) + ".";
            BasicTensor<T> row =
                k::add_row(k::matmul(e, params.at(tag + "w")), params.at(tag + "b"));
            std::copy_n(row.data.data(), dh, z.data.data() + s * dh);
        }
        BasicTensor<T> zn = k::layer_norm_rows(z, eps);
        BasicTensor<T> q = k::matmul(zn, params.at("attn.wq"));
        BasicTensor<T> kk = k::matmul(zn, params.at("attn.wk"));
        BasicTensor<T> v = k::matmul(zn, params.at("attn.wv"));
        BasicTensor<T> merged({slots, dh});
        for (int h = 0; h < config.n_heads; ++h) {
            const int64_t off = h * head_w;
            BasicTensor<T> qh({slots, head_w}), kh({slots, head_w}), vh({slots, head_w});
            for (int64_t r = 0; r < slots; ++r) {
                std::copy_n(q.data.data() + r * dh + off, head_w, qh.data.data() + r * head_w);
                std::copy_n(kk.data.data() + r * dh + off, head_w, kh.data.data() + r * head_w);
                std::copy_n(v.data.data() + r * dh + off, head_w, vh.data.data() + r * head_w);
            }
            BasicTensor<T> probs = k::softmax_rows(k::scale(k::matmul_nt(qh, kh), inv_sqrt_dh));
            BasicTensor<T> oh = k::matmul(probs, vh);
            for (int64_t r = 0; r < slots; ++r) {
                std::copy_n(oh.data.data() + r * head_w, head_w,
                            merged.data.data() + r * dh + off);
            }
        }
        BasicTensor<T> attn =
            k::add_row(k::matmul(merged, params.at("attn.wo")), params.at("attn.bo"));
        BasicTensor<T> z2 = k::add(z, attn);
        BasicTensor<T> mean = k::rows_mean(z2);
        std::copy_n(mean.data.data(), dh, pooled.data.data() + i * dh);
    }
    BasicTensor<T> out =
        k::add_row(k::matmul(pooled, params.at("generator.w")), params.at("generator.b"));
    if (!out.finite()) throw NumericError("translate: non-finite output");
    return out;
}

}  // namespace lbridge
