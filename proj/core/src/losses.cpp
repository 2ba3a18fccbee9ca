#include "lbridge/losses.hpp"

#include <cmath>

#include "lbridge/errors.hpp"

namespace lbridge {

void LossWeights::validate() const {
    if (w_trans < 0.0f || w_cycle < 0.0f || w_contrast < 0.0f || w_dist < 0.0f) {
        throw ShapeError("loss weights: negative weight");
    }
    if (!(temperature > 0.0f)) {
        throw ShapeError("loss weights: temperature must be positive");
    }
}

float loss_trans(const Tensor& pred, const Tensor& target) {
    return loss_trans_t<float>(pred, target);
}

float loss_cycle(const TranslatorParams& f, const TranslatorParams& g, const Tensor& batch_src,
                 const Tensor& batch_tgt) {
    namespace k = kernels;
    k::require_rank(batch_src, 2, "loss_cycle src");
    k::require_rank(batch_tgt, 2, "loss_cycle tgt");
    if (f.config.d_tgt != g.config.d_src || g.config.d_tgt != f.config.d_src ||
        batch_src.shape[1] != f.config.d_src || batch_tgt.shape[1] != g.config.d_src) {
        throw ShapeError("loss_cycle: incompatible dimension chain");
    }
    const auto side = [](const Tensor& recon, const Tensor& original) {
        float acc = 0.0f;
        for (size_t i = 0; i < recon.data.size(); ++i) {
            const float d = recon.data[i] - original.data[i];
            acc += d * d;
        }
        return acc / static_cast<float>(original.shape[0]);
    };
    const Tensor recon_src = translate_batch(g, translate_batch(f, batch_src));
    const Tensor recon_tgt = translate_batch(f, translate_batch(g, batch_tgt));
    return side(recon_src, batch_src) + side(recon_tgt, batch_tgt);
}

float loss_contrast(const Tensor& pred, const Tensor& target, float temperature) {
    return loss_contrast_t<float>(pred, target, temperature);
}

float loss_dist(const Tensor& pred, const Tensor& target) {
    return loss_dist_t<float>(pred, target);
}

float composite(float l_trans, float l_cycle, float l_contrast, float l_dist,
                const LossWeights& weights) {
    weights.validate();
    for (const float c : {l_trans, l_cycle, l_contrast, l_dist}) {
        if (!std::isfinite(c)) throw NumericError("composite: non-finite loss component");
    }
    return weights.w_trans * l_trans + weights.w_cycle * l_cycle +
           weights.w_contrast * l_contrast + weights.w_dist * l_dist;
}

VarId loss_trans_node(Tape& tape, VarId pred, VarId target) {
    return tape.mse(pred, target);
}

VarId loss_contrast_node(Tape& tape, VarId pred, VarId target, float temperature) {
    if (!(temperature > 0.0f)) throw ShapeError("loss_contrast: temperature must be positive");
    const int64_t n = tape.value(pred).shape[0];
    const std::vector<int> targets = diagonal_targets<float>(n);
    const float inv_temp = 1.0f / temperature;
    VarId an = tape.l2_normalize_rows(pred);
    VarId bn = tape.l2_normalize_rows(target);
    VarId row_ce = tape.cross_entropy(tape.scale(tape.matmul_nt(an, bn), inv_temp), targets);
    VarId col_ce = tape.cross_entropy(tape.scale(tape.matmul_nt(bn, an), inv_temp), targets);
    return tape.scale(tape.add(row_ce, col_ce), 0.5f);
}

VarId loss_dist_node(Tape& tape, VarId pred, VarId target) {
    const Tensor& pv = tape.value(pred);
    if (pv.rank() != 2 || pv.shape[0] < 2) {
        throw ShapeError("loss_dist: need a rank-2 batch of at least 2 rows");
    }
    const int64_t cols = pv.shape[1];
    const auto moments = [&tape, cols](VarId x) {
        VarId mu = tape.rows_mean(x);
        VarId centered = tape.sub_row(x, tape.reshape(mu, {cols}));
        VarId var = tape.rows_mean(tape.mul(centered, centered));
        VarId sigma = tape.sqrt_elem(var);
        return std::make_pair(mu, sigma);
    };
    const auto [mu_p, sig_p] = moments(pred);
    const auto [mu_t, sig_t] = moments(target);
    VarId dm = tape.sub(mu_p, mu_t);
    VarId ds = tape.sub(sig_p, sig_t);
    return tape.add(tape.mean_all(tape.mul(dm, dm)), tape.mean_all(tape.mul(ds, ds)));
}

VarId row_norm_mse_node(Tape& tape, VarId recon, VarId original) {
    const Tensor& ov = tape.value(original);
    if (ov.rank() != 2) throw ShapeError("row_norm_mse: need rank-2 batches");
    return tape.scale(tape.mse(recon, original), static_cast<float>(ov.shape[1]));
}

}  // namespace lbridge
