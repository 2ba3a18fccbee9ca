#include "lbridge/translator.hpp"

#include <cmath>

#include "lbridge/init.hpp"
#include "lbridge/rng.hpp"

namespace lbridge {

void TranslatorConfig::validate() const {
    if (d_src < 1 || d_tgt < 1 || d_hidden < 1) {
        throw ShapeError("translator: dimensions must be positive");
    }
    if (n_heads < 1 || d_hidden % n_heads != 0) {
        throw ShapeError("translator: n_heads " + std::to_string(n_heads) +
                         " must divide d_hidden " + std::to_string(d_hidden));
    }
    if (n_slots < 1) throw ShapeError("translator: n_slots must be at least 1");
}

std::vector<std::pair<std::string, std::vector<int64_t>>> translator_param_layout(
    const TranslatorConfig& config) {
    config.validate();
    const int64_t ds = config.d_src, dt = config.d_tgt, dh = config.d_hidden;
    std::vector<std::pair<std::string, std::vector<int64_t>>> layout;
    layout.emplace_back("extractor.w", std::vector<int64_t>{ds, dh});
    layout.emplace_back("extractor.b", std::vector<int64_t>{dh});
    for (int s = 0; s < config.n_slots; ++s) {
        const std::string tag = "slot." + std::to_string(s) + ".";
        layout.emplace_back(tag + "w", std::vector<int64_t>{dh, dh});
        layout.emplace_back(tag + "b", std::vector<int64_t>{dh});
    }
    layout.emplace_back("attn.wq", std::vector<int64_t>{dh, dh});
    layout.emplace_back("attn.wk", std::vector<int64_t>{dh, dh});
    layout.emplace_back("attn.wv", std::vector<int64_t>{dh, dh});
    layout.emplace_back("attn.wo", std::vector<int64_t>{dh, dh});
    layout.emplace_back("attn.bo", std::vector<int64_t>{dh});
    layout.emplace_back("generator.w", std::vector<int64_t>{dh, dt});
    layout.emplace_back("generator.b", std::vector<int64_t>{dt});
    return layout;
}

int64_t translator_param_count(const TranslatorConfig& config) {
    int64_t count = 0;
    for (const auto& [name, shape] : translator_param_layout(config)) {
        count += Tensor::numel_of(shape);
    }
    return count;
}

TranslatorParams init_translator(const TranslatorConfig& config) {
    config.validate();
    TranslatorParams p;
    p.config = config;
    Rng rng(derive_seed(config.seed, "translator.init"));
    for (const auto& [name, shape] : translator_param_layout(config)) {
        if (name.ends_with(".b") || name.ends_with(".bo")) {
            p.params[name] = Tensor(shape);  // biases start at zero
        } else {
            const int64_t fan_in = shape[0];
            const int64_t fan_out = shape.size() == 2 ? shape[1] : shape[0];
            p.params[name] = xavier_uniform(rng, fan_in, fan_out, shape);
        }
    }
    return p;
}

Tensor translate_batch(const TranslatorParams& params, const Tensor& x) {
    return translate_batch_t<float>(params.config, params.params, x);
}

Tensor translate(const TranslatorParams& params, const Tensor& v) {
    if (v.rank() != 1) {
        throw ShapeError("translate: expected a vector, got shape " +
                         Tensor::shape_str(v.shape));
    }
    Tensor row = v;
    row.shape = {1, v.numel()};
    Tensor out = translate_batch(params, row);
    out.shape = {out.shape[1]};
    return out;
}

Tensor cycle(const TranslatorParams& f, const TranslatorParams& g, const Tensor& v) {
    if (f.config.d_tgt != g.config.d_src || g.config.d_tgt != f.config.d_src ||
        v.numel() != f.config.d_src) {
        throw ShapeError("cycle: incompatible dimension chain " + std::to_string(v.numel()) +
                         " -> " + std::to_string(f.config.d_src) + "x" +
                         std::to_string(f.config.d_tgt) + " -> " +
                         std::to_string(g.config.d_src) + "x" + std::to_string(g.config.d_tgt));
    }
    return translate(g, translate(f, v));
}

TranslatorVars stage_translator(Tape& tape, const TranslatorParams& params, bool requires_grad) {
    TranslatorVars vars;
    for (const auto& [name, shape] : translator_param_layout(params.config)) {
        vars.leaves[name] = tape.leaf(params.params.at(name), requires_grad);
    }
    return vars;
}

VarId translate_on_tape(Tape& tape, const TranslatorConfig& config, const TranslatorVars& vars,
                        VarId x) {
    const auto& lv = vars.leaves;
    const int64_t n = tape.value(x).shape[0];
    const int64_t dh = config.d_hidden;
    const int64_t head_w = config.d_head();
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(head_w));

    VarId extracted = tape.add_row(tape.matmul(x, lv.at("extractor.w")), lv.at("extractor.b"));
    if (config.activation == Activation::kGelu) extracted = tape.gelu(extracted);

    std::vector<VarId> pooled;
    pooled.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        VarId e = tape.slice_rows(extracted, i, 1);
        std::vector<VarId> slot_rows;
        slot_rows.reserve(static_cast<size_t>(config.n_slots));
        for (int s = 0; s < config.n_slots; ++s) {
            const std::string tag = "slot." + std::to_string(s) + ".";
            slot_rows.push_back(tape.add_row(tape.matmul(e, lv.at(tag + "w")), lv.at(tag + "b")));
        }
        VarId z = tape.concat_rows(slot_rows);
        VarId zn = tape.layer_norm_rows(z, kTranslatorLnEps);
        VarId q = tape.matmul(zn, lv.at("attn.wq"));
        VarId kk = tape.matmul(zn, lv.at("attn.wk"));
        VarId v = tape.matmul(zn, lv.at("attn.wv"));
        std::vector<VarId> heads_out;
        heads_out.reserve(static_cast<size_t>(config.n_heads));
        for (int h = 0; h < config.n_heads; ++h) {
            const int64_t off = h * head_w;
            VarId qh = tape.slice_cols(q, off, head_w);
            VarId kh = tape.slice_cols(kk, off, head_w);
            VarId vh = tape.slice_cols(v, off, head_w);
            VarId probs = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh));
            heads_out.push_back(tape.matmul(probs, vh));
        }
        VarId attn = tape.add_row(tape.matmul(tape.concat_cols(heads_out), lv.at("attn.wo")),
                                  lv.at("attn.bo"));
        pooled.push_back(tape.rows_mean(tape.add(z, attn)));
    }
    VarId stacked = tape.concat_rows(pooled);
    return tape.add_row(tape.matmul(stacked, lv.at("generator.w")), lv.at("generator.b"));
}

}  // namespace lbridge
