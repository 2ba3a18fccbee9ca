#include "lbridge/toy_model.hpp"

#include <algorithm>
#include <cmath>

#include "lbridge/errors.hpp"
#include "lbridge/init.hpp"
#include "lbridge/kernels.hpp"
#include "lbridge/rng.hpp"

namespace lbridge {

namespace {

namespace k = kernels;

constexpr float kLnEps = 1e-5f;

std::string layer_key(int layer, const char* suffix) {
    return "layers." + std::to_string(layer) + "." + suffix;
}

Tensor take_cols(const Tensor& x, int64_t start, int64_t count) {
    Tensor out({x.shape[0], count});
    for (int64_t i = 0; i < x.shape[0]; ++i) {
        std::copy_n(x.data.data() + i * x.shape[1] + start, count, out.data.data() + i * count);
    }
    return out;
}

void put_cols(Tensor& dst, int64_t start, const Tensor& src) {
    for (int64_t i = 0; i < src.shape[0]; ++i) {
        std::copy_n(src.data.data() + i * src.shape[1], src.shape[1],
                    dst.data.data() + i * dst.shape[1] + start);
    }
}

// Causal multi-head self-attention over x [L, d_model], plain float path.
Tensor attention(const ToyModel& m, int layer, const Tensor& x) {
    const ParamMap& p = m.params;
    const int heads = m.config.n_heads;
    const int64_t dh = m.config.d_head();
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
    Tensor q = k::matmul(x, p.at(layer_key(layer, "attn.wq")));
    Tensor kk = k::matmul(x, p.at(layer_key(layer, "attn.wk")));
    Tensor v = k::matmul(x, p.at(layer_key(layer, "attn.wv")));
    Tensor merged({x.shape[0], static_cast<int64_t>(m.config.d_model)});
    for (int h = 0; h < heads; ++h) {
        const int64_t off = h * dh;
        Tensor qh = take_cols(q, off, dh);
        Tensor kh = take_cols(kk, off, dh);
        Tensor vh = take_cols(v, off, dh);
        Tensor scores = k::scale(k::matmul_nt(qh, kh), inv_sqrt_dh);
        Tensor probs = k::masked_softmax_rows(scores);
        Tensor oh = k::matmul(probs, vh);
        put_cols(merged, off, oh);
    }
    return k::matmul(merged, p.at(layer_key(layer, "attn.wo")));
}

void check_tokens(const ToyModel& m, const std::vector<int>& tokens, const char* who) {
    if (tokens.empty()) {
        throw ShapeError(std::string(who) + ": empty token sequence");
    }
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= m.config.vocab_size) {
            throw DataError(std::string(who) + ": token id " + std::to_string(tokens[i]) +
                            " at position " + std::to_string(i) + " outside vocabulary of " +
                            std::to_string(m.config.vocab_size));
        }
    }
}

int sample_token(Rng& rng, const Tensor& logits, float temperature) {
    const int64_t n = logits.numel();
    if (temperature == 0.0f) {
        int64_t best = 0;
        for (int64_t i = 1; i < n; ++i) {
            if (logits.at(i) > logits.at(best)) best = i;
        }
        return static_cast<int>(best);
    }
    std::vector<double> p(static_cast<size_t>(n));
    double mx = -1e300;
    for (int64_t i = 0; i < n; ++i) {
        p[static_cast<size_t>(i)] = static_cast<double>(logits.at(i)) / temperature;
        mx = std::max(mx, p[static_cast<size_t>(i)]);
    }
    double sum = 0.0;
    for (double& x : p) {
        x = std::exp(x - mx);
        sum += x;
    }
    const double u = rng.uniform01() * sum;
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        acc += p[static_cast<size_t>(i)];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(n - 1);
}

}  // namespace

void ToyModelConfig::validate() const {
    if (vocab_size < 2) throw ShapeError("toy model: vocab_size must be at least 2");
    if (d_model < 1) throw ShapeError("toy model: d_model must be positive");
    if (n_layers < 3) {
        throw ShapeError("toy model: n_layers must be at least 3, got " +
                         std::to_string(n_layers));
    }
    if (n_heads < 1 || d_model % n_heads != 0) {
        throw ShapeError("toy model: n_heads " + std::to_string(n_heads) +
                         " must divide d_model " + std::to_string(d_model));
    }
    if (context_len < 2) throw ShapeError("toy model: context_len must be at least 2");
}

ToyModel init_model(const ToyModelConfig& config) {
    config.validate();
    ToyModel m;
    m.config = config;
    Rng rng(derive_seed(config.seed, "toy_model.init"));
    const int64_t v = config.vocab_size, d = config.d_model, ff = config.d_ff();
    m.params["tok_emb"] = xavier_uniform(rng, v, d, {v, d});
    m.params["pos_emb"] = xavier_uniform(rng, config.context_len, d, {config.context_len, d});
    for (int l = 0; l < config.n_layers; ++l) {
        m.params[layer_key(l, "attn.wq")] = xavier_uniform(rng, d, d, {d, d});
        m.params[layer_key(l, "attn.wk")] = xavier_uniform(rng, d, d, {d, d});
        m.params[layer_key(l, "attn.wv")] = xavier_uniform(rng, d, d, {d, d});
        m.params[layer_key(l, "attn.wo")] = xavier_uniform(rng, d, d, {d, d});
        m.params[layer_key(l, "mlp.w1")] = xavier_uniform(rng, d, ff, {d, ff});
        m.params[layer_key(l, "mlp.b1")] = Tensor({ff});
        m.params[layer_key(l, "mlp.w2")] = xavier_uniform(rng, ff, d, {ff, d});
        m.params[layer_key(l, "mlp.b2")] = Tensor({d});
    }
    m.params["head.w"] = xavier_uniform(rng, d, v, {d, v});
    return m;
}

std::vector<std::pair<std::string, std::vector<int64_t>>> model_param_layout(
    const ToyModelConfig& config) {
    config.validate();
    const int64_t v = config.vocab_size, d = config.d_model, ff = config.d_ff();
    std::vector<std::pair<std::string, std::vector<int64_t>>> layout;
    layout.emplace_back("tok_emb", std::vector<int64_t>{v, d});
    layout.emplace_back("pos_emb", std::vector<int64_t>{config.context_len, d});
    for (int l = 0; l < config.n_layers; ++l) {
        layout.emplace_back(layer_key(l, "attn.wq"), std::vector<int64_t>{d, d});
        layout.emplace_back(layer_key(l, "attn.wk"), std::vector<int64_t>{d, d});
        layout.emplace_back(layer_key(l, "attn.wv"), std::vector<int64_t>{d, d});
        layout.emplace_back(layer_key(l, "attn.wo"), std::vector<int64_t>{d, d});
        layout.emplace_back(layer_key(l, "mlp.w1"), std::vector<int64_t>{d, ff});
        layout.emplace_back(layer_key(l, "mlp.b1"), std::vector<int64_t>{ff});
        layout.emplace_back(layer_key(l, "mlp.w2"), std::vector<int64_t>{ff, d});
        layout.emplace_back(layer_key(l, "mlp.b2"), std::vector<int64_t>{d});
    }
    layout.emplace_back("head.w", std::vector<int64_t>{d, v});
    return layout;
}

ForwardResult forward_states(const ToyModel& model, const std::vector<int>& tokens,
                             const LayerHook& hook) {
    check_tokens(model, tokens, "forward");
    const int64_t len = static_cast<int64_t>(tokens.size());
    if (len > model.config.context_len) {
        throw ShapeError("forward: sequence of " + std::to_string(len) +
                         " tokens exceeds context_len " +
                         std::to_string(model.config.context_len));
    }
    const ParamMap& p = model.params;
    const Tensor& pos = p.at("pos_emb");
    Tensor pos_slice({len, pos.shape[1]});
    std::copy_n(pos.data.data(), len * pos.shape[1], pos_slice.data.data());
    Tensor x = k::add(k::gather_rows(p.at("tok_emb"), tokens), pos_slice);

    ForwardResult out;
    out.layer_states.reserve(static_cast<size_t>(model.config.n_layers));
    for (int l = 0; l < model.config.n_layers; ++l) {
        x = k::layer_norm_rows(k::add(x, attention(model, l, x)), kLnEps);
        Tensor h1 = k::add_row(k::matmul(x, p.at(layer_key(l, "mlp.w1"))),
                               p.at(layer_key(l, "mlp.b1")));
        Tensor h2 = k::add_row(k::matmul(k::gelu(h1), p.at(layer_key(l, "mlp.w2"))),
                               p.at(layer_key(l, "mlp.b2")));
        x = k::layer_norm_rows(k::add(x, h2), kLnEps);
        if (hook) hook(l, x);
        out.layer_states.push_back(x);
    }
    out.logits = k::matmul(x, p.at("head.w"));
    return out;
}

Tensor extract_vector(const ToyModel& model, const std::vector<int>& prompt) {
    ForwardResult fr = forward_states(model, prompt);
    const Tensor& last = fr.layer_states.back();
    const int64_t d = last.shape[1];
    Tensor v({d});
    std::copy_n(last.data.data() + (last.shape[0] - 1) * d, d, v.data.data());
    return v;
}

VarId lm_loss_on_tape(Tape& tape, const ToyModel& model, const std::vector<int>& inputs,
                      const std::vector<int>& targets, std::map<std::string, VarId>& leaves) {
    check_tokens(model, inputs, "lm_loss");
    if (inputs.size() != targets.size()) {
        throw ShapeError("lm_loss: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(inputs.size()) + " inputs");
    }
    const int64_t len = static_cast<int64_t>(inputs.size());
    if (len > model.config.context_len) {
        throw ShapeError("lm_loss: sequence exceeds context_len");
    }
    for (const auto& [name, t] : model.params) {
        leaves[name] = tape.leaf(t, true);
    }
    const int heads = model.config.n_heads;
    const int64_t dh = model.config.d_head();
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    VarId x = tape.add(tape.gather_rows(leaves.at("tok_emb"), inputs),
                       tape.slice_rows(leaves.at("pos_emb"), 0, len));
    for (int l = 0; l < model.config.n_layers; ++l) {
        VarId q = tape.matmul(x, leaves.at(layer_key(l, "attn.wq")));
        VarId kk = tape.matmul(x, leaves.at(layer_key(l, "attn.wk")));
        VarId v = tape.matmul(x, leaves.at(layer_key(l, "attn.wv")));
        std::vector<VarId> heads_out;
        heads_out.reserve(static_cast<size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            const int64_t off = h * dh;
            VarId qh = tape.slice_cols(q, off, dh);
            VarId kh = tape.slice_cols(kk, off, dh);
            VarId vh = tape.slice_cols(v, off, dh);
            VarId probs = tape.masked_softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dh));
            heads_out.push_back(tape.matmul(probs, vh));
        }
        VarId attn = tape.matmul(tape.concat_cols(heads_out),
                                 leaves.at(layer_key(l, "attn.wo")));
        x = tape.layer_norm_rows(tape.add(x, attn), kLnEps);
        VarId h1 = tape.add_row(tape.matmul(x, leaves.at(layer_key(l, "mlp.w1"))),
                                leaves.at(layer_key(l, "mlp.b1")));
        VarId h2 = tape.add_row(tape.matmul(tape.gelu(h1), leaves.at(layer_key(l, "mlp.w2"))),
                                leaves.at(layer_key(l, "mlp.b2")));
        x = tape.layer_norm_rows(tape.add(x, h2), kLnEps);
    }
    VarId logits = tape.matmul(x, leaves.at("head.w"));
    return tape.cross_entropy(logits, targets);
}

GenerateResult generate(const ToyModel& model, const std::vector<int>& prompt, int steps,
                        float temperature, uint32_t seed, const GenHook& hook) {
    check_tokens(model, prompt, "generate");
    if (steps < 0) throw ShapeError("generate: negative step count");
    if (temperature < 0.0f) throw ShapeError("generate: negative temperature");

    GenerateResult out;
    out.tokens.reserve(static_cast<size_t>(steps));
    out.step_logits.reserve(static_cast<size_t>(steps));
    std::vector<int> seq = prompt;
    Rng rng(seed);
    for (int step = 0; step < steps; ++step) {
        const size_t win = std::min(seq.size(), static_cast<size_t>(model.config.context_len));
        std::vector<int> window(seq.end() - static_cast<ptrdiff_t>(win), seq.end());
        LayerHook layer_hook;
        if (hook) {
            layer_hook = [&hook, step](int layer, Tensor& states) { hook(step, layer, states); };
        }
        ForwardResult fr = forward_states(model, window, layer_hook);
        const int64_t vocab = fr.logits.shape[1];
        Tensor logits({vocab});
        std::copy_n(fr.logits.data.data() + (fr.logits.shape[0] - 1) * vocab, vocab,
                    logits.data.data());
        if (!logits.finite()) {
            throw NumericError("generate: non-finite logits at step " + std::to_string(step));
        }
        const int next = sample_token(rng, logits, temperature);
        out.step_logits.push_back(std::move(logits));
        out.tokens.push_back(next);
        seq.push_back(next);
    }
    return out;
}

std::vector<int> tokenize(const std::string& text, int vocab_size) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (size_t i = 0; i < text.size(); ++i) {
        const int id = static_cast<unsigned char>(text[i]);
        if (id >= vocab_size) {
            throw DataError("tokenize: byte value " + std::to_string(id) + " at offset " +
                            std::to_string(i) + " exceeds vocabulary of " +
                            std::to_string(vocab_size) + " symbols");
        }
        ids.push_back(id);
    }
    return ids;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string s;
    s.reserve(tokens.size());
    for (const int t : tokens) s.push_back(static_cast<char>(t));
    return s;
}

LmTrainResult train_lm(const std::vector<int>& corpus, const ToyModelConfig& config, int epochs,
                       float lr) {
    config.validate();
    if (static_cast<int64_t>(corpus.size()) <= config.context_len) {
        throw ShapeError("train_lm: corpus of " + std::to_string(corpus.size()) +
                         " tokens does not exceed context_len " +
                         std::to_string(config.context_len));
    }
    if (epochs < 1) throw ShapeError("train_lm: epochs must be at least 1");
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i] < 0 || corpus[i] >= config.vocab_size) {
            throw DataError("train_lm: token id " + std::to_string(corpus[i]) + " at offset " +
                            std::to_string(i) + " outside vocabulary of " +
                            std::to_string(config.vocab_size));
        }
    }

    // Fixed-stride windows of context_len inputs + 1 lookahead; a short tail
    // window is kept when it still contains a prediction target.
    struct Window {
        std::vector<int> inputs, targets;
    };
    std::vector<Window> windows;
    const size_t stride = static_cast<size_t>(config.context_len);
    for (size_t start = 0; start + 1 < corpus.size(); start += stride) {
        const size_t end = std::min(corpus.size(), start + stride + 1);
        if (end - start < 2) break;
        Window w;
        w.inputs.assign(corpus.begin() + static_cast<ptrdiff_t>(start),
                        corpus.begin() + static_cast<ptrdiff_t>(end - 1));
        w.targets.assign(corpus.begin() + static_cast<ptrdiff_t>(start + 1),
                         corpus.begin() + static_cast<ptrdiff_t>(end));
        windows.push_back(std::move(w));
    }

    LmTrainResult result;
    result.model = init_model(config);
    AdamWConfig opt;
    opt.lr = lr;
    AdamWState state;
    Rng shuffle_rng(derive_seed(config.seed, "lm.shuffle"));
    std::vector<size_t> order(windows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double ce_sum = 0.0;
        int64_t token_count = 0;
        for (const size_t wi : order) {
            const Window& w = windows[wi];
            Tape tape;
            std::map<std::string, VarId> leaves;
            const VarId loss = lm_loss_on_tape(tape, result.model, w.inputs, w.targets, leaves);
            tape.backward(loss);
            GradMap grads;
            for (const auto& [name, id] : leaves) grads[name] = tape.grad(id);
            adamw_step(result.model.params, grads, state, opt);
            ce_sum += static_cast<double>(tape.value(loss).data[0]) *
                      static_cast<double>(w.targets.size());
            token_count += static_cast<int64_t>(w.targets.size());
        }
        result.loss.push_back(ce_sum / static_cast<double>(token_count));
    }
    return result;
}

}  // namespace lbridge
