#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lbridge/adamw.hpp"
#include "lbridge/tape.hpp"
#include "lbridge/tensor.hpp"

namespace lbridge {

struct ToyModelConfig {
    int vocab_size = 128;
    int d_model = 64;
    int n_layers = 4;  // at least 3: generation hooks target the last three layers
    int n_heads = 4;
    int context_len = 64;
    uint32_t seed = 0;

    void validate() const;
    int d_head() const { return d_model / n_heads; }
    int d_ff() const { return 4 * d_model; }
};

// Decoder-only character LM. Blocks are post-norm: x = LN(x + Attn(x)),
// x = LN(x + MLP(x)); layer norms carry no affine parameters.
struct ToyModel {
    ToyModelConfig config;
    ParamMap params;
};

ToyModel init_model(const ToyModelConfig& config);

// Canonical parameter names and shapes for a config, in initialization order.
std::vector<std::pair<std::string, std::vector<int64_t>>> model_param_layout(
    const ToyModelConfig& config);

// Called after each transformer block with the block's output states
// [seq_len, d_model]; the hook may overwrite them in place.
using LayerHook = std::function<void(int layer, Tensor& states)>;

struct ForwardResult {
    std::vector<Tensor> layer_states;  // per block, [seq_len, d_model], post-hook
    Tensor logits;                     // [seq_len, vocab_size]
};

ForwardResult forward_states(const ToyModel& model, const std::vector<int>& tokens,
                             const LayerHook& hook = {});

// Final layer's hidden state at the last token position.
Tensor extract_vector(const ToyModel& model, const std::vector<int>& prompt);

// Same forward math as forward_states, recorded on a tape, ending in the mean
// next-token cross entropy. Parameter leaf ids are returned through leaves.
VarId lm_loss_on_tape(Tape& tape, const ToyModel& model, const std::vector<int>& inputs,
                      const std::vector<int>& targets, std::map<std::string, VarId>& leaves);

// Hook for generation-time interception: (generation step, layer, states).
using GenHook = std::function<void(int step, int layer, Tensor& states)>;

struct GenerateResult {
    std::vector<int> tokens;          // generated continuation, length == steps
    std::vector<Tensor> step_logits;  // pre-sampling next-token logits per step [vocab_size]
};

// Autoregressive decoding. temperature 0 takes the argmax (lowest index on
// ties); temperature > 0 samples from softmax(logits / temperature) using the
// seed. Sequences beyond context_len are handled with a sliding window.
GenerateResult generate(const ToyModel& model, const std::vector<int>& prompt, int steps,
                        float temperature, uint32_t seed, const GenHook& hook = {});

// Character tokenizer over the leading vocab_size byte values.
std::vector<int> tokenize(const std::string& text, int vocab_size);
std::string detokenize(const std::vector<int>& tokens);

struct LmTrainResult {
    ToyModel model;
    std::vector<double> loss;  // per-epoch mean cross entropy, token-weighted
};

// Next-token training over fixed-stride windows of the corpus with AdamW.
LmTrainResult train_lm(const std::vector<int>& corpus, const ToyModelConfig& config,
                       int epochs, float lr = 3e-4f);

}  // namespace lbridge
