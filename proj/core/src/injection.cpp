#include "lbridge/injection.hpp"

#include <algorithm>

#include "lbridge/errors.hpp"

namespace lbridge {

BoundPolicy bind_policy(const InjectionPolicy& policy, int n_layers) {
    if (!(policy.alpha >= 0.0f && policy.alpha <= 1.0f)) {
        throw ShapeError("injection: alpha must lie in [0, 1], got " +
                         std::to_string(policy.alpha));
    }
    if (policy.target_layers.empty()) {
        throw ShapeError("injection: target_layers is empty");
    }
    if (policy.target_positions < 1) {
        throw ShapeError("injection: target_positions must be at least 1");
    }
    if (policy.active_steps < 1) {
        throw ShapeError("injection: active_steps must be at least 1");
    }
    BoundPolicy bound;
    bound.alpha = policy.alpha;
    bound.target_positions = policy.target_positions;
    bound.active_steps = policy.active_steps;
    for (const int off : policy.target_layers) {
        if (off >= 0 || off < -n_layers) {
            throw ShapeError("injection: layer offset " + std::to_string(off) +
                             " outside [-" + std::to_string(n_layers) + ", -1] for a " +
                             std::to_string(n_layers) + "-layer model");
        }
        bound.layers.push_back(n_layers + off);
    }
    std::sort(bound.layers.begin(), bound.layers.end());
    bound.layers.erase(std::unique(bound.layers.begin(), bound.layers.end()),
                       bound.layers.end());
    return bound;
}

Tensor blend(const Tensor& h, const Tensor& v, float alpha) {
    if (h.shape != v.shape) {
        throw ShapeError("blend: shape mismatch " + Tensor::shape_str(h.shape) + " vs " +
                         Tensor::shape_str(v.shape));
    }
    if (!(alpha >= 0.0f && alpha <= 1.0f)) {
        throw ShapeError("blend: alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    Tensor out = h;
    const float keep = 1.0f - alpha;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = keep * h.data[i] + alpha * v.data[i];
    }
    return out;
}

void apply_policy(Tensor& states, int layer, const BoundPolicy& policy, const Tensor& v,
                  int step) {
    if (step >= policy.active_steps) return;
    if (!std::binary_search(policy.layers.begin(), policy.layers.end(), layer)) return;
    // alpha == 0 must leave the run bit-identical to an un-hooked one, so the
    // arithmetic is skipped rather than trusted to round-trip every value.
    if (policy.alpha == 0.0f) return;
    if (states.rank() != 2 || v.numel() != states.shape[1]) {
        throw ShapeError("apply_policy: vector of " + std::to_string(v.numel()) +
                         " values against states " + Tensor::shape_str(states.shape));
    }
    const int64_t rows = states.shape[0], cols = states.shape[1];
    const int64_t first = std::max<int64_t>(0, rows - policy.target_positions);
    const float keep = 1.0f - policy.alpha;
    for (int64_t i = first; i < rows; ++i) {
        float* row = states.data.data() + i * cols;
        for (int64_t j = 0; j < cols; ++j) {
            row[j] = keep * row[j] + policy.alpha * v.data[static_cast<size_t>(j)];
        }
    }
}

GenHook make_injection_hook(const BoundPolicy& policy, Tensor v) {
    return [policy, v = std::move(v)](int step, int layer, Tensor& states) {
        apply_policy(states, layer, policy, v, step);
    };
}

GenerateResult generate_with_policy(const ToyModel& model, const std::vector<int>& prompt,
                                    int steps, float temperature, uint32_t seed,
                                    const InjectionPolicy& policy, const Tensor& v) {
    if (v.numel() != model.config.d_model) {
        throw ShapeError("generate_with_policy: vector of " + std::to_string(v.numel()) +
                         " values for d_model " + std::to_string(model.config.d_model));
    }
    const BoundPolicy bound = bind_policy(policy, model.config.n_layers);
    return generate(model, prompt, steps, temperature, seed, make_injection_hook(bound, v));
}

}  // namespace lbridge
