#pragma once

#include <vector>

#include "lbridge/tensor.hpp"
#include "lbridge/toy_model.hpp"

namespace lbridge {

// Conservative hidden-state injection: convex blend at a few late layers,
// final token positions, and early generation steps only.
struct InjectionPolicy {
    float alpha = 0.3f;
    std::vector<int> target_layers = {-3, -2, -1};  // offsets from the last layer
    int target_positions = 3;                       // final positions of the sequence
    int active_steps = 3;                           // initial generation steps
};

// Policy resolved against a concrete model depth. Layer indices are absolute,
// 0-based, deduplicated, ascending.
struct BoundPolicy {
    float alpha = 0.0f;
    std::vector<int> layers;
    int target_positions = 0;
    int active_steps = 0;
};

// Field-range validation plus resolution of the negative layer offsets; an
// offset outside [-n_layers, -1] is rejected here, before any generation runs.
BoundPolicy bind_policy(const InjectionPolicy& policy, int n_layers);

// h' = (1 - alpha) * h + alpha * v, elementwise.
Tensor blend(const Tensor& h, const Tensor& v, float alpha);

// Blend v into the final target_positions rows of states, when layer is
// targeted and step is within the active window. alpha == 0 leaves states
// bit-identical (the blend is skipped entirely).
void apply_policy(Tensor& states, int layer, const BoundPolicy& policy, const Tensor& v,
                  int step);

GenHook make_injection_hook(const BoundPolicy& policy, Tensor v);

// generate() with the policy attached; rejects a vector of the wrong width
// before any decoding.
GenerateResult generate_with_policy(const ToyModel& model, const std::vector<int>& prompt,
                                    int steps, float temperature, uint32_t seed,
                                    const InjectionPolicy& policy, const Tensor& v);

}  // namespace lbridge
