#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lbridge/tensor.hpp"

namespace lbridge {

// Named parameter set. std::map keeps iteration order stable, which keeps
// optimizer updates and checkpoint layouts deterministic.
using ParamMap = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, std::vector<float>>;

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.01f;
};

struct AdamWState {
    int64_t step = 0;
    std::map<std::string, std::vector<float>> m;
    std::map<std::string, std::vector<float>> v;
};

// One decoupled-weight-decay Adam step over every parameter in params.
// grads must supply a same-sized gradient for each parameter. Any non-finite
// gradient rejects the whole step before touching params or state; the error
// names the offending parameter.
void adamw_step(ParamMap& params, const GradMap& grads, AdamWState& state,
                const AdamWConfig& config);

}  // namespace lbridge
