#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lbridge/rng.hpp"
#include "lbridge/tensor.hpp"

namespace lbridge {

// Uniform Glorot initialization in +/- sqrt(6 / (fan_in + fan_out)), filled in
// row-major order so a given rng state fully determines the tensor.
inline Tensor xavier_uniform(Rng& rng, int64_t fan_in, int64_t fan_out,
                             std::vector<int64_t> shape) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (float& v : t.data) {
        v = static_cast<float>(rng.uniform(-bound, bound));
    }
    return t;
}

}  // namespace lbridge
