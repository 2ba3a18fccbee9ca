#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lbridge {

// Deterministic RNG built on std::mt19937 (whose output sequence is fixed by
// the standard). Distribution shaping is done here rather than with
// std::*_distribution, which is implementation-defined.
class Rng {
public:
    explicit Rng(uint32_t seed) : gen_(seed) {}

    uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        const uint64_t hi = gen_();
        const uint64_t lo = gen_();
        return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n) by rejection; n > 0.
    uint32_t below(uint32_t n) {
        const uint32_t limit = UINT32_MAX - UINT32_MAX % n;
        uint32_t x = gen_();
        while (x >= limit) {
            x = gen_();
        }
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = below(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 gen_;
};

// Stable seed derivation: one global seed fans out to independent component
// streams keyed by a label (FNV-1a over the label, mixed with the seed).
inline uint32_t derive_seed(uint32_t seed, std::string_view label) {
    uint32_t h = 2166136261u;
    for (const char c : label) {
        h ^= static_cast<uint8_t>(c);
        h *= 16777619u;
    }
    h ^= seed + 0x9e3779b9u + (h << 6) + (h >> 2);
    return h;
}

}  // namespace lbridge
