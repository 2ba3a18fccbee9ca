#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbridge/injection.hpp"
#include "lbridge/tensor.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/translator.hpp"

namespace lbridge {

// Clamped to [-1, 1]; a zero-norm operand is an error, not a zero score.
double cosine(const Tensor& a, const Tensor& b);

struct AlignmentReport {
    std::string direction;
    std::vector<double> per_pair;
    double mean = 0.0;
    double std_population = 0.0;
    double std_sample = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

// Summary statistics over a list of per-pair similarities; the 95% interval is
// mean +/- 1.96 * std_population / sqrt(n).
AlignmentReport report_from_cosines(std::vector<double> values, std::string direction);

AlignmentReport alignment_report(const TranslatorParams& translator, const Tensor& src,
                                 const Tensor& tgt, const std::vector<int>& rows,
                                 std::string direction);

// forward.mean / reverse.mean; empty when the reverse mean is not positive.
std::optional<double> asymmetry(const AlignmentReport& forward, const AlignmentReport& reverse);

double effect_size(const AlignmentReport& report, double baseline);

// Mean cosine of translated rows against deliberately mispaired targets. Each
// shuffle k pairs row i with row (i + r_k) mod n for a rotation r_k in
// [1, n-1], so no row is ever scored against its own partner; n_shuffles equal
// to a multiple of n-1 covers every rotation equally.
double random_baseline(const TranslatorParams& translator, const Tensor& src,
                       const Tensor& tgt, const std::vector<int>& rows, int n_shuffles,
                       uint32_t seed);

struct SteeringReport {
    std::vector<double> kl_per_step;
    double shift_score = 0.0;
};

// Greedy generations under three conditions: the truncated prompt alone, the
// truncated prompt with the translated vector injected, and the full prompt.
// kl_per_step compares baseline and injected next-token distributions;
// shift_score measures movement of the injected continuation toward the
// reference continuation in the target model's own state space.
SteeringReport steering_metrics(const ToyModel& model_tgt, const std::vector<int>& part_prompt,
                                const std::vector<int>& full_prompt, const Tensor& translated,
                                const InjectionPolicy& policy, int gen_steps, uint32_t seed);

// 0.5 * (KL(p||q) + KL(q||p)) between softmax distributions of two logit rows,
// with 1e-9 smoothing before the logs.
double symmetric_kl(const Tensor& logits_p, const Tensor& logits_q);

// cos(state(injected), state(reference)) - cos(state(baseline), state(reference))
// over continuation tokens only; antisymmetric under swapping injected and
// baseline.
double shift_toward_reference(const ToyModel& model, const std::vector<int>& injected,
                              const std::vector<int>& baseline,
                              const std::vector<int>& reference);

}  // namespace lbridge
