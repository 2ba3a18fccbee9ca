#include "lbridge/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "lbridge/errors.hpp"
#include "lbridge/kernels.hpp"
#include "lbridge/rng.hpp"

namespace lbridge {

namespace {

Tensor tensor_row(const Tensor& m, int64_t r) {
    const int64_t d = m.dim(1);
    Tensor out({d});
    std::copy_n(m.data.begin() + r * d, d, out.data.begin());
    return out;
}

void check_rows(const Tensor& m, const std::vector<int>& rows, const char* what) {
    if (m.rank() != 2) {
        throw ShapeError(std::string(what) + ": expected a rank-2 row matrix, got rank " +
                         std::to_string(m.rank()));
    }
    for (int r : rows) {
        if (r < 0 || r >= m.dim(0)) {
            throw ShapeError(std::string(what) + ": row index " + std::to_string(r) +
                             " out of range for " + std::to_string(m.dim(0)) + " rows");
        }
    }
}

}  // namespace

double cosine(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.numel() != b.numel()) {
        throw ShapeError("cosine: expected two vectors of equal length, got " + a.shape_str() +
                         " and " + b.shape_str());
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double x = a.data[static_cast<size_t>(i)];
        const double y = b.data[static_cast<size_t>(i)];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) {
        throw NumericError("cosine: zero-norm vector");
    }
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

AlignmentReport report_from_cosines(std::vector<double> values, std::string direction) {
    const size_t n = values.size();
    if (n < 2) {
        throw ShapeError("alignment report: need at least 2 similarities, got " +
                         std::to_string(n));
    }
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(values[i]) || values[i] < -1.0 - 1e-9 || values[i] > 1.0 + 1e-9) {
            throw ShapeError("alignment report: similarity " + std::to_string(i) +
                             " is outside [-1, 1]");
        }
    }
    AlignmentReport rep;
    rep.direction = std::move(direction);
    rep.per_pair = std::move(values);

    double acc = 0.0;
    for (double v : rep.per_pair) acc += v;
    rep.mean = acc / static_cast<double>(n);

    double sq = 0.0;
    for (double v : rep.per_pair) {
        const double d = v - rep.mean;
        sq += d * d;
    }
    rep.std_population = std::sqrt(sq / static_cast<double>(n));
    rep.std_sample = std::sqrt(sq / static_cast<double>(n - 1));

    const double half = 1.96 * rep.std_population / std::sqrt(static_cast<double>(n));
    rep.ci_lo = rep.mean - half;
    rep.ci_hi = rep.mean + half;
    return rep;
}

AlignmentReport alignment_report(const TranslatorParams& translator, const Tensor& src,
                                 const Tensor& tgt, const std::vector<int>& rows,
                                 std::string direction) {
    check_rows(src, rows, "alignment report");
    check_rows(tgt, rows, "alignment report");
    if (src.dim(1) != translator.config.d_src || tgt.dim(1) != translator.config.d_tgt) {
        throw ShapeError("alignment report: row widths " + std::to_string(src.dim(1)) + "/" +
                         std::to_string(tgt.dim(1)) + " do not match translator " +
                         std::to_string(translator.config.d_src) + " -> " +
                         std::to_string(translator.config.d_tgt));
    }
    std::vector<double> sims;
    sims.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const Tensor got =
            translate(translator, tensor_row(src, rows[i]));
        try {
            sims.push_back(cosine(got, tensor_row(tgt, rows[i])));
        } catch (const NumericError& e) {
            throw NumericError("alignment report: pair " + std::to_string(i) + ": " + e.what());
        }
    }
    return report_from_cosines(std::move(sims), std::move(direction));
}

std::optional<double> asymmetry(const AlignmentReport& forward, const AlignmentReport& reverse) {
    if (!(reverse.mean > 0.0)) {
        return std::nullopt;
    }
    return forward.mean / reverse.mean;
}

double effect_size(const AlignmentReport& report, double baseline) {
    if (!(baseline > 0.0) || !std::isfinite(baseline)) {
        throw ShapeError("effect_size: baseline must be positive and finite, got " +
                         std::to_string(baseline));
    }
    return report.mean / baseline;
}

double random_baseline(const TranslatorParams& translator, const Tensor& src,
                       const Tensor& tgt, const std::vector<int>& rows, int n_shuffles,
                       uint32_t seed) {
    check_rows(src, rows, "random baseline");
    check_rows(tgt, rows, "random baseline");
    const int n = static_cast<int>(rows.size());
    if (n < 2) {
        throw ShapeError("random baseline: need at least 2 rows, got " + std::to_string(n));
    }
    if (n_shuffles < 1) {
        throw ShapeError("random baseline: n_shuffles must be at least 1, got " +
                         std::to_string(n_shuffles));
    }

    std::vector<Tensor> translated;
    translated.reserve(rows.size());
    for (int r : rows) {
        translated.push_back(translate(translator, tensor_row(src, r)));
    }

    Rng rng(seed);
    const uint32_t start = rng.below(static_cast<uint32_t>(n - 1));
    double acc = 0.0;
    for (int k = 0; k < n_shuffles; ++k) {
        const int rot = 1 + static_cast<int>((start + static_cast<uint32_t>(k)) %
                                             static_cast<uint32_t>(n - 1));
        for (int i = 0; i < n; ++i) {
            const int j = (i + rot) % n;
            acc += cosine(translated[static_cast<size_t>(i)], tensor_row(tgt, rows[j]));
        }
    }
    return acc / (static_cast<double>(n_shuffles) * static_cast<double>(n));
}

double symmetric_kl(const Tensor& logits_p, const Tensor& logits_q) {
    if (logits_p.rank() != 1 || logits_q.rank() != 1 ||
        logits_p.numel() != logits_q.numel()) {
        throw ShapeError("symmetric_kl: expected two logit vectors of equal length, got " +
                         logits_p.shape_str() + " and " + logits_q.shape_str());
    }
    const int64_t n = logits_p.numel();
    auto probs = [n](const Tensor& logits) {
        std::vector<double> p(static_cast<size_t>(n));
        double mx = -1e300;
        for (int64_t i = 0; i < n; ++i) {
            mx = std::max(mx, static_cast<double>(logits.data[static_cast<size_t>(i)]));
        }
        double sum = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            p[static_cast<size_t>(i)] =
                std::exp(static_cast<double>(logits.data[static_cast<size_t>(i)]) - mx);
            sum += p[static_cast<size_t>(i)];
        }
        const double smooth = 1e-9;
        const double denom = sum * (1.0 + smooth * static_cast<double>(n));
        for (double& v : p) v = (v + smooth * sum) / denom;
        return p;
    };
    const std::vector<double> p = probs(logits_p);
    const std::vector<double> q = probs(logits_q);
    double kl_pq = 0.0, kl_qp = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const size_t s = static_cast<size_t>(i);
        kl_pq += p[s] * std::log(p[s] / q[s]);
        kl_qp += q[s] * std::log(q[s] / p[s]);
    }
    return 0.5 * (kl_pq + kl_qp);
}

double shift_toward_reference(const ToyModel& model, const std::vector<int>& injected,
                              const std::vector<int>& baseline,
                              const std::vector<int>& reference) {
    const Tensor inj = extract_vector(model, injected);
    const Tensor base = extract_vector(model, baseline);
    const Tensor ref = extract_vector(model, reference);
    return cosine(inj, ref) - cosine(base, ref);
}

SteeringReport steering_metrics(const ToyModel& model_tgt, const std::vector<int>& part_prompt,
                                const std::vector<int>& full_prompt, const Tensor& translated,
                                const InjectionPolicy& policy, int gen_steps, uint32_t seed) {
    if (gen_steps < 1) {
        throw ShapeError("steering: gen_steps must be at least 1, got " +
                         std::to_string(gen_steps));
    }
    if (part_prompt.empty() || full_prompt.empty()) {
        throw ShapeError("steering: prompts must be non-empty");
    }

    // All three conditions decode greedily so they differ only through the
    // injected vector.
    const GenerateResult baseline = generate(model_tgt, part_prompt, gen_steps, 0.0f, seed);
    const GenerateResult injected =
        generate_with_policy(model_tgt, part_prompt, gen_steps, 0.0f, seed, policy, translated);
    const GenerateResult reference = generate(model_tgt, full_prompt, gen_steps, 0.0f, seed);

    SteeringReport rep;
    rep.kl_per_step.reserve(static_cast<size_t>(gen_steps));
    for (int s = 0; s < gen_steps; ++s) {
        rep.kl_per_step.push_back(symmetric_kl(baseline.step_logits[static_cast<size_t>(s)],
                                               injected.step_logits[static_cast<size_t>(s)]));
    }
    rep.shift_score =
        shift_toward_reference(model_tgt, injected.tokens, baseline.tokens, reference.tokens);
    return rep;
}

}  // namespace lbridge
