// Acceptance gate: one pass/fail line per criterion, pinned tolerances.
// Runs the stock experiment end to end, so expect several minutes of work.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lbridge/checkpoint.hpp"
#include "lbridge/evaluation.hpp"
#include "lbridge/experiment.hpp"
#include "lbridge/grad_check.hpp"
#include "lbridge/injection.hpp"
#include "lbridge/losses.hpp"
#include "lbridge/rng.hpp"
#include "lbridge/tensor.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/trainer.hpp"
#include "lbridge/translator.hpp"
#include "lbridge/vector_store.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace lbridge;
using testutil::bitwise_equal;
using testutil::identity_translator;
using testutil::l2;
using testutil::make_tensor;

namespace {

struct Check {
    std::vector<std::string> failures;

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor matrix_row(const Tensor& m, int64_t r) {
    const int64_t d = m.dim(1);
    Tensor out({d});
    std::copy_n(m.data.begin() + r * d, d, out.data.begin());
    return out;
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (float& x : t.data) x = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<unreadable:" + path + ">";
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Artifacts of the stock experiment, produced by criterion 4 and reused by 5.
struct StockArtifacts {
    bool ready = false;
    ExperimentConfig cfg;
    ToyModel model_a;
    ToyModel model_b;
    std::vector<PromptEntry> prompts;
    PairDataset dataset;
    BidirectionalResult bridge;
};

StockArtifacts stock;

// --- criterion 1 ---------------------------------------------------------
// Reference statistics arithmetic on pinned similarity values.

void criterion_reference_statistics(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();

    const std::vector<double> values = {0.629, 0.594, 0.393, 0.535, 0.539};
    const AlignmentReport rep = report_from_cosines(values, "forward");
    c.require(std::fabs(rep.mean - 0.538) <= 0.001, "mean of pinned cosines is not 0.538");
    c.require(std::fabs(rep.std_population - 0.081) <= 0.001,
              "population std of pinned cosines is not 0.081");

    const auto flat = [](double v) { return report_from_cosines({v, v}, "forward"); };
    const std::optional<double> a1 = asymmetry(flat(0.683), flat(0.339));
    const std::optional<double> a2 = asymmetry(flat(0.758), flat(0.375));
    c.require(a1.has_value() && std::fabs(*a1 - 2.01) <= 0.01, "asymmetry(0.683, 0.339) is not 2.01");
    c.require(a2.has_value() && std::fabs(*a2 - 2.02) <= 0.01, "asymmetry(0.758, 0.375) is not 2.02");

    const std::vector<std::string> expected = {"6.29", "5.94", "3.93", "5.35", "5.39"};
    for (size_t i = 0; i < values.size(); ++i) {
        const double e = effect_size(flat(values[i]), 0.1);
        c.require(e == values[i] / 0.1 && two_decimals(e) == expected[i],
                  "per-value effect at baseline 0.1 is not " + expected[i]);
    }
    c.require(two_decimals(effect_size(rep, 0.1)) == "5.38",
              "mean effect at baseline 0.1 is not 5.38");

    c.require(seconds_since(t0) < 1.0, "statistics took 1s or longer");
}

// --- criterion 2 ---------------------------------------------------------
// Every registered differentiable computation against central finite
// differences at 10 random points each.

void criterion_gradient_checks(Check& c) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> losses = {"loss_trans", "loss_cycle", "loss_contrast",
                                             "loss_dist"};
    for (const std::string& name : losses) {
        bool found = false;
        for (const GradCheckCase& g : standard_grad_checks()) found |= g.name == name;
        c.require(found, "no gradient case registered for " + name);
    }

    for (const GradCheckCase& g : standard_grad_checks()) {
        Rng rng(derive_seed(42, g.name));
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            const Tensor point = g.sample_point(rng);
            worst = std::max(worst, grad_check(g, point, 1e-4));
        }
        c.require(worst < 1e-3,
                  g.name + ": max relative gradient error " + std::to_string(worst));
    }
    c.require(seconds_since(t0) < 30.0, "gradient suite took 30s or longer");
}

// --- criterion 3 ---------------------------------------------------------
// Pinned loss values: the two-vector orthonormal contrastive value, the
// composite of unit components under the default weights, and zero losses on
// exact matches.

void criterion_pinned_losses(Check& c) {
    const Tensor eye2 = make_tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    const double pinned = std::log(1.0 + std::exp(-1.0));
    c.require(std::fabs(static_cast<double>(loss_contrast(eye2, eye2, 1.0f)) - pinned) <= 1e-6,
              "orthonormal two-vector contrastive loss is not ln(1 + e^-1)");

    c.require(composite(1.0f, 1.0f, 1.0f, 1.0f, LossWeights{}) == 2.0f,
              "composite of unit components under default weights is not exactly 2");

    Rng rng(7);
    const Tensor x = random_tensor({5, 4}, rng, -2.0, 2.0);
    const Tensor y = random_tensor({5, 4}, rng, -2.0, 2.0);
    c.require(loss_trans(x, x) == 0.0f, "translation loss on an exact match is not zero");
    c.require(loss_dist(x, x) == 0.0f, "moment-matching loss on an exact match is not zero");
    const TranslatorParams id4 = identity_translator(4);
    c.require(loss_cycle(id4, id4, x, y) == 0.0f,
              "cycle loss through exact reconstructions is not zero");
}

// --- criterion 4 ---------------------------------------------------------
// The stock experiment: train both models and the bidirectional translators,
// then require the held-out forward alignment to clear the empirical random
// baseline by 3x and its own starting point by 0.2, within the time budget.

void criterion_stock_bridge(Check& c) {
    stock.cfg = load_experiment_config(std::string(LBRIDGE_SOURCE_DIR) + "/configs/stock.json");
    const ExperimentConfig& cfg = stock.cfg;

    const std::vector<int> corpus_a =
        load_corpus_tokens(cfg.model_a.corpus_path, cfg.model_a.model.vocab_size);
    const std::vector<int> corpus_b =
        load_corpus_tokens(cfg.model_b.corpus_path, cfg.model_b.model.vocab_size);
    stock.model_a = train_lm(corpus_a, cfg.model_a.model, cfg.model_a.epochs, cfg.model_a.lr).model;
    stock.model_b = train_lm(corpus_b, cfg.model_b.model, cfg.model_b.epochs, cfg.model_b.lr).model;

    stock.prompts = load_prompts(cfg.prompts_path);
    std::vector<std::string> fulls;
    for (const PromptEntry& p : stock.prompts) fulls.push_back(p.full);
    stock.dataset =
        build_pair_dataset(stock.model_a, stock.model_b, fulls, cfg.split_fraction, cfg.seed);

    const auto t0 = std::chrono::steady_clock::now();
    stock.bridge = train_bidirectional(stock.dataset, cfg.translator, cfg.train);
    const double train_seconds = seconds_since(t0);
    stock.ready = true;

    const AlignmentReport rep = alignment_report(stock.bridge.forward, stock.dataset.src,
                                                 stock.dataset.tgt, stock.dataset.heldout_idx,
                                                 "forward");
    const double baseline =
        random_baseline(stock.bridge.forward, stock.dataset.src, stock.dataset.tgt,
                        stock.dataset.heldout_idx, cfg.n_shuffles,
                        derive_seed(cfg.seed, "baseline.forward"));
    const double initial = stock.bridge.forward_history.initial_heldout_cosine;

    c.require(baseline > 0.0, "empirical random baseline is not positive");
    c.require(rep.mean >= 3.0 * baseline,
              "held-out forward mean " + std::to_string(rep.mean) + " is below 3x baseline " +
                  std::to_string(baseline));
    c.require(rep.mean - initial >= 0.2,
              "held-out forward mean " + std::to_string(rep.mean) +
                  " is not 0.2 above its starting point " + std::to_string(initial));
    c.require(train_seconds < 600.0,
              "translator training took " + std::to_string(train_seconds) + "s");
}

// --- criterion 5 ---------------------------------------------------------
// Injection safety: a zero-strength policy is a bitwise no-op across seeds,
// the stock policy produces strictly positive mean per-step divergence on the
// trained bridge, and injected logits stay finite across 100 runs.

void criterion_injection_safety(Check& c) {
    c.require(stock.ready, "stock artifacts unavailable (criterion 4 did not complete)");
    if (!stock.ready) return;
    const ExperimentConfig& cfg = stock.cfg;
    const ToyModel& target = stock.model_b;
    const int vocab = target.config.vocab_size;

    const int first = stock.dataset.heldout_idx.front();
    const Tensor v0 = translate(stock.bridge.forward, matrix_row(stock.dataset.src, first));
    const std::vector<int> prompt0 = tokenize(stock.prompts[static_cast<size_t>(first)].part, vocab);
    InjectionPolicy inert = cfg.policy;
    inert.alpha = 0.0f;
    bool all_identical = true;
    for (uint32_t seed = 1; seed <= 20; ++seed) {
        const GenerateResult base = generate(target, prompt0, cfg.gen_steps, 0.9f, seed);
        const GenerateResult inj =
            generate_with_policy(target, prompt0, cfg.gen_steps, 0.9f, seed, inert, v0);
        all_identical &= base.tokens == inj.tokens;
        all_identical &= base.step_logits.size() == inj.step_logits.size();
        for (size_t s = 0; all_identical && s < base.step_logits.size(); ++s) {
            all_identical &= bitwise_equal(base.step_logits[s], inj.step_logits[s]);
        }
    }
    c.require(all_identical, "zero-strength policy changed a generation");

    const uint32_t steer_seed = derive_seed(cfg.seed, "steering.forward");
    std::vector<double> kl_acc;
    for (const int idx : stock.dataset.heldout_idx) {
        const PromptEntry& entry = stock.prompts[static_cast<size_t>(idx)];
        const Tensor v = translate(stock.bridge.forward, matrix_row(stock.dataset.src, idx));
        const SteeringReport rep =
            steering_metrics(target, tokenize(entry.part, vocab), tokenize(entry.full, vocab), v,
                             cfg.policy, cfg.gen_steps, steer_seed);
        if (kl_acc.empty()) kl_acc.assign(rep.kl_per_step.size(), 0.0);
        for (size_t s = 0; s < rep.kl_per_step.size(); ++s) kl_acc[s] += rep.kl_per_step[s];
    }
    double kl_mean = 0.0;
    for (const double k : kl_acc) kl_mean += k / static_cast<double>(stock.dataset.heldout_idx.size());
    kl_mean /= static_cast<double>(kl_acc.size());
    c.require(kl_mean > 0.0, "stock policy mean per-step divergence is not strictly positive");

    bool all_finite = true;
    const int n = static_cast<int>(stock.prompts.size());
    for (int i = 0; i < 100; ++i) {
        const int idx = i % n;
        const Tensor v = translate(stock.bridge.forward, matrix_row(stock.dataset.src, idx));
        const std::vector<int> part = tokenize(stock.prompts[static_cast<size_t>(idx)].part, vocab);
        const GenerateResult r = generate_with_policy(target, part, cfg.gen_steps, 0.9f,
                                                      1000u + static_cast<uint32_t>(i),
                                                      cfg.policy, v);
        for (const Tensor& logits : r.step_logits) {
            for (const float x : logits.data) all_finite &= std::isfinite(x);
        }
    }
    c.require(all_finite, "injected generation produced a non-finite logit");
}

// --- criterion 6 ---------------------------------------------------------
// Blend arithmetic: the published example exactly, exact boundary behavior,
// and the convexity norm bound over 1000 random probes.

void criterion_blend_arithmetic(Check& c) {
    const Tensor h = make_tensor({2}, {1.0f, 0.0f});
    const Tensor v = make_tensor({2}, {0.0f, 1.0f});
    const Tensor out = blend(h, v, 0.3f);
    c.require(out.data[0] == 0.7f && out.data[1] == 0.3f,
              "blend([1,0],[0,1],0.3) is not exactly [0.7,0.3]");

    Rng rng(11);
    const Tensor a = random_tensor({4, 8}, rng, -3.0, 3.0);
    const Tensor b = random_tensor({4, 8}, rng, -3.0, 3.0);
    c.require(bitwise_equal(blend(a, b, 0.0f), a), "blend at alpha 0 is not bitwise the host");
    c.require(bitwise_equal(blend(a, b, 1.0f), b), "blend at alpha 1 is not bitwise the vector");

    bool bounded = true;
    for (int i = 0; i < 1000; ++i) {
        const Tensor p = random_tensor({16}, rng, -3.0, 3.0);
        const Tensor q = random_tensor({16}, rng, -3.0, 3.0);
        const float alpha = static_cast<float>(rng.uniform01());
        const double bound = std::max(l2(p), l2(q));
        bounded &= l2(blend(p, q, alpha)) <= bound * (1.0 + 1e-6) + 1e-9;
    }
    c.require(bounded, "a blend exceeded the convex norm bound");
}

// --- criterion 7 ---------------------------------------------------------
// Pipeline determinism: the evaluation pipeline run twice from the same
// config writes byte-identical reports, and every checkpoint format
// round-trips bit-exactly.

void criterion_pipeline_determinism(Check& c) {
    const std::string cli = LBRIDGE_CLI_PATH;
    const std::string config = std::string(LBRIDGE_SOURCE_DIR) + "/configs/mini.json";
    const fs::path scratch = fs::temp_directory_path() /
                             ("lbridge_accept_" + std::to_string(::getpid()));
    fs::remove_all(scratch);
    fs::create_directories(scratch);

    for (const char* run : {"run1", "run2"}) {
        const std::string cmd = "\"" + cli + "\" eval-bridge --config \"" + config + "\" --out \"" +
                                (scratch / run).string() + "\" > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        c.require(WIFEXITED(rc) && WEXITSTATUS(rc) == 0,
                  std::string("eval-bridge ") + run + " did not exit cleanly");
    }
    const std::string r1 = slurp((scratch / "run1" / "report.json").string());
    const std::string r2 = slurp((scratch / "run2" / "report.json").string());
    c.require(!r1.empty() && r1.find("<unreadable") != 0 && r1 == r2,
              "two pipeline runs did not write byte-identical reports");

    ToyModelConfig mc;
    mc.vocab_size = 64;
    mc.d_model = 16;
    mc.n_layers = 2;
    mc.n_heads = 2;
    mc.context_len = 8;
    mc.seed = 5;
    const ToyModel model = init_model(mc);
    const std::string mpath = (scratch / "model.bin").string();
    const std::string mpath2 = (scratch / "model2.bin").string();
    save_model(model, mpath);
    const ToyModel model_back = load_model(mpath);
    save_model(model_back, mpath2);
    c.require(bitwise_equal(model.params, model_back.params) && slurp(mpath) == slurp(mpath2),
              "model checkpoint does not round-trip bit-exactly");

    Rng rng(13);
    TranslatorParams tr = identity_translator(8);
    tr.params["extractor.b"] = random_tensor({8}, rng);
    const std::string tpath = (scratch / "translator.bin").string();
    const std::string tpath2 = (scratch / "translator2.bin").string();
    save_translator(tr, tpath);
    const TranslatorParams tr_back = load_translator(tpath);
    save_translator(tr_back, tpath2);
    c.require(bitwise_equal(tr.params, tr_back.params) && slurp(tpath) == slurp(tpath2),
              "translator checkpoint does not round-trip bit-exactly");

    const VectorStore store = make_vector_store({10u, 20u, 30u}, random_tensor({3, 5}, rng));
    const std::string vpath = (scratch / "vectors.bin").string();
    const std::string vpath2 = (scratch / "vectors2.bin").string();
    save_vector_store(store, vpath);
    const VectorStore store_back = load_vector_store(vpath);
    save_vector_store(store_back, vpath2);
    c.require(store_back.ids == store.ids && bitwise_equal(store.vectors, store_back.vectors) &&
                  slurp(vpath) == slurp(vpath2),
              "vector store does not round-trip bit-exactly");

    fs::remove_all(scratch);
}

// --- criterion 8 ---------------------------------------------------------
// Injection locality: under the default policy on a 4-layer model, a full
// state-trace diff shows non-targeted layers and positions bit-identical,
// with only the targeted tail rows of the targeted layers altered.

void criterion_injection_locality(Check& c) {
    ToyModelConfig mc;
    mc.vocab_size = 128;
    mc.d_model = 32;
    mc.n_layers = 4;
    mc.n_heads = 4;
    mc.context_len = 32;
    mc.seed = 99;
    const ToyModel model = init_model(mc);

    const std::vector<int> tokens = tokenize("the quick brown fox jumps over", mc.vocab_size);
    const InjectionPolicy policy;  // alpha 0.3, last three layers, 3 positions, 3 steps
    const BoundPolicy bound = bind_policy(policy, mc.n_layers);
    c.require(bound.layers == std::vector<int>({1, 2, 3}),
              "default policy did not resolve to the last three layers");

    Rng rng(17);
    const Tensor v = random_tensor({mc.d_model}, rng);
    const ForwardResult clean = forward_states(model, tokens);
    const ForwardResult hooked = forward_states(
        model, tokens, [&](int layer, Tensor& states) { apply_policy(states, layer, bound, v, 0); });

    const int64_t rows = static_cast<int64_t>(tokens.size());
    const int64_t tail = rows - policy.target_positions;
    bool locality = clean.layer_states.size() == hooked.layer_states.size();
    bool tail_changed = true;
    for (size_t layer = 0; locality && layer < clean.layer_states.size(); ++layer) {
        const Tensor& cl = clean.layer_states[layer];
        const Tensor& hk = hooked.layer_states[layer];
        const bool targeted = layer >= 1;
        for (int64_t r = 0; r < rows; ++r) {
            bool row_equal = true;
            for (int64_t j = 0; j < mc.d_model; ++j) {
                row_equal &= cl.at(r, j) == hk.at(r, j);
            }
            if (!targeted || r < tail) {
                locality &= row_equal;
            } else {
                tail_changed &= !row_equal;
            }
        }
    }
    c.require(locality, "a non-targeted layer or position changed under injection");
    c.require(tail_changed, "a targeted tail position was left unchanged");
}

int run_criterion(int number, const std::string& name, const std::function<void(Check&)>& fn) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        fn(c);
    } catch (const std::exception& e) {
        c.failures.push_back(std::string("threw: ") + e.what());
    }
    const double secs = seconds_since(t0);
    char timing[32];
    std::snprintf(timing, sizeof(timing), "%.1fs", secs);
    std::cout << (c.failures.empty() ? "[PASS]" : "[FAIL]") << " criterion " << number << ": "
              << name << " (" << timing << ")" << std::endl;
    for (const std::string& f : c.failures) std::cout << "       - " << f << std::endl;
    return c.failures.empty() ? 0 : 1;
}

}  // namespace

int main() {
    int failed = 0;
    failed += run_criterion(1, "reference statistics arithmetic", criterion_reference_statistics);
    failed += run_criterion(2, "gradient checks across differentiable ops", criterion_gradient_checks);
    failed += run_criterion(3, "pinned loss values", criterion_pinned_losses);
    failed += run_criterion(4, "stock bridge effect size", criterion_stock_bridge);
    failed += run_criterion(5, "injection safety and steering signal", criterion_injection_safety);
    failed += run_criterion(6, "blend arithmetic and norm bound", criterion_blend_arithmetic);
    failed += run_criterion(7, "pipeline determinism and checkpoint round-trips",
                            criterion_pipeline_determinism);
    failed += run_criterion(8, "injection locality", criterion_injection_locality);
    if (failed != 0) {
        std::cout << failed << " criterion(s) failed" << std::endl;
        return 1;
    }
    std::cout << "all criteria passed" << std::endl;
    return 0;
}
