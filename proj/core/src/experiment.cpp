#include "lbridge/experiment.hpp"

#include <filesystem>
#include <utility>

#include <json.hpp>

#include "binio.hpp"
#include "lbridge/errors.hpp"
#include "lbridge/rng.hpp"

namespace lbridge {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

Tensor matrix_row(const Tensor& m, int64_t r) {
    const int64_t d = m.dim(1);
    Tensor out({d});
    std::copy_n(m.data.begin() + r * d, d, out.data.begin());
    return out;
}

std::string resolve_path(const fs::path& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw DataError(std::string("config: ") + what + " file '" + path + "' not found");
    }
}

LmSpec parse_lm_spec(const ojson& j, const fs::path& base, const char* who) {
    LmSpec spec;
    if (!j.contains("corpus")) {
        throw DataError(std::string("config: ") + who + " is missing 'corpus'");
    }
    spec.corpus_path = resolve_path(base, j.at("corpus").get<std::string>());
    spec.epochs = j.value("epochs", spec.epochs);
    spec.lr = j.value("lr", spec.lr);
    spec.model.vocab_size = j.value("vocab_size", spec.model.vocab_size);
    spec.model.d_model = j.value("d_model", spec.model.d_model);
    spec.model.n_layers = j.value("n_layers", spec.model.n_layers);
    spec.model.n_heads = j.value("n_heads", spec.model.n_heads);
    spec.model.context_len = j.value("context_len", spec.model.context_len);
    return spec;
}

BridgeSideReport evaluate_side(const ExperimentConfig& cfg, const BridgeOutcome& out,
                               bool forward) {
    const TranslatorParams& tr = forward ? out.forward : out.reverse;
    const Tensor& src = forward ? out.dataset.src : out.dataset.tgt;
    const Tensor& tgt = forward ? out.dataset.tgt : out.dataset.src;
    const ToyModel& target_model = forward ? out.model_b : out.model_a;
    const char* name = forward ? "forward" : "reverse";

    BridgeSideReport side;
    side.alignment = alignment_report(tr, src, tgt, out.dataset.heldout_idx, name);
    side.baseline_value = random_baseline(
        tr, src, tgt, out.dataset.heldout_idx, cfg.n_shuffles,
        derive_seed(cfg.seed, forward ? "baseline.forward" : "baseline.reverse"));
    if (side.baseline_value > 0.0) {
        side.effect = effect_size(side.alignment, side.baseline_value);
    }

    const uint32_t steer_seed =
        derive_seed(cfg.seed, forward ? "steering.forward" : "steering.reverse");
    std::vector<double> kl_acc;
    double shift_acc = 0.0;
    for (const int idx : out.dataset.heldout_idx) {
        const PromptEntry& entry = out.prompts[static_cast<size_t>(idx)];
        const Tensor v = translate(tr, matrix_row(src, idx));
        const std::vector<int> part = tokenize(entry.part, target_model.config.vocab_size);
        const std::vector<int> full = tokenize(entry.full, target_model.config.vocab_size);
        const SteeringReport rep = steering_metrics(target_model, part, full, v, cfg.policy,
                                                    cfg.gen_steps, steer_seed);
        if (kl_acc.empty()) kl_acc.assign(rep.kl_per_step.size(), 0.0);
        for (size_t s = 0; s < rep.kl_per_step.size(); ++s) kl_acc[s] += rep.kl_per_step[s];
        shift_acc += rep.shift_score;
    }
    const double n = static_cast<double>(out.dataset.heldout_idx.size());
    for (double& v : kl_acc) v /= n;
    side.kl_per_step = std::move(kl_acc);
    side.shift_score = shift_acc / n;
    return side;
}

ojson side_to_json(const BridgeSideReport& s) {
    ojson j;
    j["direction"] = s.alignment.direction;
    j["per_pair"] = s.alignment.per_pair;
    j["mean"] = s.alignment.mean;
    j["std_population"] = s.alignment.std_population;
    j["std_sample"] = s.alignment.std_sample;
    j["ci95"] = ojson::array({s.alignment.ci_lo, s.alignment.ci_hi});
    j["baseline"] = ojson{{"kind", "empirical-random"}, {"value", s.baseline_value}};
    j["effect_size"] = s.effect ? ojson(*s.effect) : ojson(nullptr);
    if (s.asym) {
        j["asymmetry"] = *s.asym;
    }
    j["steering"] = ojson{{"kl_per_step", s.kl_per_step}, {"shift_score", s.shift_score}};
    return j;
}

}  // namespace

std::vector<PromptEntry> load_prompts(const std::string& path) {
    const std::string text = binio::read_file(path, "prompts");
    std::vector<PromptEntry> entries;
    size_t line_no = 0;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (start > text.size()) break;
            continue;
        }

        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos ||
            line.find('\t', t2 + 1) != std::string::npos) {
            throw DataError("prompts: line " + std::to_string(line_no) +
                            ": expected 3 tab-separated fields");
        }
        PromptEntry e;
        e.domain = line.substr(0, t1);
        e.full = line.substr(t1 + 1, t2 - t1 - 1);
        e.part = line.substr(t2 + 1);
        if (e.domain.empty() || e.full.empty() || e.part.empty()) {
            throw DataError("prompts: line " + std::to_string(line_no) + ": empty field");
        }
        entries.push_back(std::move(e));
    }
    if (entries.empty()) {
        throw DataError("prompts: no entries in '" + path + "'");
    }
    return entries;
}

std::vector<int> load_corpus_tokens(const std::string& path, int vocab_size) {
    const std::string text = binio::read_file(path, "corpus");
    try {
        return tokenize(text, vocab_size);
    } catch (const DataError& e) {
        throw DataError("corpus '" + path + "': " + e.what());
    }
}

void apply_seed(ExperimentConfig& config, uint32_t seed) {
    config.seed = seed;
    config.model_a.model.seed = derive_seed(seed, "model.a");
    config.model_b.model.seed = derive_seed(seed, "model.b");
    config.translator.seed = derive_seed(seed, "translator");
    config.train.seed = derive_seed(seed, "trainer");
}

ExperimentConfig load_experiment_config(const std::string& path) {
    const std::string text = binio::read_file(path, "config");
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config '" + path + "': " + e.what());
    }
    const fs::path base = fs::path(path).parent_path();

    ExperimentConfig cfg;
    try {
        if (!j.contains("prompts")) {
            throw DataError("config: missing key 'prompts'");
        }
        cfg.prompts_path = resolve_path(base, j.at("prompts").get<std::string>());
        cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
        if (!j.contains("model_a") || !j.contains("model_b")) {
            throw DataError("config: missing 'model_a' or 'model_b'");
        }
        cfg.model_a = parse_lm_spec(j.at("model_a"), base, "model_a");
        cfg.model_b = parse_lm_spec(j.at("model_b"), base, "model_b");

        if (j.contains("translator")) {
            const ojson& t = j.at("translator");
            cfg.translator.d_hidden = t.value("d_hidden", cfg.translator.d_hidden);
            cfg.translator.n_heads = t.value("n_heads", cfg.translator.n_heads);
            cfg.translator.n_slots = t.value("n_slots", cfg.translator.n_slots);
            const std::string act = t.value("activation", std::string("gelu"));
            if (act == "gelu") {
                cfg.translator.activation = Activation::kGelu;
            } else if (act == "identity") {
                cfg.translator.activation = Activation::kIdentity;
            } else {
                throw DataError("config: unknown translator activation '" + act + "'");
            }
        }
        if (j.contains("train")) {
            const ojson& t = j.at("train");
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
            cfg.train.lr = t.value("lr", cfg.train.lr);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            if (t.contains("weights")) {
                const ojson& w = t.at("weights");
                cfg.train.weights.w_trans = w.value("trans", cfg.train.weights.w_trans);
                cfg.train.weights.w_cycle = w.value("cycle", cfg.train.weights.w_cycle);
                cfg.train.weights.w_contrast = w.value("contrast", cfg.train.weights.w_contrast);
                cfg.train.weights.w_dist = w.value("dist", cfg.train.weights.w_dist);
                cfg.train.weights.temperature =
                    w.value("temperature", cfg.train.weights.temperature);
            }
        }
        if (j.contains("policy")) {
            const ojson& p = j.at("policy");
            cfg.policy.alpha = p.value("alpha", cfg.policy.alpha);
            if (p.contains("layers")) {
                cfg.policy.target_layers = p.at("layers").get<std::vector<int>>();
            }
            cfg.policy.target_positions = p.value("positions", cfg.policy.target_positions);
            cfg.policy.active_steps = p.value("steps", cfg.policy.active_steps);
        }
        if (j.contains("eval")) {
            const ojson& e = j.at("eval");
            cfg.gen_steps = e.value("gen_steps", cfg.gen_steps);
            cfg.n_shuffles = e.value("n_shuffles", cfg.n_shuffles);
        }
        apply_seed(cfg, j.value("seed", cfg.seed));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("config '" + path + "': " + e.what());
    }

    require_file(cfg.prompts_path, "prompts");
    require_file(cfg.model_a.corpus_path, "model_a corpus");
    require_file(cfg.model_b.corpus_path, "model_b corpus");
    return cfg;
}

BridgeOutcome run_eval_bridge(const ExperimentConfig& config) {
    BridgeOutcome out;
    out.prompts = load_prompts(config.prompts_path);

    const std::vector<int> corpus_a =
        load_corpus_tokens(config.model_a.corpus_path, config.model_a.model.vocab_size);
    const std::vector<int> corpus_b =
        load_corpus_tokens(config.model_b.corpus_path, config.model_b.model.vocab_size);
    out.model_a = train_lm(corpus_a, config.model_a.model, config.model_a.epochs,
                           config.model_a.lr).model;
    out.model_b = train_lm(corpus_b, config.model_b.model, config.model_b.epochs,
                           config.model_b.lr).model;

    std::vector<std::string> fulls;
    fulls.reserve(out.prompts.size());
    for (const PromptEntry& e : out.prompts) fulls.push_back(e.full);
    out.dataset = build_pair_dataset(out.model_a, out.model_b, fulls, config.split_fraction,
                                     config.seed);

    BidirectionalResult bidi = train_bidirectional(out.dataset, config.translator, config.train);
    out.forward = std::move(bidi.forward);
    out.reverse = std::move(bidi.reverse);
    out.forward_history = std::move(bidi.forward_history);
    out.reverse_history = std::move(bidi.reverse_history);

    out.forward_report = evaluate_side(config, out, true);
    out.reverse_report = evaluate_side(config, out, false);
    out.forward_report.asym = asymmetry(out.forward_report.alignment,
                                        out.reverse_report.alignment);
    out.reverse_report.asym = asymmetry(out.reverse_report.alignment,
                                        out.forward_report.alignment);

    out.report_json = bridge_report_json(out.forward_report, out.reverse_report);
    return out;
}

std::string history_to_json(const TrainHistory& history) {
    ojson j;
    j["direction"] = history.direction;
    j["epochs"] = history.loss.size();
    j["loss"] = history.loss;
    j["heldout_cosine"] = history.heldout_cosine;
    return j.dump(2) + "\n";
}

std::string bridge_report_json(const BridgeSideReport& forward,
                               const BridgeSideReport& reverse) {
    ojson j;
    j["forward"] = side_to_json(forward);
    j["reverse"] = side_to_json(reverse);
    return j.dump(2) + "\n";
}

}  // namespace lbridge
