#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lbridge/checkpoint.hpp"
#include "lbridge/errors.hpp"
#include "lbridge/evaluation.hpp"
#include "lbridge/experiment.hpp"
#include "lbridge/rng.hpp"
#include "lbridge/injection.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/trainer.hpp"
#include "lbridge/translator.hpp"
#include "lbridge/vector_store.hpp"

namespace fs = std::filesystem;
using namespace lbridge;
using ojson = nlohmann::ordered_json;

namespace {

// Tracks files written by a command so a failure part-way leaves nothing
// half-written behind.
class OutputGuard {
public:
    ~OutputGuard() {
        if (dismissed_) return;
        for (const std::string& p : paths_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
    std::string track(std::string path) {
        paths_.push_back(path);
        return path;
    }
    void dismiss() { dismissed_ = true; }

private:
    std::vector<std::string> paths_;
    bool dismissed_ = false;
};

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open '" + path + "' for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
        throw DataError("write failure on '" + path + "'");
    }
}

std::string model_path(const std::string& out_dir, const std::string& which) {
    return out_dir + "/model_" + which + ".toym";
}

std::string vectors_path(const std::string& out_dir, const std::string& which,
                         const std::string& variant) {
    return out_dir + "/vectors_" + which + "_" + variant + ".lvec";
}

ToyModel train_one_lm(const ExperimentConfig& cfg, const std::string& which) {
    const LmSpec& spec = which == "a" ? cfg.model_a : cfg.model_b;
    const std::vector<int> corpus = load_corpus_tokens(spec.corpus_path, spec.model.vocab_size);
    return train_lm(corpus, spec.model, spec.epochs, spec.lr).model;
}

void cmd_train_lm(const ExperimentConfig& cfg, const std::string& out_dir,
                  const std::string& which) {
    OutputGuard guard;
    if (which == "a" || which == "both") {
        save_model(train_one_lm(cfg, "a"), guard.track(model_path(out_dir, "a")));
    }
    if (which == "b" || which == "both") {
        save_model(train_one_lm(cfg, "b"), guard.track(model_path(out_dir, "b")));
    }
    guard.dismiss();
}

void cmd_extract(const ExperimentConfig& cfg, const std::string& out_dir,
                 const std::string& which, const std::string& variant) {
    const ToyModel model = load_model(model_path(out_dir, which));
    const std::vector<PromptEntry> prompts = load_prompts(cfg.prompts_path);

    std::vector<uint32_t> ids;
    Tensor rows({static_cast<int64_t>(prompts.size()), model.config.d_model});
    for (size_t i = 0; i < prompts.size(); ++i) {
        const std::string& text = variant == "part" ? prompts[i].part : prompts[i].full;
        try {
            const Tensor v = extract_vector(model, tokenize(text, model.config.vocab_size));
            std::copy(v.data.begin(), v.data.end(),
                      rows.data.begin() + static_cast<int64_t>(i) * model.config.d_model);
        } catch (const ShapeError& e) {
            throw DataError("extract: prompt " + std::to_string(i) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("extract: prompt " + std::to_string(i) + ": " + e.what());
        }
        ids.push_back(static_cast<uint32_t>(i));
    }

    OutputGuard guard;
    save_vector_store(make_vector_store(std::move(ids), std::move(rows)),
                      guard.track(vectors_path(out_dir, which, variant)));
    guard.dismiss();
}

PairDataset dataset_from_stores(const ExperimentConfig& cfg, const std::string& out_dir) {
    const VectorStore store_a = load_vector_store(vectors_path(out_dir, "a", "full"));
    const VectorStore store_b = load_vector_store(vectors_path(out_dir, "b", "full"));
    if (store_a.count() != store_b.count()) {
        throw DataError("train-translator: stores hold " + std::to_string(store_a.count()) +
                        " and " + std::to_string(store_b.count()) + " vectors");
    }
    std::map<uint32_t, int64_t> row_of_b;
    for (int64_t i = 0; i < store_b.count(); ++i) {
        if (!row_of_b.emplace(store_b.ids[static_cast<size_t>(i)], i).second) {
            throw DataError("train-translator: duplicate prompt id " +
                            std::to_string(store_b.ids[static_cast<size_t>(i)]) +
                            " in the b store");
        }
    }

    Tensor src({store_a.count(), store_a.dim});
    Tensor tgt({store_a.count(), store_b.dim});
    std::map<uint32_t, int64_t> seen_a;
    for (int64_t i = 0; i < store_a.count(); ++i) {
        const uint32_t id = store_a.ids[static_cast<size_t>(i)];
        if (!seen_a.emplace(id, i).second) {
            throw DataError("train-translator: duplicate prompt id " + std::to_string(id) +
                            " in the a store");
        }
        const auto it = row_of_b.find(id);
        if (it == row_of_b.end()) {
            throw DataError("train-translator: prompt id " + std::to_string(id) +
                            " present in the a store but not the b store");
        }
        std::copy_n(store_a.vectors.data.begin() + i * store_a.dim, store_a.dim,
                    src.data.begin() + i * store_a.dim);
        std::copy_n(store_b.vectors.data.begin() + it->second * store_b.dim, store_b.dim,
                    tgt.data.begin() + i * store_b.dim);
    }
    return make_pair_dataset(std::move(src), std::move(tgt), {}, cfg.split_fraction, cfg.seed);
}

void cmd_train_translator(const ExperimentConfig& cfg, const std::string& out_dir) {
    const PairDataset dataset = dataset_from_stores(cfg, out_dir);
    const BidirectionalResult r = train_bidirectional(dataset, cfg.translator, cfg.train);

    OutputGuard guard;
    save_translator(r.forward, guard.track(out_dir + "/translator_forward.lbtr"));
    save_translator(r.reverse, guard.track(out_dir + "/translator_reverse.lbtr"));
    write_text(guard.track(out_dir + "/history_forward.json"),
               history_to_json(r.forward_history));
    write_text(guard.track(out_dir + "/history_reverse.json"),
               history_to_json(r.reverse_history));
    guard.dismiss();
}

void cmd_inject_generate(const ExperimentConfig& cfg, const std::string& out_dir,
                         int prompt_index) {
    const ToyModel model_a = load_model(model_path(out_dir, "a"));
    const ToyModel model_b = load_model(model_path(out_dir, "b"));
    const TranslatorParams fwd = load_translator(out_dir + "/translator_forward.lbtr");
    const std::vector<PromptEntry> prompts = load_prompts(cfg.prompts_path);
    if (prompt_index < 0 || static_cast<size_t>(prompt_index) >= prompts.size()) {
        throw DataError("inject-generate: prompt index " + std::to_string(prompt_index) +
                        " out of range for " + std::to_string(prompts.size()) + " prompts");
    }
    const PromptEntry& entry = prompts[static_cast<size_t>(prompt_index)];

    const Tensor v_src =
        extract_vector(model_a, tokenize(entry.full, model_a.config.vocab_size));
    const Tensor v = translate(fwd, v_src);

    const std::vector<int> part = tokenize(entry.part, model_b.config.vocab_size);
    const std::vector<int> full = tokenize(entry.full, model_b.config.vocab_size);
    const uint32_t seed = derive_seed(cfg.seed, "inject");
    const GenerateResult baseline = generate(model_b, part, cfg.gen_steps, 0.0f, seed);
    const GenerateResult injected =
        generate_with_policy(model_b, part, cfg.gen_steps, 0.0f, seed, cfg.policy, v);
    const GenerateResult reference = generate(model_b, full, cfg.gen_steps, 0.0f, seed);

    std::vector<double> kl;
    kl.reserve(static_cast<size_t>(cfg.gen_steps));
    for (int s = 0; s < cfg.gen_steps; ++s) {
        kl.push_back(symmetric_kl(baseline.step_logits[static_cast<size_t>(s)],
                                  injected.step_logits[static_cast<size_t>(s)]));
    }

    ojson j;
    j["prompt_index"] = prompt_index;
    j["domain"] = entry.domain;
    j["part"] = entry.part;
    j["full"] = entry.full;
    j["baseline_text"] = detokenize(baseline.tokens);
    j["injected_text"] = detokenize(injected.tokens);
    j["reference_text"] = detokenize(reference.tokens);
    j["kl_per_step"] = kl;
    j["shift_score"] =
        shift_toward_reference(model_b, injected.tokens, baseline.tokens, reference.tokens);

    OutputGuard guard;
    write_text(guard.track(out_dir + "/inject_" + std::to_string(prompt_index) + ".json"),
               j.dump(2) + "\n");
    guard.dismiss();
}

void cmd_eval_bridge(const ExperimentConfig& cfg, const std::string& out_dir) {
    const BridgeOutcome outcome = run_eval_bridge(cfg);

    OutputGuard guard;
    save_model(outcome.model_a, guard.track(model_path(out_dir, "a")));
    save_model(outcome.model_b, guard.track(model_path(out_dir, "b")));

    std::vector<uint32_t> ids(static_cast<size_t>(outcome.dataset.size()));
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<uint32_t>(i);
    save_vector_store(make_vector_store(ids, outcome.dataset.src),
                      guard.track(vectors_path(out_dir, "a", "full")));
    save_vector_store(make_vector_store(ids, outcome.dataset.tgt),
                      guard.track(vectors_path(out_dir, "b", "full")));

    save_translator(outcome.forward, guard.track(out_dir + "/translator_forward.lbtr"));
    save_translator(outcome.reverse, guard.track(out_dir + "/translator_reverse.lbtr"));
    write_text(guard.track(out_dir + "/history_forward.json"),
               history_to_json(outcome.forward_history));
    write_text(guard.track(out_dir + "/history_reverse.json"),
               history_to_json(outcome.reverse_history));
    write_text(guard.track(out_dir + "/report.json"), outcome.report_json);
    guard.dismiss();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent bridge toolkit: toy LM training, vector extraction, translator "
                 "training, steered generation, and bridge evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<uint32_t> seed_override;
    std::string lm_which = "both";
    std::string extract_which;
    std::string extract_variant = "full";
    int prompt_index = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")->required();
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--out", out_dir, "output directory");
    };

    CLI::App* c_train_lm = app.add_subcommand("train-lm", "train the toy language models");
    add_common(c_train_lm);
    c_train_lm->add_option("--model", lm_which, "which model: a, b, or both")
        ->check(CLI::IsMember({"a", "b", "both"}));

    CLI::App* c_extract = app.add_subcommand("extract", "extract prompt vectors from a model");
    add_common(c_extract);
    c_extract->add_option("--model", extract_which, "which model: a or b")
        ->required()
        ->check(CLI::IsMember({"a", "b"}));
    c_extract->add_option("--variant", extract_variant, "prompt variant: full or part")
        ->check(CLI::IsMember({"full", "part"}));

    CLI::App* c_train_tr =
        app.add_subcommand("train-translator", "train both translators from vector stores");
    add_common(c_train_tr);

    CLI::App* c_inject =
        app.add_subcommand("inject-generate", "generate with an injected translated vector");
    add_common(c_inject);
    c_inject->add_option("--prompt-index", prompt_index, "prompt to steer");

    CLI::App* c_eval = app.add_subcommand("eval-bridge", "run the full bridge evaluation");
    add_common(c_eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        ExperimentConfig cfg = load_experiment_config(config_path);
        if (seed_override) {
            apply_seed(cfg, *seed_override);
        }
        fs::create_directories(out_dir);

        if (c_train_lm->parsed()) {
            cmd_train_lm(cfg, out_dir, lm_which);
        } else if (c_extract->parsed()) {
            cmd_extract(cfg, out_dir, extract_which, extract_variant);
        } else if (c_train_tr->parsed()) {
            cmd_train_translator(cfg, out_dir);
        } else if (c_inject->parsed()) {
            cmd_inject_generate(cfg, out_dir, prompt_index);
        } else if (c_eval->parsed()) {
            cmd_eval_bridge(cfg, out_dir);
        }
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
