#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lbridge/evaluation.hpp"
#include "lbridge/injection.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/trainer.hpp"
#include "lbridge/translator.hpp"

namespace lbridge {

// One corpus line: <domain>\t<full prompt>\t<part prompt>.
struct PromptEntry {
    std::string domain;
    std::string full;
    std::string part;
};

std::vector<PromptEntry> load_prompts(const std::string& path);

struct LmSpec {
    std::string corpus_path;
    ToyModelConfig model;
    int epochs = 8;
    float lr = 3e-4f;
};

struct ExperimentConfig {
    uint32_t seed = 1;
    std::string prompts_path;
    double split_fraction = 0.8;
    LmSpec model_a;
    LmSpec model_b;
    TranslatorConfig translator;  // endpoint widths are taken from the models
    TrainConfig train;
    InjectionPolicy policy;
    int gen_steps = 12;
    int n_shuffles = 11;
};

// Parses the JSON config; relative file paths resolve against the config
// file's directory, and component seeds are derived from the global seed.
ExperimentConfig load_experiment_config(const std::string& path);

// Re-derives every component seed from the given one.
void apply_seed(ExperimentConfig& config, uint32_t seed);

std::vector<int> load_corpus_tokens(const std::string& path, int vocab_size);

struct BridgeSideReport {
    AlignmentReport alignment;
    double baseline_value = 0.0;
    std::optional<double> effect;      // empty when the baseline is not positive
    std::optional<double> asym;        // this direction's mean over the other's
    std::vector<double> kl_per_step;   // mean over held-out prompts
    double shift_score = 0.0;          // mean over held-out prompts
};

struct BridgeOutcome {
    ToyModel model_a;
    ToyModel model_b;
    std::vector<PromptEntry> prompts;
    PairDataset dataset;
    TranslatorParams forward;
    TranslatorParams reverse;
    TrainHistory forward_history;
    TrainHistory reverse_history;
    BridgeSideReport forward_report;
    BridgeSideReport reverse_report;
    std::string report_json;
};

// Full pipeline: train both toy models, build the paired dataset, train the
// bidirectional translators, and evaluate alignment, baselines, and steering
// on the held-out split.
BridgeOutcome run_eval_bridge(const ExperimentConfig& config);

std::string history_to_json(const TrainHistory& history);
std::string bridge_report_json(const BridgeSideReport& forward, const BridgeSideReport& reverse);

}  // namespace lbridge
