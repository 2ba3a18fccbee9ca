#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbridge/losses.hpp"
#include "lbridge/tensor.hpp"
#include "lbridge/toy_model.hpp"
#include "lbridge/translator.hpp"

namespace lbridge {

// Paired hidden-state rows from two models over a shared prompt list, split
// into train and held-out indices. prompts may be empty when the rows came
// from a vector store; when present its length matches the row count.
struct PairDataset {
    std::vector<std::string> prompts;
    Tensor src;
    Tensor tgt;
    std::vector<int> train_idx;
    std::vector<int> heldout_idx;

    int64_t size() const { return src.dim(0); }
    int64_t d_src() const { return src.dim(1); }
    int64_t d_tgt() const { return tgt.dim(1); }
};

PairDataset build_pair_dataset(const ToyModel& model_src, const ToyModel& model_tgt,
                               const std::vector<std::string>& prompts,
                               double split_fraction, uint32_t seed);

// Same split logic over pre-extracted rows.
PairDataset make_pair_dataset(Tensor src, Tensor tgt, std::vector<std::string> prompts,
                              double split_fraction, uint32_t seed);

enum class Direction { kForward, kReverse };

const char* direction_name(Direction d);

struct TrainConfig {
    int epochs = 50;
    float lr = 1e-3f;
    int batch_size = 8;
    LossWeights weights;
    uint32_t seed = 0;

    void validate() const;
};

struct TrainHistory {
    std::string direction;
    double initial_heldout_cosine = 0.0;
    std::vector<double> loss;
    std::vector<double> heldout_cosine;
};

struct TrainResult {
    TranslatorParams params;
    TrainHistory history;
};

struct BidirectionalResult {
    TranslatorParams forward;
    TranslatorParams reverse;
    TrainHistory forward_history;
    TrainHistory reverse_history;
};

// base gives the shared hidden geometry (d_hidden, heads, slots, activation);
// endpoint widths and seeds are filled in per direction from the dataset.
TrainResult train_translator(const PairDataset& dataset, Direction direction,
                             const TranslatorConfig& base, const TrainConfig& config);

BidirectionalResult train_bidirectional(const PairDataset& dataset,
                                        const TranslatorConfig& base,
                                        const TrainConfig& config);

}  // namespace lbridge
