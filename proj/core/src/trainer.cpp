#include "lbridge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "lbridge/adamw.hpp"
#include "lbridge/errors.hpp"
#include "lbridge/evaluation.hpp"
#include "lbridge/rng.hpp"
#include "lbridge/tape.hpp"

namespace lbridge {

namespace {

void split_indices(int64_t n, double split_fraction, uint32_t seed,
                   std::vector<int>& train_idx, std::vector<int>& heldout_idx) {
    if (n < 20) {
        throw DataError("pair dataset: need at least 20 prompts, got " + std::to_string(n));
    }
    if (!(split_fraction > 0.0) || !(split_fraction < 1.0)) {
        throw ShapeError("pair dataset: split_fraction must be in (0, 1), got " +
                         std::to_string(split_fraction));
    }
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "dataset.split"));
    rng.shuffle(order);

    const int64_t heldout = std::llround(static_cast<double>(n) * (1.0 - split_fraction));
    if (heldout < 1 || heldout >= n) {
        throw DataError("pair dataset: split_fraction " + std::to_string(split_fraction) +
                        " leaves an empty train or held-out side for " + std::to_string(n) +
                        " prompts");
    }
    heldout_idx.assign(order.begin(), order.begin() + heldout);
    train_idx.assign(order.begin() + heldout, order.end());
    std::sort(heldout_idx.begin(), heldout_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
}

Tensor gather_dataset_rows(const Tensor& m, const std::vector<int>& idx) {
    const int64_t d = m.dim(1);
    Tensor out({static_cast<int64_t>(idx.size()), d});
    for (size_t r = 0; r < idx.size(); ++r) {
        const float* src = m.data.data() + static_cast<size_t>(idx[r]) * d;
        std::copy(src, src + d, out.data.begin() + static_cast<int64_t>(r) * d);
    }
    return out;
}

double heldout_cosine(const TranslatorParams& params, const Tensor& inputs,
                      const Tensor& targets, const std::vector<int>& idx) {
    const Tensor in = gather_dataset_rows(inputs, idx);
    const Tensor want = gather_dataset_rows(targets, idx);
    const Tensor got = translate_batch(params, in);
    double acc = 0.0;
    const int64_t d_out = got.dim(1);
    const int64_t d_want = want.dim(1);
    for (size_t r = 0; r < idx.size(); ++r) {
        Tensor a({d_out});
        Tensor b({d_want});
        std::copy_n(got.data.begin() + static_cast<int64_t>(r) * d_out, d_out, a.data.begin());
        std::copy_n(want.data.begin() + static_cast<int64_t>(r) * d_want, d_want, b.data.begin());
        acc += cosine(a, b);
    }
    return acc / static_cast<double>(idx.size());
}

struct Side {
    bool enabled = false;
    TranslatorParams params;
    AdamWState opt;
    TrainHistory history;
};

GradMap collect_grads(const Tape& tape, const TranslatorVars& vars,
                      const TranslatorConfig& config) {
    GradMap grads;
    for (const auto& [name, shape] : translator_param_layout(config)) {
        (void)shape;
        grads[name] = tape.grad(vars.leaves.at(name));
    }
    return grads;
}

BidirectionalResult train_impl(const PairDataset& dataset, const TranslatorConfig& base,
                               const TrainConfig& config, bool do_fwd, bool do_rev) {
    config.validate();
    if (dataset.train_idx.size() < 2) {
        throw ShapeError("train: train split has fewer than 2 rows");
    }
    const LossWeights& w = config.weights;
    const bool with_cycle = do_fwd && do_rev && w.w_cycle > 0.0f;

    Side fwd;
    Side rev;
    fwd.enabled = do_fwd;
    rev.enabled = do_rev;
    if (do_fwd) {
        TranslatorConfig c = base;
        c.d_src = dataset.d_src();
        c.d_tgt = dataset.d_tgt();
        c.seed = derive_seed(config.seed, "translator.forward");
        fwd.params = init_translator(c);
        fwd.history.direction = direction_name(Direction::kForward);
    }
    if (do_rev) {
        TranslatorConfig c = base;
        c.d_src = dataset.d_tgt();
        c.d_tgt = dataset.d_src();
        c.seed = derive_seed(config.seed, "translator.reverse");
        rev.params = init_translator(c);
        rev.history.direction = direction_name(Direction::kReverse);
    }

    if (do_fwd) {
        fwd.history.initial_heldout_cosine =
            heldout_cosine(fwd.params, dataset.src, dataset.tgt, dataset.heldout_idx);
    }
    if (do_rev) {
        rev.history.initial_heldout_cosine =
            heldout_cosine(rev.params, dataset.tgt, dataset.src, dataset.heldout_idx);
    }

    AdamWConfig opt_cfg;
    opt_cfg.lr = config.lr;

    // One shuffle stream drives batching for both the joint and the
    // single-direction paths, so a direction's batch sequence does not depend
    // on which other directions are being trained.
    Rng batch_rng(derive_seed(config.seed, "trainer.batches"));
    std::vector<int> order = dataset.train_idx;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        batch_rng.shuffle(order);
        double fwd_loss_acc = 0.0;
        double rev_loss_acc = 0.0;
        int64_t rows_seen = 0;

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t count = std::min<size_t>(config.batch_size, order.size() - start);
            // loss_dist needs a per-batch variance, so stragglers of one row
            // are dropped rather than trained on.
            if (count < 2) continue;
            const std::vector<int> batch(order.begin() + start, order.begin() + start + count);
            const int batch_index = static_cast<int>(start / config.batch_size);

            try {
                Tensor x = gather_dataset_rows(dataset.src, batch);
                Tensor y = gather_dataset_rows(dataset.tgt, batch);

                Tape tape;
                const VarId x_id = tape.leaf(std::move(x), false);
                const VarId y_id = tape.leaf(std::move(y), false);

                TranslatorVars fvars;
                TranslatorVars gvars;
                VarId f_out = -1;
                VarId g_out = -1;
                VarId lt_f = -1, lc_f = -1, ld_f = -1;
                VarId lt_g = -1, lc_g = -1, ld_g = -1;
                VarId cyc_f = -1, cyc_g = -1;

                if (do_fwd) {
                    fvars = stage_translator(tape, fwd.params);
                    f_out = translate_on_tape(tape, fwd.params.config, fvars, x_id);
                    lt_f = tape.mse(f_out, y_id);
                    lc_f = loss_contrast_node(tape, f_out, y_id, w.temperature);
                    ld_f = loss_dist_node(tape, f_out, y_id);
                }
                if (do_rev) {
                    gvars = stage_translator(tape, rev.params);
                    g_out = translate_on_tape(tape, rev.params.config, gvars, y_id);
                    lt_g = tape.mse(g_out, x_id);
                    lc_g = loss_contrast_node(tape, g_out, x_id, w.temperature);
                    ld_g = loss_dist_node(tape, g_out, x_id);
                }
                if (with_cycle) {
                    cyc_f = row_norm_mse_node(tape, translate_on_tape(tape, rev.params.config, gvars, f_out), x_id);
                    cyc_g = row_norm_mse_node(tape, translate_on_tape(tape, fwd.params.config, fvars, g_out), y_id);
                }

                std::vector<VarId> terms;
                if (do_fwd) {
                    terms.push_back(tape.scale(lt_f, w.w_trans));
                    terms.push_back(tape.scale(lc_f, w.w_contrast));
                    terms.push_back(tape.scale(ld_f, w.w_dist));
                }
                if (do_rev) {
                    terms.push_back(tape.scale(lt_g, w.w_trans));
                    terms.push_back(tape.scale(lc_g, w.w_contrast));
                    terms.push_back(tape.scale(ld_g, w.w_dist));
                }
                if (with_cycle) {
                    terms.push_back(tape.scale(tape.add(cyc_f, cyc_g), w.w_cycle));
                }
                VarId total = terms[0];
                for (size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);

                tape.backward(total);

                if (do_fwd) {
                    GradMap g = collect_grads(tape, fvars, fwd.params.config);
                    adamw_step(fwd.params.params, g, fwd.opt, opt_cfg);
                }
                if (do_rev) {
                    GradMap g = collect_grads(tape, gvars, rev.params.config);
                    adamw_step(rev.params.params, g, rev.opt, opt_cfg);
                }

                auto scalar_value = [&](VarId id) {
                    return static_cast<double>(tape.value(id).data[0]);
                };
                const double rows = static_cast<double>(count);
                if (do_fwd) {
                    double l = w.w_trans * scalar_value(lt_f) +
                               w.w_contrast * scalar_value(lc_f) +
                               w.w_dist * scalar_value(ld_f);
                    if (with_cycle) l += w.w_cycle * scalar_value(cyc_f);
                    fwd_loss_acc += l * rows;
                }
                if (do_rev) {
                    double l = w.w_trans * scalar_value(lt_g) +
                               w.w_contrast * scalar_value(lc_g) +
                               w.w_dist * scalar_value(ld_g);
                    if (with_cycle) l += w.w_cycle * scalar_value(cyc_g);
                    rev_loss_acc += l * rows;
                }
                rows_seen += static_cast<int64_t>(count);
            } catch (const NumericError& e) {
                throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
        }

        if (rows_seen == 0) {
            throw ShapeError("train: no batch of at least 2 rows in epoch " +
                             std::to_string(epoch));
        }
        if (do_fwd) {
            fwd.history.loss.push_back(fwd_loss_acc / static_cast<double>(rows_seen));
            fwd.history.heldout_cosine.push_back(
                heldout_cosine(fwd.params, dataset.src, dataset.tgt, dataset.heldout_idx));
        }
        if (do_rev) {
            rev.history.loss.push_back(rev_loss_acc / static_cast<double>(rows_seen));
            rev.history.heldout_cosine.push_back(
                heldout_cosine(rev.params, dataset.tgt, dataset.src, dataset.heldout_idx));
        }
    }

    BidirectionalResult out;
    out.forward = std::move(fwd.params);
    out.reverse = std::move(rev.params);
    out.forward_history = std::move(fwd.history);
    out.reverse_history = std::move(rev.history);
    return out;
}

}  // namespace

const char* direction_name(Direction d) {
    return d == Direction::kForward ? "forward" : "reverse";
}

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw ShapeError("train: epochs must be at least 1, got " + std::to_string(epochs));
    }
    if (batch_size < 2) {
        throw ShapeError("train: batch_size must be at least 2, got " +
                         std::to_string(batch_size));
    }
    if (!(lr > 0.0f) || !std::isfinite(lr)) {
        throw ShapeError("train: lr must be positive and finite");
    }
    weights.validate();
}

PairDataset build_pair_dataset(const ToyModel& model_src, const ToyModel& model_tgt,
                               const std::vector<std::string>& prompts,
                               double split_fraction, uint32_t seed) {
    const int64_t n = static_cast<int64_t>(prompts.size());
    if (n < 20) {
        throw DataError("pair dataset: need at least 20 prompts, got " + std::to_string(n));
    }
    const int64_t ctx_src = model_src.config.context_len;
    const int64_t ctx_tgt = model_tgt.config.context_len;

    PairDataset ds;
    ds.prompts = prompts;
    ds.src = Tensor({n, model_src.config.d_model});
    ds.tgt = Tensor({n, model_tgt.config.d_model});
    for (int64_t i = 0; i < n; ++i) {
        if (prompts[i].empty()) {
            throw DataError("pair dataset: prompt " + std::to_string(i) + " is empty");
        }
        const std::vector<int> toks_src = tokenize(prompts[i], model_src.config.vocab_size);
        const std::vector<int> toks_tgt = tokenize(prompts[i], model_tgt.config.vocab_size);
        const int64_t len = static_cast<int64_t>(toks_src.size());
        if (len > ctx_src || len > ctx_tgt) {
            throw DataError("pair dataset: prompt " + std::to_string(i) + " has " +
                            std::to_string(len) + " tokens, exceeding context length " +
                            std::to_string(std::min(ctx_src, ctx_tgt)));
        }
        const Tensor vs = extract_vector(model_src, toks_src);
        const Tensor vt = extract_vector(model_tgt, toks_tgt);
        std::copy(vs.data.begin(), vs.data.end(),
                  ds.src.data.begin() + i * model_src.config.d_model);
        std::copy(vt.data.begin(), vt.data.end(),
                  ds.tgt.data.begin() + i * model_tgt.config.d_model);
    }
    split_indices(n, split_fraction, seed, ds.train_idx, ds.heldout_idx);
    return ds;
}

PairDataset make_pair_dataset(Tensor src, Tensor tgt, std::vector<std::string> prompts,
                              double split_fraction, uint32_t seed) {
    if (src.rank() != 2 || tgt.rank() != 2) {
        throw ShapeError("pair dataset: row matrices must be rank 2");
    }
    if (src.dim(0) != tgt.dim(0)) {
        throw ShapeError("pair dataset: row count mismatch, " + std::to_string(src.dim(0)) +
                         " vs " + std::to_string(tgt.dim(0)));
    }
    if (!prompts.empty() && static_cast<int64_t>(prompts.size()) != src.dim(0)) {
        throw ShapeError("pair dataset: prompt list length does not match row count");
    }
    if (!src.finite() || !tgt.finite()) {
        throw NumericError("pair dataset: non-finite value in input rows");
    }
    PairDataset ds;
    ds.prompts = std::move(prompts);
    ds.src = std::move(src);
    ds.tgt = std::move(tgt);
    split_indices(ds.size(), split_fraction, seed, ds.train_idx, ds.heldout_idx);
    return ds;
}

TrainResult train_translator(const PairDataset& dataset, Direction direction,
                             const TranslatorConfig& base, const TrainConfig& config) {
    const bool is_fwd = direction == Direction::kForward;
    BidirectionalResult r = train_impl(dataset, base, config, is_fwd, !is_fwd);
    TrainResult out;
    out.params = is_fwd ? std::move(r.forward) : std::move(r.reverse);
    out.history = is_fwd ? std::move(r.forward_history) : std::move(r.reverse_history);
    return out;
}

BidirectionalResult train_bidirectional(const PairDataset& dataset,
                                        const TranslatorConfig& base,
                                        const TrainConfig& config) {
    return train_impl(dataset, base, config, true, true);
}

}  // namespace lbridge
