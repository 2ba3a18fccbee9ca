#include "lbridge/grad_check.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <utility>

#include "lbridge/errors.hpp"
#include "lbridge/kernels.hpp"
#include "lbridge/losses.hpp"
#include "lbridge/translator.hpp"

namespace lbridge {

namespace {

namespace k = kernels;

int64_t numel_of_shape(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

Tensor take_f32(const Tensor& flat, size_t& off, const std::vector<int64_t>& shape) {
    const size_t n = static_cast<size_t>(numel_of_shape(shape));
    if (off + n > flat.data.size()) {
        throw ShapeError("grad_check: point too small for declared input shapes");
    }
    Tensor t(shape);
    std::copy(flat.data.begin() + off, flat.data.begin() + off + n, t.data.begin());
    off += n;
    return t;
}

DTensor take_f64(const DTensor& flat, size_t& off, const std::vector<int64_t>& shape) {
    const size_t n = static_cast<size_t>(numel_of_shape(shape));
    if (off + n > flat.data.size()) {
        throw ShapeError("grad_check: point too small for declared input shapes");
    }
    DTensor t(shape);
    std::copy(flat.data.begin() + off, flat.data.begin() + off + n, t.data.begin());
    off += n;
    return t;
}

struct CaseSpec {
    std::string name;
    std::vector<std::vector<int64_t>> in_shapes;
    // Non-scalar outputs get contracted against a fixed random weight tensor of
    // this shape; empty means the builder already returns a scalar.
    std::vector<int64_t> out_shape;
    std::function<VarId(Tape&, const std::vector<VarId>&)> tape_fn;
    std::function<DTensor(const std::vector<DTensor>&)> eval_fn;
    double lo = -2.0;
    double hi = 2.0;
};

GradCheckCase make_case(CaseSpec spec, uint32_t weight_seed) {
    auto shapes = std::make_shared<std::vector<std::vector<int64_t>>>(spec.in_shapes);
    int64_t total = 0;
    for (const auto& s : *shapes) total += numel_of_shape(s);

    std::shared_ptr<Tensor> weights;
    if (!spec.out_shape.empty()) {
        Rng wr(weight_seed);
        auto w = std::make_shared<Tensor>(spec.out_shape);
        for (float& v : w->data) v = static_cast<float>(wr.uniform(-1.0, 1.0));
        weights = std::move(w);
    }

    GradCheckCase c;
    c.name = spec.name;
    const double lo = spec.lo;
    const double hi = spec.hi;
    c.sample_point = [total, lo, hi](Rng& rng) {
        Tensor flat({total});
        for (float& v : flat.data) v = static_cast<float>(rng.uniform(lo, hi));
        return flat;
    };
    auto tape_fn = std::move(spec.tape_fn);
    c.build_f32 = [shapes, weights, tape_fn](Tape& tape, const Tensor& flat,
                                             std::vector<VarId>& leaves) {
        size_t off = 0;
        std::vector<VarId> ins;
        ins.reserve(shapes->size());
        for (const auto& s : *shapes) {
            VarId id = tape.leaf(take_f32(flat, off, s), true);
            ins.push_back(id);
            leaves.push_back(id);
        }
        VarId out = tape_fn(tape, ins);
        if (weights) {
            VarId w = tape.leaf(*weights, false);
            out = tape.sum_all(tape.mul(out, w));
        }
        return out;
    };
    auto eval_fn = std::move(spec.eval_fn);
    c.eval_f64 = [shapes, weights, eval_fn](const DTensor& flat) {
        size_t off = 0;
        std::vector<DTensor> ins;
        ins.reserve(shapes->size());
        for (const auto& s : *shapes) ins.push_back(take_f64(flat, off, s));
        DTensor out = eval_fn(ins);
        if (weights) {
            double acc = 0.0;
            for (size_t i = 0; i < out.data.size(); ++i) {
                acc += out.data[i] * static_cast<double>(weights->data[i]);
            }
            return acc;
        }
        if (out.numel() != 1) {
            throw ShapeError("grad_check: case output is not scalar");
        }
        return out.data[0];
    };
    return c;
}

DTensor scalar_d(double v) { return DTensor::scalar(v); }

DTensor mse_f64(const DTensor& a, const DTensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return scalar_d(acc / static_cast<double>(a.numel()));
}

DTensor cross_entropy_f64(const DTensor& logits, const std::vector<int>& targets) {
    return scalar_d(k::cross_entropy_rows(logits, targets));
}

// Small translator fixture shared by the translate and cycle-loss cases.
struct TranslatorFixture {
    TranslatorConfig config;
    std::vector<std::pair<std::string, std::vector<int64_t>>> layout;

    explicit TranslatorFixture(int64_t d_src, int64_t d_tgt) {
        config.d_src = d_src;
        config.d_tgt = d_tgt;
        config.d_hidden = 4;
        config.n_heads = 2;
        config.n_slots = 2;
        config.seed = 0;
        config.activation = Activation::kGelu;
        layout = translator_param_layout(config);
    }

    std::vector<std::vector<int64_t>> shapes() const {
        std::vector<std::vector<int64_t>> out;
        out.reserve(layout.size());
        for (const auto& [name, shape] : layout) out.push_back(shape);
        return out;
    }

    TranslatorVars stage(const std::vector<VarId>& ins, size_t off) const {
        TranslatorVars vars;
        for (size_t i = 0; i < layout.size(); ++i) {
            vars.leaves[layout[i].first] = ins[off + i];
        }
        return vars;
    }

    std::map<std::string, DTensor> pack(const std::vector<DTensor>& ins, size_t off) const {
        std::map<std::string, DTensor> params;
        for (size_t i = 0; i < layout.size(); ++i) {
            params[layout[i].first] = ins[off + i];
        }
        return params;
    }
};

std::vector<GradCheckCase> build_registry() {
    std::vector<GradCheckCase> reg;
    uint32_t wseed = 0xC0FFEEu;
    auto add_case = [&](CaseSpec spec) { reg.push_back(make_case(std::move(spec), ++wseed)); };

    add_case({"add",
              {{3, 4}, {3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.add(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return k::add(in[0], in[1]); }});
    add_case({"sub",
              {{3, 4}, {3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.sub(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return k::sub(in[0], in[1]); }});
    add_case({"mul",
              {{3, 4}, {3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.mul(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return k::mul(in[0], in[1]); }});
    add_case({"scale",
              {{3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.scale(in[0], 1.7f); },
              [](const std::vector<DTensor>& in) { return k::scale(in[0], 1.7); }});
    add_case({"add_row",
              {{3, 4}, {4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.add_row(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return k::add_row(in[0], in[1]); }});
    add_case({"sub_row",
              {{3, 4}, {4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.sub_row(in[0], in[1]); },
              [](const std::vector<DTensor>& in) {
                  DTensor neg = in[1];
                  for (double& v : neg.data) v = -v;
                  return k::add_row(in[0], neg);
              }});
    add_case({"matmul",
              {{3, 4}, {4, 2}},
              {3, 2},
              [](Tape& t, const std::vector<VarId>& in) { return t.matmul(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return k::matmul(in[0], in[1]); }});
    add_case({"matmul_nt",
              {{3, 4}, {2, 4}},
              {3, 2},
              [](Tape& t, const std::vector<VarId>& in) { return t.matmul_nt(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return k::matmul_nt(in[0], in[1]); }});
    add_case({"gelu",
              {{3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.gelu(in[0]); },
              [](const std::vector<DTensor>& in) { return k::gelu(in[0]); }});
    add_case({"softmax_rows",
              {{3, 5}},
              {3, 5},
              [](Tape& t, const std::vector<VarId>& in) { return t.softmax_rows(in[0]); },
              [](const std::vector<DTensor>& in) { return k::softmax_rows(in[0]); }});
    add_case({"masked_softmax_rows",
              {{4, 4}},
              {4, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.masked_softmax_rows(in[0]); },
              [](const std::vector<DTensor>& in) { return k::masked_softmax_rows(in[0]); }});
    add_case({"layer_norm_rows",
              {{3, 6}},
              {3, 6},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.layer_norm_rows(in[0], 1e-5f);
              },
              [](const std::vector<DTensor>& in) {
                  return k::layer_norm_rows(in[0], 1e-5);
              }});
    add_case({"l2_normalize_rows",
              {{3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.l2_normalize_rows(in[0]); },
              [](const std::vector<DTensor>& in) { return k::l2_normalize_rows(in[0]); },
              0.5, 2.5});
    add_case({"sqrt_elem",
              {{3, 4}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) { return t.sqrt_elem(in[0]); },
              [](const std::vector<DTensor>& in) {
                  DTensor out = in[0];
                  for (double& v : out.data) v = std::sqrt(v);
                  return out;
              },
              0.5, 3.0});
    add_case({"sum_all",
              {{3, 4}},
              {},
              [](Tape& t, const std::vector<VarId>& in) { return t.sum_all(in[0]); },
              [](const std::vector<DTensor>& in) { return scalar_d(k::sum(in[0])); }});
    add_case({"mean_all",
              {{3, 4}},
              {},
              [](Tape& t, const std::vector<VarId>& in) { return t.mean_all(in[0]); },
              [](const std::vector<DTensor>& in) { return scalar_d(k::mean(in[0])); }});
    add_case({"rows_mean",
              {{4, 3}},
              {1, 3},
              [](Tape& t, const std::vector<VarId>& in) { return t.rows_mean(in[0]); },
              [](const std::vector<DTensor>& in) {
                  DTensor m = k::rows_mean(in[0]);
                  return DTensor({1, m.dim(0)}, m.data);
              }});
    add_case({"gather_rows",
              {{4, 3}},
              {4, 3},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.gather_rows(in[0], {2, 0, 1, 2});
              },
              [](const std::vector<DTensor>& in) {
                  return k::gather_rows(in[0], {2, 0, 1, 2});
              }});
    add_case({"slice_rows",
              {{5, 3}},
              {3, 3},
              [](Tape& t, const std::vector<VarId>& in) { return t.slice_rows(in[0], 1, 3); },
              [](const std::vector<DTensor>& in) {
                  DTensor out({3, 3});
                  for (int64_t r = 0; r < 3; ++r)
                      for (int64_t c = 0; c < 3; ++c) out.at(r, c) = in[0].at(r + 1, c);
                  return out;
              }});
    add_case({"slice_cols",
              {{3, 6}},
              {3, 3},
              [](Tape& t, const std::vector<VarId>& in) { return t.slice_cols(in[0], 2, 3); },
              [](const std::vector<DTensor>& in) {
                  DTensor out({3, 3});
                  for (int64_t r = 0; r < 3; ++r)
                      for (int64_t c = 0; c < 3; ++c) out.at(r, c) = in[0].at(r, c + 2);
                  return out;
              }});
    add_case({"concat_rows",
              {{2, 4}, {3, 4}},
              {5, 4},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.concat_rows({in[0], in[1]});
              },
              [](const std::vector<DTensor>& in) {
                  DTensor out({5, 4});
                  for (int64_t r = 0; r < 2; ++r)
                      for (int64_t c = 0; c < 4; ++c) out.at(r, c) = in[0].at(r, c);
                  for (int64_t r = 0; r < 3; ++r)
                      for (int64_t c = 0; c < 4; ++c) out.at(r + 2, c) = in[1].at(r, c);
                  return out;
              }});
    add_case({"concat_cols",
              {{3, 2}, {3, 3}},
              {3, 5},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.concat_cols({in[0], in[1]});
              },
              [](const std::vector<DTensor>& in) {
                  DTensor out({3, 5});
                  for (int64_t r = 0; r < 3; ++r) {
                      for (int64_t c = 0; c < 2; ++c) out.at(r, c) = in[0].at(r, c);
                      for (int64_t c = 0; c < 3; ++c) out.at(r, c + 2) = in[1].at(r, c);
                  }
                  return out;
              }});
    add_case({"reshape",
              {{2, 6}},
              {3, 4},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.reshape(in[0], {3, 4});
              },
              [](const std::vector<DTensor>& in) { return DTensor({3, 4}, in[0].data); }});
    add_case({"mse",
              {{3, 4}, {3, 4}},
              {},
              [](Tape& t, const std::vector<VarId>& in) { return t.mse(in[0], in[1]); },
              [](const std::vector<DTensor>& in) { return mse_f64(in[0], in[1]); }});
    add_case({"cross_entropy",
              {{4, 5}},
              {},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.cross_entropy(in[0], {1, 0, 3, 2});
              },
              [](const std::vector<DTensor>& in) {
                  return cross_entropy_f64(in[0], {1, 0, 3, 2});
              }});
    // A computation with no dependence on its input; both sides must report a
    // gradient of exactly zero.
    add_case({"constant",
              {{3, 4}},
              {},
              [](Tape& t, const std::vector<VarId>& in) {
                  return t.mean_all(t.scale(in[0], 0.0f));
              },
              [](const std::vector<DTensor>& in) {
                  (void)in;
                  return scalar_d(0.0);
              }});

    add_case({"loss_trans",
              {{4, 3}, {4, 3}},
              {},
              [](Tape& t, const std::vector<VarId>& in) {
                  return loss_trans_node(t, in[0], in[1]);
              },
              [](const std::vector<DTensor>& in) {
                  return scalar_d(loss_trans_t(in[0], in[1]));
              }});
    add_case({"loss_contrast",
              {{4, 3}, {4, 3}},
              {},
              [](Tape& t, const std::vector<VarId>& in) {
                  return loss_contrast_node(t, in[0], in[1], 0.07f);
              },
              [](const std::vector<DTensor>& in) {
                  return scalar_d(loss_contrast_t(in[0], in[1], 0.07));
              },
              0.2, 2.0});
    add_case({"loss_dist",
              {{5, 3}, {5, 3}},
              {},
              [](Tape& t, const std::vector<VarId>& in) {
                  return loss_dist_node(t, in[0], in[1]);
              },
              [](const std::vector<DTensor>& in) {
                  return scalar_d(loss_dist_t(in[0], in[1]));
              }});

    {
        TranslatorFixture fix(4, 3);
        auto shapes = fix.shapes();
        shapes.push_back({3, 4});
        auto fixp = std::make_shared<TranslatorFixture>(fix);
        add_case({"translate",
                  shapes,
                  {3, 3},
                  [fixp](Tape& t, const std::vector<VarId>& in) {
                      TranslatorVars vars = fixp->stage(in, 0);
                      return translate_on_tape(t, fixp->config, vars, in.back());
                  },
                  [fixp](const std::vector<DTensor>& in) {
                      auto params = fixp->pack(in, 0);
                      return translate_batch_t<double>(fixp->config, params, in.back());
                  },
                  -0.8, 0.8});
    }
    {
        // Cycle reconstruction through a forward and reverse pair; the fixed
        // batches keep the check focused on parameter gradients.
        auto fwd = std::make_shared<TranslatorFixture>(3, 4);
        auto rev = std::make_shared<TranslatorFixture>(4, 3);
        Rng br(0x5EEDBA7u);
        auto bx = std::make_shared<Tensor>(std::vector<int64_t>{3, 3});
        auto by = std::make_shared<Tensor>(std::vector<int64_t>{3, 4});
        for (float& v : bx->data) v = static_cast<float>(br.uniform(-1.0, 1.0));
        for (float& v : by->data) v = static_cast<float>(br.uniform(-1.0, 1.0));
        auto shapes = fwd->shapes();
        auto rshapes = rev->shapes();
        shapes.insert(shapes.end(), rshapes.begin(), rshapes.end());
        const size_t n_fwd = fwd->layout.size();
        add_case({"loss_cycle",
                  shapes,
                  {},
                  [fwd, rev, bx, by, n_fwd](Tape& t, const std::vector<VarId>& in) {
                      TranslatorVars f = fwd->stage(in, 0);
                      TranslatorVars g = rev->stage(in, n_fwd);
                      VarId x = t.leaf(*bx, false);
                      VarId y = t.leaf(*by, false);
                      VarId side_src = row_norm_mse_node(t, translate_on_tape(t, rev->config, g, translate_on_tape(t, fwd->config, f, x)), x);
                      VarId side_tgt = row_norm_mse_node(t, translate_on_tape(t, fwd->config, f, translate_on_tape(t, rev->config, g, y)), y);
                      return t.add(side_src, side_tgt);
                  },
                  [fwd, rev, bx, by, n_fwd](const std::vector<DTensor>& in) {
                      auto fp = fwd->pack(in, 0);
                      auto gp = rev->pack(in, n_fwd);
                      DTensor x = to_double(*bx);
                      DTensor y = to_double(*by);
                      DTensor rx = translate_batch_t<double>(rev->config, gp,
                                        translate_batch_t<double>(fwd->config, fp, x));
                      DTensor ry = translate_batch_t<double>(fwd->config, fp,
                                        translate_batch_t<double>(rev->config, gp, y));
                      auto side = [](const DTensor& recon, const DTensor& orig) {
                          double acc = 0.0;
                          for (size_t i = 0; i < orig.data.size(); ++i) {
                              const double d = recon.data[i] - orig.data[i];
                              acc += d * d;
                          }
                          return acc / static_cast<double>(orig.dim(0));
                      };
                      return scalar_d(side(rx, x) + side(ry, y));
                  },
                  -0.8, 0.8});
    }

    return reg;
}

}  // namespace

double grad_check(const GradCheckCase& check, const Tensor& point, double eps) {
    if (!(eps > 0.0) || eps > 1e-2) {
        throw ShapeError("grad_check: eps must be in (0, 1e-2], got " + std::to_string(eps));
    }
    Tape tape;
    std::vector<VarId> leaves;
    VarId root = check.build_f32(tape, point, leaves);
    tape.backward(root);

    std::vector<float> analytic;
    analytic.reserve(point.data.size());
    for (VarId leaf : leaves) {
        const std::vector<float>& g = tape.grad(leaf);
        analytic.insert(analytic.end(), g.begin(), g.end());
    }
    if (analytic.size() != point.data.size()) {
        throw ShapeError("grad_check: case leaves cover " + std::to_string(analytic.size()) +
                         " values but the point has " + std::to_string(point.data.size()));
    }

    DTensor base = to_double(point);
    double worst = 0.0;
    for (size_t i = 0; i < base.data.size(); ++i) {
        DTensor plus = base;
        DTensor minus = base;
        plus.data[i] += eps;
        minus.data[i] -= eps;
        const double fd = (check.eval_f64(plus) - check.eval_f64(minus)) / (2.0 * eps);
        const double err = std::abs(static_cast<double>(analytic[i]) - fd) /
                           std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

const std::vector<GradCheckCase>& standard_grad_checks() {
    static const std::vector<GradCheckCase> reg = build_registry();
    return reg;
}

const GradCheckCase& grad_check_case(const std::string& name) {
    for (const GradCheckCase& c : standard_grad_checks()) {
        if (c.name == name) return c;
    }
    throw ShapeError("grad_check: no gradient registered for op '" + name + "'");
}

double run_grad_check(const std::string& name, const Tensor& point, double eps) {
    return grad_check(grad_check_case(name), point, eps);
}

}  // namespace lbridge
