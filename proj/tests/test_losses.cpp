#include <cmath>
#include <vector>

#include "doctest.h"
#include "lbridge/errors.hpp"
#include "lbridge/losses.hpp"
#include "lbridge/rng.hpp"
#include "lbridge/tape.hpp"
#include "test_util.hpp"

using namespace lbridge;
using namespace lbridge::testutil;

namespace {

Tensor random_batch(int64_t n, int64_t d, uint32_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor x({n, d});
    for (float& v : x.data) v = static_cast<float>(rng.uniform(lo, hi));
    return x;
}

}  // namespace

TEST_CASE("translation loss: hand value and exact-match zero") {
    const Tensor pred = make_tensor({1, 2}, {1.0f, 2.0f});
    const Tensor target = make_tensor({1, 2}, {0.0f, 0.0f});
    CHECK(loss_trans(pred, target) == doctest::Approx(2.5).epsilon(1e-7));

    const Tensor x = random_batch(3, 4, 1);
    CHECK(loss_trans(x, x) == 0.0f);

    CHECK_THROWS_AS(loss_trans(Tensor({2, 2}), Tensor({2, 3})), ShapeError);
    CHECK(throws_with<ShapeError>(
        [&] { loss_trans(Tensor({0, 2}), Tensor({0, 2})); }, "empty batch"));
}

TEST_CASE("contrastive loss: orthonormal two-pair case at unit temperature") {
    const Tensor pred = make_tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    const double expected = std::log(1.0 + std::exp(-1.0));
    CHECK(std::fabs(loss_contrast(pred, pred, 1.0f) - expected) < 1e-6);
}

TEST_CASE("contrastive loss is symmetric and validates inputs") {
    const Tensor a = random_batch(4, 3, 2, 0.2, 2.0);
    const Tensor b = random_batch(4, 3, 3, 0.2, 2.0);
    CHECK(loss_contrast(a, b, 0.07f) == doctest::Approx(loss_contrast(b, a, 0.07f)).epsilon(1e-6));

    CHECK(throws_with<ShapeError>(
        [&] { loss_contrast(a, b, 0.0f); }, "temperature"));
    CHECK_THROWS_AS(loss_contrast(a, b, -1.0f), ShapeError);
    CHECK_THROWS_AS(loss_contrast(Tensor({3}), Tensor({3}), 1.0f), ShapeError);

    // Matching rows must be preferred over mispairs: loss below the random
    // -log(1/N) level.
    const Tensor x = random_batch(8, 6, 4, 0.2, 2.0);
    CHECK(loss_contrast(x, x, 0.07f) < std::log(8.0));
}

TEST_CASE("distribution loss: zero on itself, positive on a moment mismatch") {
    const Tensor x = random_batch(5, 3, 5);
    CHECK(loss_dist(x, x) == 0.0f);

    // Shifting every row by a constant changes only the mean term: for columns
    // shifted by c the loss is c^2 averaged over columns.
    Tensor shifted = x;
    for (int64_t i = 0; i < 5; ++i) shifted.at(i, 0) += 2.0f;
    CHECK(loss_dist(shifted, x) == doctest::Approx(4.0 / 3.0).epsilon(1e-5));

    CHECK(throws_with<ShapeError>(
        [&] { loss_dist(make_tensor({1, 2}, {1.0f, 2.0f}), make_tensor({1, 2}, {1.0f, 2.0f})); },
        "need at least 2"));
    CHECK_THROWS_AS(loss_dist(Tensor({4}), Tensor({4})), ShapeError);
}

TEST_CASE("population standard deviation is used, not the sample one") {
    // pred rows {0,2} vs target rows {0,0}: population std of pred column is 1,
    // sample std would be sqrt(2). mean term (1-0)^2 = 1, std term (1-0)^2 = 1.
    const Tensor pred = make_tensor({2, 1}, {0.0f, 2.0f});
    const Tensor target = make_tensor({2, 1}, {0.0f, 0.0f});
    CHECK(loss_dist(pred, target) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("cycle loss: exact identity pair scores zero") {
    const TranslatorParams f = identity_translator(4, 2, 2);
    const TranslatorParams g = identity_translator(4, 4, 2);
    const Tensor src = random_batch(6, 4, 6);
    const Tensor tgt = random_batch(6, 4, 7);
    CHECK(loss_cycle(f, g, src, tgt) == 0.0f);
}

TEST_CASE("cycle loss averages per-row squared reconstruction norms") {
    // f maps everything through zero weights: g(f(x)) = 0 for zero params, so
    // each row costs its squared norm; the loss is the mean over rows, summed
    // over both sides.
    TranslatorParams f = identity_translator(3, 2, 1);
    TranslatorParams g = identity_translator(3, 3, 1);
    for (auto& [name, t] : f.params) {
        (void)name;
        for (float& v : t.data) v = 0.0f;
    }
    for (auto& [name, t] : g.params) {
        (void)name;
        for (float& v : t.data) v = 0.0f;
    }
    const Tensor src = make_tensor({2, 3}, {1.0f, 0.0f, 0.0f, 0.0f, 2.0f, 0.0f});
    const Tensor tgt = make_tensor({2, 3}, {0.0f, 0.0f, 3.0f, 0.0f, 0.0f, 0.0f});
    // side(src) = (1 + 4)/2, side(tgt) = (9 + 0)/2.
    CHECK(loss_cycle(f, g, src, tgt) == doctest::Approx(2.5 + 4.5).epsilon(1e-6));

    CHECK(throws_with<ShapeError>(
        [&] { loss_cycle(f, g, random_batch(2, 4, 8), tgt); }, "dimension chain"));
}

TEST_CASE("composite applies the published weights left to right") {
    const LossWeights w;
    CHECK(w.w_trans == 1.0f);
    CHECK(w.w_cycle == 0.5f);
    CHECK(w.w_contrast == 0.3f);
    CHECK(w.w_dist == 0.2f);
    CHECK(w.temperature == 0.07f);

    CHECK(composite(1.0f, 1.0f, 1.0f, 1.0f, w) == 2.0f);

    const float a = 0.37f, b = 1.21f, c = 0.05f, d = 2.4f;
    const float expected = ((w.w_trans * a + w.w_cycle * b) + w.w_contrast * c) + w.w_dist * d;
    CHECK(composite(a, b, c, d, w) == expected);
}

TEST_CASE("composite rejects non-finite components and bad weights") {
    const LossWeights w;
    CHECK(throws_with<NumericError>(
        [&] { composite(std::nanf(""), 0.0f, 0.0f, 0.0f, w); }, "non-finite"));
    LossWeights bad;
    bad.w_trans = -1.0f;
    CHECK_THROWS_AS(composite(1.0f, 1.0f, 1.0f, 1.0f, bad), ShapeError);
    LossWeights bad_temp;
    bad_temp.temperature = 0.0f;
    CHECK_THROWS_AS(composite(1.0f, 1.0f, 1.0f, 1.0f, bad_temp), ShapeError);
}

TEST_CASE("tape nodes agree with the scalar losses") {
    const Tensor pred = random_batch(4, 3, 9);
    const Tensor target = random_batch(4, 3, 10);

    {
        Tape tape;
        const VarId node = loss_trans_node(tape, tape.leaf(pred, true), tape.leaf(target));
        CHECK(tape.value(node).at(0) ==
              doctest::Approx(loss_trans(pred, target)).epsilon(1e-6));
    }
    {
        Tape tape;
        const VarId node =
            loss_contrast_node(tape, tape.leaf(pred, true), tape.leaf(target), 0.07f);
        CHECK(tape.value(node).at(0) ==
              doctest::Approx(loss_contrast(pred, target, 0.07f)).epsilon(1e-5));
    }
    {
        Tape tape;
        const VarId node = loss_dist_node(tape, tape.leaf(pred, true), tape.leaf(target));
        CHECK(tape.value(node).at(0) ==
              doctest::Approx(loss_dist(pred, target)).epsilon(1e-5));
    }
    {
        // row_norm_mse is mse scaled by the column count: the per-row norm
        // convention used by the cycle term.
        Tape tape;
        const VarId node = row_norm_mse_node(tape, tape.leaf(pred, true), tape.leaf(target));
        float acc = 0.0f;
        for (size_t i = 0; i < pred.data.size(); ++i) {
            const float d = pred.data[i] - target.data[i];
            acc += d * d;
        }
        CHECK(tape.value(node).at(0) == doctest::Approx(acc / 4.0).epsilon(1e-5));
    }
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.temperature = -0.07f;
    CHECK(throws_with<ShapeError>([&] { w.validate(); }, "temperature"));
    LossWeights w2;
    w2.w_dist = -0.2f;
    CHECK(throws_with<ShapeError>([&] { w2.validate(); }, "negative"));
}
