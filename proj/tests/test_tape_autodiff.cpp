#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "lbridge/errors.hpp"
#include "lbridge/grad_check.hpp"
#include "lbridge/kernels.hpp"
#include "lbridge/rng.hpp"
#include "lbridge/tape.hpp"
#include "test_util.hpp"

using namespace lbridge;
using namespace lbridge::testutil;

TEST_CASE("tape op values match the plain kernels") {
    Rng rng(100);
    Tensor a({3, 4}), b({3, 4});
    for (float& v : a.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (float& v : b.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));

    Tape tape;
    const VarId ta = tape.leaf(a), tb = tape.leaf(b);
    CHECK(bitwise_equal(tape.value(tape.add(ta, tb)), kernels::add(a, b)));
    CHECK(bitwise_equal(tape.value(tape.mul(ta, tb)), kernels::mul(a, b)));
    CHECK(bitwise_equal(tape.value(tape.gelu(ta)), kernels::gelu(a)));
    CHECK(bitwise_equal(tape.value(tape.softmax_rows(ta)), kernels::softmax_rows(a)));
    CHECK(bitwise_equal(tape.value(tape.matmul_nt(ta, tb)), kernels::matmul_nt(a, b)));
}

TEST_CASE("mse of a tensor against itself is exactly zero") {
    Tensor x({2, 5});
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = 0.3f * static_cast<float>(i) - 1.0f;
    Tape tape;
    const VarId lx = tape.leaf(x, true);
    const VarId loss = tape.mse(lx, lx);
    CHECK(tape.value(loss).at(0) == 0.0f);
}

TEST_CASE("backward of sum(x*x) yields 2x") {
    Tensor x({2, 3});
    for (size_t i = 0; i < 6; ++i) x.data[i] = 0.5f * static_cast<float>(i) - 1.25f;
    Tape tape;
    const VarId lx = tape.leaf(x, true);
    tape.backward(tape.sum_all(tape.mul(lx, lx)));
    const std::vector<float>& g = tape.grad(lx);
    REQUIRE(g.size() == 6);
    for (size_t i = 0; i < 6; ++i) {
        CHECK(g[i] == doctest::Approx(2.0f * x.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("a leaf used twice accumulates gradient") {
    Tensor x({4});
    for (int i = 0; i < 4; ++i) x.at(i) = static_cast<float>(i + 1);
    Tape tape;
    const VarId lx = tape.leaf(x, true);
    tape.backward(tape.sum_all(tape.add(lx, lx)));
    for (const float g : tape.grad(lx)) CHECK(g == 2.0f);
}

TEST_CASE("backward demands a scalar root reachable from a leaf") {
    Tape tape;
    Tensor x({2, 2});
    const VarId lx = tape.leaf(x, true);
    CHECK_THROWS_AS(tape.backward(tape.add(lx, lx)), ShapeError);

    Tape tape2;
    const VarId frozen = tape2.leaf(Tensor({2, 2}), false);
    CHECK(throws_with<ShapeError>(
        [&] { tape2.backward(tape2.sum_all(frozen)); }, "does not depend"));
}

TEST_CASE("non-finite op output raises a numeric error") {
    Tape tape;
    Tensor big({2});
    big.at(0) = 3e38f;
    big.at(1) = 3e38f;
    const VarId lb = tape.leaf(big, true);
    CHECK(throws_with<NumericError>([&] { tape.add(lb, lb); }, "non-finite"));

    Tape tape2;
    Tensor neg({1});
    neg.at(0) = -1.0f;
    CHECK_THROWS_AS(tape2.sqrt_elem(tape2.leaf(neg, true)), NumericError);

    Tape tape3;
    CHECK_THROWS_AS(tape3.l2_normalize_rows(tape3.leaf(Tensor({1, 3}), true)), NumericError);
}

TEST_CASE("finite differences confirm a sample of op gradients") {
    Rng rng(2024);
    for (const char* name : {"matmul", "gelu", "layer_norm_rows", "softmax_rows",
                             "cross_entropy", "concat_cols", "reshape"}) {
        const GradCheckCase& c = grad_check_case(name);
        for (int rep = 0; rep < 3; ++rep) {
            const Tensor point = c.sample_point(rng);
            const double err = run_grad_check(name, point, 1e-4);
            INFO(name << " rep " << rep);
            CHECK(err < 1e-3);
        }
    }
}

TEST_CASE("grad_check validates eps and the op name") {
    Rng rng(1);
    const Tensor point = grad_check_case("add").sample_point(rng);
    CHECK_THROWS_AS(run_grad_check("add", point, 0.0), ShapeError);
    CHECK_THROWS_AS(run_grad_check("add", point, 0.5), ShapeError);
    CHECK(throws_with<ShapeError>(
        [&] { run_grad_check("definitely-not-an-op", point, 1e-4); },
        "no gradient registered"));
}

TEST_CASE("the registry covers every differentiable op and loss component") {
    std::set<std::string> names;
    for (const GradCheckCase& c : standard_grad_checks()) names.insert(c.name);
    for (const char* required :
         {"add", "sub", "mul", "scale", "add_row", "sub_row", "matmul", "matmul_nt", "gelu",
          "softmax_rows", "masked_softmax_rows", "layer_norm_rows", "l2_normalize_rows",
          "sqrt_elem", "sum_all", "mean_all", "rows_mean", "gather_rows", "slice_rows",
          "slice_cols", "concat_rows", "concat_cols", "reshape", "mse", "cross_entropy",
          "loss_trans", "loss_contrast", "loss_dist", "loss_cycle", "translate"}) {
        INFO(required);
        CHECK(names.count(required) == 1);
    }
}

TEST_CASE("a wrong-size point is rejected") {
    const GradCheckCase& c = grad_check_case("matmul");
    CHECK_THROWS_AS(grad_check(c, Tensor({3}), 1e-4), ShapeError);
}
