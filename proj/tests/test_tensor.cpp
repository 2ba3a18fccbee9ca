#include <cmath>
#include <limits>

#include "doctest.h"
#include "lbridge/errors.hpp"
#include "lbridge/tensor.hpp"
#include "test_util.hpp"

using namespace lbridge;
using namespace lbridge::testutil;

TEST_CASE("tensor construction and element layout") {
    Tensor t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    for (const float v : t.data) CHECK(v == 0.0f);

    // Row-major: (r, c) lives at r * cols + c.
    t.at(1, 2) = 5.0f;
    CHECK(t.data[5] == 5.0f);
    t.data[1] = 3.0f;
    CHECK(t.at(0, 1) == 3.0f);
}

TEST_CASE("tensor data constructor validates the element count") {
    const Tensor ok({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    CHECK(ok.at(1, 1) == 4.0f);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f}), ShapeError);
}

TEST_CASE("scalar tensors have rank zero and one element") {
    const Tensor s = Tensor::scalar(2.5f);
    CHECK(s.rank() == 0);
    CHECK(s.numel() == 1);
    CHECK(s.at(0) == 2.5f);
}

TEST_CASE("shape_str and error paths") {
    CHECK(Tensor({2, 3}).shape_str() == "[2, 3]");
    CHECK(Tensor({7}).shape_str() == "[7]");
    CHECK(Tensor::shape_str({}) == "[]");
    CHECK_THROWS_AS(Tensor::numel_of({2, -1}), ShapeError);
    CHECK_THROWS_AS(Tensor({2}).dim(1), ShapeError);
    CHECK_THROWS_AS(Tensor({}).dim(0), ShapeError);
}

TEST_CASE("finite flags NaN and infinity") {
    Tensor t({3});
    CHECK(t.finite());
    t.at(1) = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.finite());
    t.at(1) = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.finite());
}

TEST_CASE("gradient buffer lifecycle") {
    Tensor t({2, 2});
    CHECK_FALSE(t.grad.has_value());
    t.ensure_grad();
    REQUIRE(t.grad.has_value());
    CHECK(t.grad->size() == t.data.size());
    (*t.grad)[0] = 1.0f;
    t.ensure_grad();  // must not reset
    CHECK((*t.grad)[0] == 1.0f);
    t.zero_grad();
    CHECK((*t.grad)[0] == 0.0f);
}

TEST_CASE("same_shape compares shapes only") {
    Tensor a({2, 3}), b({2, 3}), c({3, 2});
    a.at(0, 0) = 1.0f;
    CHECK(a.same_shape(b));
    CHECK_FALSE(a.same_shape(c));
}

TEST_CASE("float/double conversion preserves values") {
    const Tensor f = make_tensor({2, 2}, {0.1f, -2.0f, 3.5f, 4.25f});
    const DTensor d = to_double(f);
    CHECK(d.shape == f.shape);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(d.data[i] == static_cast<double>(f.data[i]));
    }
    const Tensor back = to_float(d);
    CHECK(bitwise_equal(back, f));
}
