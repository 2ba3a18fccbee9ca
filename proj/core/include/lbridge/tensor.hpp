#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lbridge/errors.hpp"

namespace lbridge {

// Dense row-major tensor. Rank 0 (shape == {}) is a scalar with one element.
// grad, when engaged, always matches data.size().
template <typename T>
struct BasicTensor {
    std::vector<int64_t> shape;
    std::vector<T> data;
    std::optional<std::vector<T>> grad;

    BasicTensor() = default;

    explicit BasicTensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }

    BasicTensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape)) {
            throw ShapeError("tensor: data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
    }

    static BasicTensor scalar(T v) {
        BasicTensor t;
        t.data.assign(1, v);
        return t;
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (const int64_t d : s) {
            if (d < 0) {
                throw ShapeError("tensor: negative dimension in shape " + shape_str(s));
            }
            n *= d;
        }
        return n;
    }

    static std::string shape_str(const std::vector<int64_t>& s) {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < s.size(); ++i) {
            if (i) os << ", ";
            os << s[i];
        }
        os << ']';
        return os.str();
    }

    std::string shape_str() const { return shape_str(shape); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    size_t rank() const { return shape.size(); }

    int64_t dim(size_t i) const {
        if (i >= shape.size()) {
            throw ShapeError("tensor: dim index " + std::to_string(i) + " out of rank " +
                             std::to_string(shape.size()));
        }
        return shape[i];
    }

    // Element access for rank <= 2 (all this project needs).
    T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
    const T& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

    bool finite() const {
        for (const T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void ensure_grad() {
        if (!grad) grad.emplace(data.size(), T(0));
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }

    bool same_shape(const BasicTensor& o) const { return shape == o.shape; }
};

using Tensor = BasicTensor<float>;
using DTensor = BasicTensor<double>;

inline DTensor to_double(const Tensor& t) {
    DTensor d;
    d.shape = t.shape;
    d.data.assign(t.data.begin(), t.data.end());
    return d;
}

inline Tensor to_float(const DTensor& t) {
    Tensor f;
    f.shape = t.shape;
    f.data.reserve(t.data.size());
    for (const double v : t.data) f.data.push_back(static_cast<float>(v));
    return f;
}

}  // namespace lbridge
