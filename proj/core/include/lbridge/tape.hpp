#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lbridge/tensor.hpp"

namespace lbridge {

using VarId = int32_t;

// Reverse-mode autodiff over a dynamically recorded op tape. Each op validates
// input shapes before computing (ShapeError names the op) and checks its output
// for NaN/Inf afterwards (NumericError). Gradients flow only into nodes marked
// requires_grad; backward() expects a scalar root and walks the tape in reverse
// creation order. A tape is single-use: record, backward once, read grads.
class Tape {
public:
    VarId leaf(Tensor value, bool requires_grad = false);

    VarId add(VarId a, VarId b);
    VarId sub(VarId a, VarId b);
    VarId mul(VarId a, VarId b);
    VarId scale(VarId a, float s);
    VarId add_row(VarId x, VarId bias);
    VarId sub_row(VarId x, VarId bias);
    VarId matmul(VarId a, VarId b);
    VarId matmul_nt(VarId a, VarId b);
    VarId gelu(VarId x);
    VarId softmax_rows(VarId x);
    VarId masked_softmax_rows(VarId x);
    VarId layer_norm_rows(VarId x, float eps);
    VarId l2_normalize_rows(VarId x);
    VarId sqrt_elem(VarId x);
    VarId sum_all(VarId x);
    VarId mean_all(VarId x);
    VarId rows_mean(VarId x);  // [N,D] -> [1,D]
    VarId gather_rows(VarId table, std::vector<int> ids);
    VarId slice_rows(VarId x, int64_t start, int64_t count);
    VarId slice_cols(VarId x, int64_t start, int64_t count);
    VarId concat_rows(const std::vector<VarId>& parts);
    VarId concat_cols(const std::vector<VarId>& parts);
    VarId reshape(VarId x, std::vector<int64_t> shape);
    VarId mse(VarId a, VarId b);  // mean over all elements of squared difference
    VarId cross_entropy(VarId logits, std::vector<int> targets);  // mean NLL

    const Tensor& value(VarId id) const { return nodes_[check(id)].value; }
    // Gradient of the last backward() root with respect to node id.
    const std::vector<float>& grad(VarId id) const;
    bool requires_grad(VarId id) const { return nodes_[check(id)].requires_grad; }

    void backward(VarId root);
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<float> grad;  // allocated only when requires_grad
        bool requires_grad = false;
        const char* op = "leaf";
        std::function<void(Tape&)> backprop;
    };

    std::vector<Node> nodes_;

    VarId check(VarId id) const;
    VarId push(Tensor value, const char* op, bool requires_grad,
               std::function<void(Tape&)> backprop);
    // nullptr when the node does not participate in differentiation.
    float* grad_ptr(VarId id);
    void check_finite(const Tensor& t, const char* op) const;
};

}  // namespace lbridge
