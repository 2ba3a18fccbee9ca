#include "lbridge/tape.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "lbridge/errors.hpp"
#include "lbridge/kernels.hpp"

namespace lbridge {

namespace {

namespace k = kernels;

}  // namespace

VarId Tape::check(VarId id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
        throw ShapeError("tape: unknown node id " + std::to_string(id));
    }
    return id;
}

void Tape::check_finite(const Tensor& t, const char* op) const {
    if (!t.finite()) {
        throw NumericError(std::string(op) + ": non-finite value in output");
    }
}

VarId Tape::push(Tensor value, const char* op, bool requires_grad,
                 std::function<void(Tape&)> backprop) {
    check_finite(value, op);
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    n.backprop = std::move(backprop);
    if (requires_grad) n.grad.assign(n.value.data.size(), 0.0f);
    nodes_.push_back(std::move(n));
    return static_cast<VarId>(nodes_.size() - 1);
}

float* Tape::grad_ptr(VarId id) {
    Node& n = nodes_[id];
    return n.requires_grad ? n.grad.data() : nullptr;
}

const std::vector<float>& Tape::grad(VarId id) const {
    const Node& n = nodes_[check(id)];
    if (!n.requires_grad) {
        throw ShapeError("tape: node " + std::to_string(id) + " (" + n.op +
                         ") does not carry a gradient");
    }
    return n.grad;
}

void Tape::backward(VarId root) {
    check(root);
    const Node& r = nodes_[root];
    if (r.value.numel() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " +
                         Tensor::shape_str(r.value.shape));
    }
    if (!r.requires_grad) {
        throw ShapeError("backward: root does not depend on any differentiable leaf");
    }
    nodes_[root].grad[0] = 1.0f;
    for (VarId i = root; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backprop) n.backprop(*this);
    }
}

VarId Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), "leaf", requires_grad, nullptr);
}

VarId Tape::add(VarId a, VarId b) {
    check(a), check(b);
    Tensor out = k::add(nodes_[a].value, nodes_[b].value);
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    VarId id = push(std::move(out), "add", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, b](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            if (float* ga = t.grad_ptr(a)) {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (float* gb = t.grad_ptr(b)) {
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        };
    }
    return id;
}

VarId Tape::sub(VarId a, VarId b) {
    check(a), check(b);
    Tensor out = k::sub(nodes_[a].value, nodes_[b].value);
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    VarId id = push(std::move(out), "sub", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, b](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            if (float* ga = t.grad_ptr(a)) {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (float* gb = t.grad_ptr(b)) {
                for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        };
    }
    return id;
}

VarId Tape::mul(VarId a, VarId b) {
    check(a), check(b);
    Tensor out = k::mul(nodes_[a].value, nodes_[b].value);
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    VarId id = push(std::move(out), "mul", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, b](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            const Tensor& av = t.nodes_[a].value;
            const Tensor& bv = t.nodes_[b].value;
            if (float* ga = t.grad_ptr(a)) {
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv.data[i];
            }
            if (float* gb = t.grad_ptr(b)) {
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av.data[i];
            }
        };
    }
    return id;
}

VarId Tape::scale(VarId a, float s) {
    check(a);
    Tensor out = k::scale(nodes_[a].value, s);
    const bool rg = nodes_[a].requires_grad;
    VarId id = push(std::move(out), "scale", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, s](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            float* ga = t.grad_ptr(a);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
        };
    }
    return id;
}

VarId Tape::add_row(VarId x, VarId bias) {
    check(x), check(bias);
    Tensor out = k::add_row(nodes_[x].value, nodes_[bias].value);
    const bool rg = nodes_[x].requires_grad || nodes_[bias].requires_grad;
    VarId id = push(std::move(out), "add_row", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x, bias](Tape& t) {
            const Tensor& o = t.nodes_[id].value;
            const std::vector<float>& g = t.nodes_[id].grad;
            const int64_t rows = o.shape[0], cols = o.shape[1];
            if (float* gx = t.grad_ptr(x)) {
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (float* gb = t.grad_ptr(bias)) {
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t j = 0; j < cols; ++j) gb[j] += g[static_cast<size_t>(i * cols + j)];
                }
            }
        };
    }
    return id;
}

VarId Tape::sub_row(VarId x, VarId bias) {
    check(x), check(bias);
    // Same broadcast contract as add_row, negated bias contribution.
    Tensor xv = nodes_[x].value;
    const Tensor& bv = nodes_[bias].value;
    kernels::require_rank(xv, 2, "sub_row lhs");
    kernels::require_rank(bv, 1, "sub_row rhs");
    if (xv.shape[1] != bv.shape[0]) {
        throw ShapeError("sub_row: width " + std::to_string(xv.shape[1]) + " vs bias " +
                         std::to_string(bv.shape[0]));
    }
    for (int64_t i = 0; i < xv.shape[0]; ++i) {
        for (int64_t j = 0; j < xv.shape[1]; ++j) xv.at(i, j) -= bv.at(j);
    }
    const bool rg = nodes_[x].requires_grad || nodes_[bias].requires_grad;
    VarId id = push(std::move(xv), "sub_row", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x, bias](Tape& t) {
            const Tensor& o = t.nodes_[id].value;
            const std::vector<float>& g = t.nodes_[id].grad;
            const int64_t rows = o.shape[0], cols = o.shape[1];
            if (float* gx = t.grad_ptr(x)) {
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (float* gb = t.grad_ptr(bias)) {
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t j = 0; j < cols; ++j) gb[j] -= g[static_cast<size_t>(i * cols + j)];
                }
            }
        };
    }
    return id;
}

VarId Tape::matmul(VarId a, VarId b) {
    check(a), check(b);
    Tensor out = k::matmul(nodes_[a].value, nodes_[b].value);
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    VarId id = push(std::move(out), "matmul", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, b](Tape& t) {
            const Tensor& av = t.nodes_[a].value;
            const Tensor& bv = t.nodes_[b].value;
            Tensor g(t.nodes_[id].value.shape, t.nodes_[id].grad);
            if (float* ga = t.grad_ptr(a)) {
                Tensor da = k::matmul_nt(g, bv);  // dC * B^T
                for (size_t i = 0; i < da.data.size(); ++i) ga[i] += da.data[i];
            }
            if (float* gb = t.grad_ptr(b)) {
                Tensor db = k::matmul_tn(av, g);  // A^T * dC
                for (size_t i = 0; i < db.data.size(); ++i) gb[i] += db.data[i];
            }
        };
    }
    return id;
}

VarId Tape::matmul_nt(VarId a, VarId b) {
    check(a), check(b);
    Tensor out = k::matmul_nt(nodes_[a].value, nodes_[b].value);
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    VarId id = push(std::move(out), "matmul_nt", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, b](Tape& t) {
            const Tensor& av = t.nodes_[a].value;
            const Tensor& bv = t.nodes_[b].value;
            Tensor g(t.nodes_[id].value.shape, t.nodes_[id].grad);
            if (float* ga = t.grad_ptr(a)) {
                Tensor da = k::matmul(g, bv);  // dC * B
                for (size_t i = 0; i < da.data.size(); ++i) ga[i] += da.data[i];
            }
            if (float* gb = t.grad_ptr(b)) {
                Tensor db = k::matmul_tn(g, av);  // dC^T * A
                for (size_t i = 0; i < db.data.size(); ++i) gb[i] += db.data[i];
            }
        };
    }
    return id;
}

VarId Tape::gelu(VarId x) {
    check(x);
    Tensor out = k::gelu(nodes_[x].value);
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "gelu", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            const Tensor& xv = t.nodes_[x].value;
            float* gx = t.grad_ptr(x);
            for (size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * k::gelu_grad_scalar(xv.data[i]);
            }
        };
    }
    return id;
}

VarId Tape::softmax_rows(VarId x) {
    check(x);
    Tensor out = k::softmax_rows(nodes_[x].value);
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "softmax_rows", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const Tensor& p = t.nodes_[id].value;
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            const int64_t rows = p.shape[0], cols = p.shape[1];
            for (int64_t i = 0; i < rows; ++i) {
                float dot = 0.0f;
                const size_t base = static_cast<size_t>(i * cols);
                for (int64_t j = 0; j < cols; ++j) dot += g[base + j] * p.data[base + j];
                for (int64_t j = 0; j < cols; ++j) {
                    gx[base + j] += p.data[base + j] * (g[base + j] - dot);
                }
            }
        };
    }
    return id;
}

VarId Tape::masked_softmax_rows(VarId x) {
    check(x);
    Tensor out = k::masked_softmax_rows(nodes_[x].value);
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "masked_softmax_rows", rg, nullptr);
    if (rg) {
        // Masked entries have probability 0, so the softmax backward formula
        // already routes no gradient into them.
        nodes_[id].backprop = [id, x](Tape& t) {
            const Tensor& p = t.nodes_[id].value;
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            const int64_t n = p.shape[0];
            for (int64_t i = 0; i < n; ++i) {
                float dot = 0.0f;
                const size_t base = static_cast<size_t>(i * n);
                for (int64_t j = 0; j <= i; ++j) dot += g[base + j] * p.data[base + j];
                for (int64_t j = 0; j <= i; ++j) {
                    gx[base + j] += p.data[base + j] * (g[base + j] - dot);
                }
            }
        };
    }
    return id;
}

VarId Tape::layer_norm_rows(VarId x, float eps) {
    check(x);
    Tensor inv_std;
    Tensor out = k::layer_norm_rows(nodes_[x].value, eps, &inv_std);
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "layer_norm_rows", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x, inv_std](Tape& t) {
            const Tensor& y = t.nodes_[id].value;  // normalized rows
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            const int64_t rows = y.shape[0], cols = y.shape[1];
            for (int64_t i = 0; i < rows; ++i) {
                const size_t base = static_cast<size_t>(i * cols);
                float gmean = 0.0f, gymean = 0.0f;
                for (int64_t j = 0; j < cols; ++j) {
                    gmean += g[base + j];
                    gymean += g[base + j] * y.data[base + j];
                }
                gmean /= static_cast<float>(cols);
                gymean /= static_cast<float>(cols);
                const float inv = inv_std.at(i);
                for (int64_t j = 0; j < cols; ++j) {
                    gx[base + j] += inv * (g[base + j] - gmean - y.data[base + j] * gymean);
                }
            }
        };
    }
    return id;
}

VarId Tape::l2_normalize_rows(VarId x) {
    check(x);
    const Tensor& xv = nodes_[x].value;
    kernels::require_rank(xv, 2, "l2_normalize_rows");
    const int64_t rows = xv.shape[0], cols = xv.shape[1];
    Tensor norms({rows});
    for (int64_t i = 0; i < rows; ++i) {
        float sq = 0.0f;
        for (int64_t j = 0; j < cols; ++j) sq += xv.at(i, j) * xv.at(i, j);
        const float n = std::sqrt(sq);
        if (!(n > 0.0f)) {
            throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
        }
        norms.at(i) = n;
    }
    Tensor out = xv;
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) out.at(i, j) /= norms.at(i);
    }
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "l2_normalize_rows", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x, norms](Tape& t) {
            const Tensor& y = t.nodes_[id].value;  // unit rows
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            const int64_t rows2 = y.shape[0], cols2 = y.shape[1];
            for (int64_t i = 0; i < rows2; ++i) {
                const size_t base = static_cast<size_t>(i * cols2);
                float dot = 0.0f;
                for (int64_t j = 0; j < cols2; ++j) dot += g[base + j] * y.data[base + j];
                const float inv = 1.0f / norms.at(i);
                for (int64_t j = 0; j < cols2; ++j) {
                    gx[base + j] += (g[base + j] - y.data[base + j] * dot) * inv;
                }
            }
        };
    }
    return id;
}

VarId Tape::sqrt_elem(VarId x) {
    check(x);
    const Tensor& xv = nodes_[x].value;
    Tensor out = xv;
    for (float& v : out.data) {
        if (v < 0.0f) throw NumericError("sqrt_elem: negative input");
        v = std::sqrt(v);
    }
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "sqrt_elem", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const Tensor& y = t.nodes_[id].value;
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * 0.5f / y.data[i];
        };
    }
    return id;
}

VarId Tape::sum_all(VarId x) {
    check(x);
    Tensor out = Tensor::scalar(k::sum(nodes_[x].value));
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "sum_all", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const float g = t.nodes_[id].grad[0];
            float* gx = t.grad_ptr(x);
            const size_t n = t.nodes_[x].value.data.size();
            for (size_t i = 0; i < n; ++i) gx[i] += g;
        };
    }
    return id;
}

VarId Tape::mean_all(VarId x) {
    check(x);
    Tensor out = Tensor::scalar(k::mean(nodes_[x].value));
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "mean_all", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const size_t n = t.nodes_[x].value.data.size();
            const float g = t.nodes_[id].grad[0] / static_cast<float>(n);
            float* gx = t.grad_ptr(x);
            for (size_t i = 0; i < n; ++i) gx[i] += g;
        };
    }
    return id;
}

VarId Tape::rows_mean(VarId x) {
    check(x);
    Tensor m = k::rows_mean(nodes_[x].value);
    m.shape = {1, m.shape[0]};
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(m), "rows_mean", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const Tensor& xv = t.nodes_[x].value;
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            const int64_t rows = xv.shape[0], cols = xv.shape[1];
            const float inv = 1.0f / static_cast<float>(rows);
            for (int64_t i = 0; i < rows; ++i) {
                for (int64_t j = 0; j < cols; ++j) {
                    gx[static_cast<size_t>(i * cols + j)] += g[static_cast<size_t>(j)] * inv;
                }
            }
        };
    }
    return id;
}

VarId Tape::gather_rows(VarId table, std::vector<int> ids) {
    check(table);
    Tensor out = k::gather_rows(nodes_[table].value, ids);
    const bool rg = nodes_[table].requires_grad;
    VarId id = push(std::move(out), "gather_rows", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, table, ids = std::move(ids)](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gt = t.grad_ptr(table);
            const int64_t d = t.nodes_[table].value.shape[1];
            for (size_t i = 0; i < ids.size(); ++i) {
                const size_t src = i * static_cast<size_t>(d);
                const size_t dst = static_cast<size_t>(ids[i]) * static_cast<size_t>(d);
                for (int64_t j = 0; j < d; ++j) gt[dst + j] += g[src + j];
            }
        };
    }
    return id;
}

VarId Tape::slice_rows(VarId x, int64_t start, int64_t count) {
    check(x);
    const Tensor& xv = nodes_[x].value;
    kernels::require_rank(xv, 2, "slice_rows");
    if (start < 0 || count < 0 || start + count > xv.shape[0]) {
        throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         std::to_string(xv.shape[0]) + " rows");
    }
    const int64_t cols = xv.shape[1];
    Tensor out({count, cols});
    std::copy_n(xv.data.data() + start * cols, count * cols, out.data.data());
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "slice_rows", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x, start, count, cols](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            for (int64_t i = 0; i < count * cols; ++i) {
                gx[start * cols + i] += g[static_cast<size_t>(i)];
            }
        };
    }
    return id;
}

VarId Tape::slice_cols(VarId x, int64_t start, int64_t count) {
    check(x);
    const Tensor& xv = nodes_[x].value;
    kernels::require_rank(xv, 2, "slice_cols");
    if (start < 0 || count < 0 || start + count > xv.shape[1]) {
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         std::to_string(xv.shape[1]) + " cols");
    }
    const int64_t rows = xv.shape[0], cols = xv.shape[1];
    Tensor out({rows, count});
    for (int64_t i = 0; i < rows; ++i) {
        std::copy_n(xv.data.data() + i * cols + start, count, out.data.data() + i * count);
    }
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "slice_cols", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x, start, count, rows, cols](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            for (int64_t i = 0; i < rows; ++i) {
                for (int64_t j = 0; j < count; ++j) {
                    gx[i * cols + start + j] += g[static_cast<size_t>(i * count + j)];
                }
            }
        };
    }
    return id;
}

VarId Tape::concat_rows(const std::vector<VarId>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    int64_t rows = 0;
    const int64_t cols = nodes_[check(parts[0])].value.shape.size() == 2
                             ? nodes_[parts[0]].value.shape[1]
                             : -1;
    for (VarId p : parts) {
        const Tensor& v = nodes_[check(p)].value;
        kernels::require_rank(v, 2, "concat_rows");
        if (v.shape[1] != cols) {
            throw ShapeError("concat_rows: width mismatch " + std::to_string(v.shape[1]) +
                             " vs " + std::to_string(cols));
        }
        rows += v.shape[0];
    }
    Tensor out({rows, cols});
    bool rg = false;
    int64_t r = 0;
    for (VarId p : parts) {
        const Tensor& v = nodes_[p].value;
        std::copy_n(v.data.data(), v.data.size(), out.data.data() + r * cols);
        r += v.shape[0];
        rg = rg || nodes_[p].requires_grad;
    }
    VarId id = push(std::move(out), "concat_rows", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, parts, cols](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            int64_t r2 = 0;
            for (VarId p : parts) {
                const int64_t n = t.nodes_[p].value.shape[0] * cols;
                if (float* gp = t.grad_ptr(p)) {
                    for (int64_t i = 0; i < n; ++i) gp[i] += g[static_cast<size_t>(r2 + i)];
                }
                r2 += n;
            }
        };
    }
    return id;
}

VarId Tape::concat_cols(const std::vector<VarId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int64_t rows = nodes_[check(parts[0])].value.shape.size() == 2
                             ? nodes_[parts[0]].value.shape[0]
                             : -1;
    int64_t cols = 0;
    for (VarId p : parts) {
        const Tensor& v = nodes_[check(p)].value;
        kernels::require_rank(v, 2, "concat_cols");
        if (v.shape[0] != rows) {
            throw ShapeError("concat_cols: row mismatch " + std::to_string(v.shape[0]) + " vs " +
                             std::to_string(rows));
        }
        cols += v.shape[1];
    }
    Tensor out({rows, cols});
    bool rg = false;
    int64_t c = 0;
    for (VarId p : parts) {
        const Tensor& v = nodes_[p].value;
        for (int64_t i = 0; i < rows; ++i) {
            std::copy_n(v.data.data() + i * v.shape[1], v.shape[1],
                        out.data.data() + i * cols + c);
        }
        c += v.shape[1];
        rg = rg || nodes_[p].requires_grad;
    }
    VarId id = push(std::move(out), "concat_cols", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, parts, rows, cols](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            int64_t c2 = 0;
            for (VarId p : parts) {
                const int64_t w = t.nodes_[p].value.shape[1];
                if (float* gp = t.grad_ptr(p)) {
                    for (int64_t i = 0; i < rows; ++i) {
                        for (int64_t j = 0; j < w; ++j) {
                            gp[i * w + j] += g[static_cast<size_t>(i * cols + c2 + j)];
                        }
                    }
                }
                c2 += w;
            }
        };
    }
    return id;
}

VarId Tape::reshape(VarId x, std::vector<int64_t> shape) {
    check(x);
    const Tensor& xv = nodes_[x].value;
    if (Tensor::numel_of(shape) != xv.numel()) {
        throw ShapeError("reshape: cannot view " + Tensor::shape_str(xv.shape) + " as " +
                         Tensor::shape_str(shape));
    }
    Tensor out = xv;
    out.shape = std::move(shape);
    const bool rg = nodes_[x].requires_grad;
    VarId id = push(std::move(out), "reshape", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, x](Tape& t) {
            const std::vector<float>& g = t.nodes_[id].grad;
            float* gx = t.grad_ptr(x);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
    }
    return id;
}

VarId Tape::mse(VarId a, VarId b) {
    check(a), check(b);
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    kernels::require_same_shape(av, bv, "mse");
    if (av.data.empty()) throw ShapeError("mse: empty inputs");
    float acc = 0.0f;
    for (size_t i = 0; i < av.data.size(); ++i) {
        const float d = av.data[i] - bv.data[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<float>(av.data.size()));
    const bool rg = nodes_[a].requires_grad || nodes_[b].requires_grad;
    VarId id = push(std::move(out), "mse", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, a, b](Tape& t) {
            const Tensor& av2 = t.nodes_[a].value;
            const Tensor& bv2 = t.nodes_[b].value;
            const float g = t.nodes_[id].grad[0] * 2.0f / static_cast<float>(av2.data.size());
            float* ga = t.grad_ptr(a);
            float* gb = t.grad_ptr(b);
            for (size_t i = 0; i < av2.data.size(); ++i) {
                const float d = g * (av2.data[i] - bv2.data[i]);
                if (ga) ga[i] += d;
                if (gb) gb[i] -= d;
            }
        };
    }
    return id;
}

VarId Tape::cross_entropy(VarId logits, std::vector<int> targets) {
    check(logits);
    Tensor probs;
    const float nll = k::cross_entropy_rows(nodes_[logits].value, targets, &probs);
    Tensor out = Tensor::scalar(nll);
    const bool rg = nodes_[logits].requires_grad;
    VarId id = push(std::move(out), "cross_entropy", rg, nullptr);
    if (rg) {
        nodes_[id].backprop = [id, logits, targets = std::move(targets), probs](Tape& t) {
            const float g = t.nodes_[id].grad[0] / static_cast<float>(targets.size());
            float* gl = t.grad_ptr(logits);
            const int64_t rows = probs.shape[0], cols = probs.shape[1];
            for (int64_t i = 0; i < rows; ++i) {
                const size_t base = static_cast<size_t>(i * cols);
                for (int64_t j = 0; j < cols; ++j) gl[base + j] += g * probs.data[base + j];
                gl[base + static_cast<size_t>(targets[static_cast<size_t>(i)])] -= g;
            }
        };
    }
    return id;
}

}  // namespace lbridge
