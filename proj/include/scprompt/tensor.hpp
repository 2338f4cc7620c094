#pragma once

// Dense float64 tensors with reverse-mode differentiation on an explicit
// tape. Only the primitives the transduction model needs are provided; all
// reductions run in a fixed order so results are reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "scprompt/common.hpp"

namespace scprompt {

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward touches it
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode>()) {}

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0, bool requires_grad = false)
        : node_(std::make_shared<TensorNode>()) {
        node_->shape = std::move(shape);
        node_->data.assign(count(node_->shape), fill);
        node_->requires_grad = requires_grad;
    }

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                            bool requires_grad = false) {
        if (count(shape) != data.size())
            throw DimensionError("data length " + std::to_string(data.size()) +
                                 " does not match shape product " +
                                 std::to_string(count(shape)));
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t numel() const { return node_->data.size(); }

    std::size_t rows() const { return rank() == 2 ? dim(0) : (rank() == 1 ? 1 : 0); }
    std::size_t cols() const { return rank() == 2 ? dim(1) : (rank() == 1 ? dim(0) : 0); }

    double* data() { return node_->data.data(); }
    const double* data() const { return node_->data.data(); }
    std::vector<double>& data_vec() { return node_->data; }
    const std::vector<double>& data_vec() const { return node_->data; }

    double at(std::size_t i) const { return node_->data[i]; }
    double& at(std::size_t i) { return node_->data[i]; }
    double at(std::size_t i, std::size_t j) const { return node_->data[i * dim(1) + j]; }
    double& at(std::size_t i, std::size_t j) { return node_->data[i * dim(1) + j]; }

    double value() const {
        if (numel() != 1) throw ContractError("value() on non-scalar tensor");
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<double>& grad() { return ensure_grad(); }
    const std::vector<double>& grad_vec() const { return node_->grad; }
    std::vector<double>& ensure_grad() {
        if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
        return node_->grad;
    }
    void clear_grad() { node_->grad.clear(); }

    bool all_finite() const {
        for (double v : node_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Deep copy; tensors otherwise share their storage node.
    Tensor clone() const {
        Tensor t;
        t.node_->shape = node_->shape;
        t.node_->data = node_->data;
        t.node_->requires_grad = node_->requires_grad;
        return t;
    }

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::shared_ptr<TensorNode> node_;
};

// Ordered record of backward closures; replaying in reverse visits every
// node after all of its consumers because ops append in forward order.
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    void run_backward() {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
};

inline void backward(const Tensor& loss, Tape& tape) {
    if (loss.numel() != 1) throw ContractError("backward requires a scalar loss");
    loss.node()->grad.assign(1, 1.0);
    tape.run_backward();
}

namespace detail {

// C(m×n) += A(m×k) · B(k×n)
inline void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C(m×n) += A(m×k) · B(n×k)^T
inline void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C(k×n) += A(m×k)^T · B(m×n)
inline void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

inline void require_matrix(const Tensor& t, const char* name) {
    if (t.rank() != 2) throw DimensionError(std::string(name) + " must be rank-2");
}

inline bool out_grad_missing(const std::shared_ptr<TensorNode>& out) {
    return out->grad.empty();
}

inline std::vector<double>& acc_grad(const std::shared_ptr<TensorNode>& n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
    return n->grad;
}

}  // namespace detail

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul lhs");
    detail::require_matrix(b, "matmul rhs");
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul inner dims " + std::to_string(a.dim(1)) + " vs " +
                             std::to_string(b.dim(0)));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    detail::mm_nn_acc(a.data(), b.data(), out.data(), m, k, n);
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();
            if (an->requires_grad)
                detail::mm_nt_acc(g, bn->data.data(), detail::acc_grad(an).data(), m, n, k);
            if (bn->requires_grad)
                detail::mm_tn_acc(an->data.data(), g, detail::acc_grad(bn).data(), m, k, n);
        });
    }
    return out;
}

// a(m×k) · b(n×k)^T without materialising the transpose.
inline Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul_nt lhs");
    detail::require_matrix(b, "matmul_nt rhs");
    if (a.dim(1) != b.dim(1))
        throw DimensionError("matmul_nt inner dims " + std::to_string(a.dim(1)) + " vs " +
                             std::to_string(b.dim(1)));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out({m, n});
    detail::mm_nt_acc(a.data(), b.data(), out.data(), m, k, n);
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();  // m×n
            if (an->requires_grad)
                detail::mm_nn_acc(g, bn->data.data(), detail::acc_grad(an).data(), m, n, k);
            if (bn->requires_grad)
                detail::mm_tn_acc(g, an->data.data(), detail::acc_grad(bn).data(), m, n, k);
        });
    }
    return out;
}

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("add shape mismatch");
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();
            if (an->requires_grad) {
                auto& ga = detail::acc_grad(an);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::acc_grad(bn);
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

// x(m×n) + row(n) broadcast over rows; the bias-add.
inline Tensor add_row_broadcast(Tape* tape, const Tensor& x, const Tensor& row) {
    detail::require_matrix(x, "add_row_broadcast lhs");
    if (row.rank() != 1 || row.dim(0) != x.dim(1))
        throw DimensionError("broadcast row length mismatch");
    const std::size_t m = x.dim(0), n = x.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + row.at(j);
    if (tape && (x.requires_grad() || row.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), rn = row.node(), on = out.node(), m, n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();
            if (xn->requires_grad) {
                auto& gx = detail::acc_grad(xn);
                for (std::size_t i = 0; i < m * n; ++i) gx[i] += g[i];
            }
            if (rn->requires_grad) {
                auto& gr = detail::acc_grad(rn);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
            }
        });
    }
    return out;
}

inline Tensor scale(Tape* tape, const Tensor& x, double alpha) {
    Tensor out(x.shape());
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = alpha * x.data()[i];
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), on = out.node(), alpha, n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();
            auto& gx = detail::acc_grad(xn);
            for (std::size_t i = 0; i < n; ++i) gx[i] += alpha * g[i];
        });
    }
    return out;
}

// Elementwise product with a constant mask (no gradient into the mask).
inline Tensor mul_mask(Tape* tape, const Tensor& x, const std::vector<double>& mask) {
    if (mask.size() != x.numel()) throw DimensionError("mask size mismatch");
    Tensor out(x.shape());
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * mask[i];
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), on = out.node(), mask, n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();
            auto& gx = detail::acc_grad(xn);
            for (std::size_t i = 0; i < n; ++i) gx[i] += mask[i] * g[i];
        });
    }
    return out;
}

namespace detail {

inline void check_lastdim(const Tensor& x, const char* op) {
    if (x.rank() == 0 || x.numel() == 0 || x.shape().back() == 0)
        throw DimensionError(std::string(op) + " on empty tensor");
}

}  // namespace detail

enum class AttentionMask { none, causal };

// Softmax over the last dimension with max-subtraction. An optional causal
// mask restricts row i to columns j <= i (rank-2 only).
inline Tensor softmax_lastdim(Tape* tape, const Tensor& x,
                              AttentionMask mask = AttentionMask::none) {
    detail::check_lastdim(x, "softmax");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    if (mask == AttentionMask::causal && (x.rank() != 2))
        throw DimensionError("causal softmax requires a rank-2 tensor");
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x.data() + r * n;
        double* oi = out.data() + r * n;
        const std::size_t limit = mask == AttentionMask::causal ? std::min(r + 1, n) : n;
        double mx = xi[0];
        for (std::size_t j = 1; j < limit; ++j) mx = std::max(mx, xi[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < limit; ++j) {
            oi[j] = std::exp(xi[j] - mx);
            denom += oi[j];
        }
        for (std::size_t j = 0; j < limit; ++j) oi[j] /= denom;
        for (std::size_t j = limit; j < n; ++j) oi[j] = 0.0;
    }
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), on = out.node(), rows, n] {
            if (detail::out_grad_missing(on)) return;
            auto& gx = detail::acc_grad(xn);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = on->data.data() + r * n;
                const double* gy = on->grad.data() + r * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                double* gxi = gx.data() + r * n;
                for (std::size_t j = 0; j < n; ++j) gxi[j] += y[j] * (gy[j] - dot);
            }
        });
    }
    return out;
}

inline Tensor log_softmax_lastdim(Tape* tape, const Tensor& x) {
    detail::check_lastdim(x, "log_softmax");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x.data() + r * n;
        double* oi = out.data() + r * n;
        double mx = xi[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) denom += std::exp(xi[j] - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < n; ++j) oi[j] = xi[j] - lse;
    }
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), on = out.node(), rows, n] {
            if (detail::out_grad_missing(on)) return;
            auto& gx = detail::acc_grad(xn);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = on->data.data() + r * n;
                const double* gy = on->grad.data() + r * n;
                double sum = 0.0;
                for (std::size_t j = 0; j < n; ++j) sum += gy[j];
                double* gxi = gx.data() + r * n;
                for (std::size_t j = 0; j < n; ++j) gxi[j] += gy[j] - std::exp(y[j]) * sum;
            }
        });
    }
    return out;
}

// Per-slice normalisation over the last dim, then affine. Variance uses the
// population convention; epsilon 1e-5 sits inside the square root.
inline Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    detail::check_lastdim(x, "layer_norm");
    const std::size_t n = x.shape().back();
    if (gain.numel() != n || bias.numel() != n)
        throw DimensionError("layer_norm gain/bias must match last dim");
    constexpr double kEps = 1e-5;
    const std::size_t rows = x.numel() / n;
    Tensor out(x.shape());
    std::vector<double> inv_std(rows), means(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x.data() + r * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xi[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + kEps);
        means[r] = mean;
        inv_std[r] = is;
        double* oi = out.data() + r * n;
        for (std::size_t j = 0; j < n; ++j)
            oi[j] = gain.data()[j] * ((xi[j] - mean) * is) + bias.data()[j];
    }
    if (tape && (x.requires_grad() || gain.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node(), rows, n,
                      means, inv_std] {
            if (detail::out_grad_missing(on)) return;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xi = xn->data.data() + r * n;
                const double* gy = on->grad.data() + r * n;
                const double is = inv_std[r];
                const double mean = means[r];
                double sum_gxhat = 0.0, sum_gxhat_xhat = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double xhat = (xi[j] - mean) * is;
                    const double gxh = gy[j] * gn->data[j];
                    sum_gxhat += gxh;
                    sum_gxhat_xhat += gxh * xhat;
                }
                if (xn->requires_grad) {
                    auto& gx = detail::acc_grad(xn);
                    double* gxi = gx.data() + r * n;
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double xhat = (xi[j] - mean) * is;
                        const double gxh = gy[j] * gn->data[j];
                        gxi[j] += is * (gxh - inv_n * sum_gxhat - inv_n * xhat * sum_gxhat_xhat);
                    }
                }
                if (gn->requires_grad) {
                    auto& gg = detail::acc_grad(gn);
                    for (std::size_t j = 0; j < n; ++j)
                        gg[j] += gy[j] * ((xi[j] - mean) * is);
                }
                if (bn->requires_grad) {
                    auto& gb = detail::acc_grad(bn);
                    for (std::size_t j = 0; j < n; ++j) gb[j] += gy[j];
                }
            }
        });
    }
    return out;
}

// Gaussian error linear unit; smooth, so finite-difference checks behave.
inline Tensor gelu(Tape* tape, const Tensor& x) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    Tensor out(x.shape());
    const std::size_t n = x.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x.data()[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), on = out.node(), n] {
            if (detail::out_grad_missing(on)) return;
            auto& gx = detail::acc_grad(xn);
            for (std::size_t i = 0; i < n; ++i) {
                const double v = xn->data[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += on->grad[i] * (cdf + v * pdf);
            }
        });
    }
    return out;
}

// Row gather: out[i, :] = table[ids[i], :]. Backward scatter-adds.
inline Tensor gather_rows(Tape* tape, const Tensor& table, const std::vector<int>& ids) {
    detail::require_matrix(table, "gather table");
    const std::size_t n = table.dim(1);
    Tensor out({ids.size(), n});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.dim(0))
            throw DimensionError("gather id " + std::to_string(ids[i]) + " out of range");
        std::copy_n(table.data() + static_cast<std::size_t>(ids[i]) * n, n, out.data() + i * n);
    }
    if (tape && table.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([tn = table.node(), on = out.node(), ids, n] {
            if (detail::out_grad_missing(on)) return;
            auto& gt = detail::acc_grad(tn);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const double* g = on->grad.data() + i * n;
                double* row = gt.data() + static_cast<std::size_t>(ids[i]) * n;
                for (std::size_t j = 0; j < n; ++j) row[j] += g[j];
            }
        });
    }
    return out;
}

// Concatenate rank-2 tensors along the column axis.
inline Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const std::size_t m = parts[0].dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat part");
        if (p.dim(0) != m) throw DimensionError("concat_cols row mismatch");
        total += p.dim(1);
    }
    Tensor out({m, total});
    std::size_t off = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(p.data() + i * p.dim(1), p.dim(1), out.data() + i * total + off);
        off += p.dim(1);
        any_grad = any_grad || p.requires_grad();
    }
    if (tape && any_grad) {
        out.set_requires_grad(true);
        std::vector<std::shared_ptr<TensorNode>> nodes;
        nodes.reserve(parts.size());
        for (const auto& p : parts) nodes.push_back(p.node());
        tape->record([nodes, on = out.node(), m, total] {
            if (detail::out_grad_missing(on)) return;
            std::size_t off = 0;
            for (const auto& pn : nodes) {
                const std::size_t w = pn->shape[1];
                if (pn->requires_grad) {
                    auto& gp = detail::acc_grad(pn);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* g = on->grad.data() + i * total + off;
                        double* dst = gp.data() + i * w;
                        for (std::size_t j = 0; j < w; ++j) dst[j] += g[j];
                    }
                }
                off += w;
            }
        });
    }
    return out;
}

inline Tensor sum_all(Tape* tape, const Tensor& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += x.data()[i];
    Tensor out = Tensor::scalar(s);
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([xn = x.node(), on = out.node()] {
            if (detail::out_grad_missing(on)) return;
            const double g = on->grad[0];
            auto& gx = detail::acc_grad(xn);
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

// Negative log-likelihood of picked entries: -sum_t log_probs[t, targets[t]].
inline Tensor nll_pick(Tape* tape, const Tensor& log_probs, const std::vector<int>& targets) {
    detail::require_matrix(log_probs, "nll log_probs");
    if (targets.size() != log_probs.dim(0))
        throw DimensionError("nll target count mismatch");
    const std::size_t n = log_probs.dim(1);
    double loss = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= n)
            throw DimensionError("nll target out of range");
        loss -= log_probs.at(t, static_cast<std::size_t>(targets[t]));
    }
    Tensor out = Tensor::scalar(loss);
    if (tape && log_probs.requires_grad()) {
        out.set_requires_grad(true);
        tape->record([ln = log_probs.node(), on = out.node(), targets, n] {
            if (detail::out_grad_missing(on)) return;
            const double g = on->grad[0];
            auto& gl = detail::acc_grad(ln);
            for (std::size_t t = 0; t < targets.size(); ++t)
                gl[t * n + static_cast<std::size_t>(targets[t])] -= g;
        });
    }
    return out;
}

// Dot-product of two elementwise (used by tests for quadratic losses).
inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("mul shape mismatch");
    Tensor out(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        tape->record([an = a.node(), bn = b.node(), on = out.node(), n] {
            if (detail::out_grad_missing(on)) return;
            const double* g = on->grad.data();
            if (an->requires_grad) {
                auto& ga = detail::acc_grad(an);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::acc_grad(bn);
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * an->data[i];
            }
        });
    }
    return out;
}

}  // namespace scprompt
