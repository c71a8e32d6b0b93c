#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "graphonomy/errors.hpp"

namespace graphonomy::num {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

// Dense row-major tensor with tape-based reverse-mode differentiation.
// A Tensor is a cheap handle onto a shared node; ops build new nodes whose
// backward closures accumulate into their parents' grad buffers. Values are
// immutable once an op has produced them, except for in-place optimizer
// updates on leaf parameters.
template <typename S>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<S> value;
        std::vector<S> grad; // empty until first needed; value-sized afterwards
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;

        std::vector<S>& grad_buffer() {
            if (grad.empty()) grad.assign(value.size(), S(0));
            return grad;
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape) { return full(std::move(shape), S(0)); }

    static Tensor full(Shape shape, S fill) {
        check_shape(shape);
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->value.assign(shape_numel(t.node_->shape), fill);
        return t;
    }

    static Tensor from(Shape shape, std::vector<S> data) {
        check_shape(shape);
        if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
            throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                                 std::to_string(data.size()) + " values");
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(data);
        return t;
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

    const std::vector<S>& values() const { return node_->value; }
    std::vector<S>& mutable_values() { return node_->value; }
    const S* data() const { return node_->value.data(); }
    S* data() { return node_->value.data(); }

    S item() const {
        if (size() != 1) throw UsageError("item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->value[0];
    }

    // 2-D accessors (row-major).
    S at(std::int64_t r, std::int64_t c) const { return node_->value[static_cast<std::size_t>(r * dim(1) + c)]; }
    S& at(std::int64_t r, std::int64_t c) { return node_->value[static_cast<std::size_t>(r * dim(1) + c)]; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<S>& grad() const { return node_->grad; }
    std::vector<S>& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }

    bool all_finite() const {
        for (S v : node_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void ensure_finite(const std::string& context) const {
        if (!all_finite()) throw NumericError(context + ": non-finite value detected");
    }

    // Same node handle (aliasing) comparison.
    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    std::shared_ptr<Node> node() const { return node_; }

    // --- op construction helpers ------------------------------------------

    static Tensor make_op(Shape shape, std::vector<S> value, std::vector<Tensor> parents,
                          std::function<void(Node&)> backward_fn) {
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(value);
        bool needs = false;
        for (const auto& p : parents) needs = needs || p.node_->requires_grad;
        if (needs) {
            t.node_->requires_grad = true;
            t.node_->parents.reserve(parents.size());
            for (auto& p : parents) t.node_->parents.push_back(p.node_);
            t.node_->backward_fn = std::move(backward_fn);
        }
        return t;
    }

private:
    static void check_shape(const Shape& shape) {
        if (shape.empty()) throw DimensionError("tensor: empty shape");
        for (auto d : shape)
            if (d <= 0) throw DimensionError("tensor: non-positive extent in " + shape_str(shape));
    }

    std::shared_ptr<Node> node_;
};

// Reverse-mode sweep from a scalar loss. Repeated calls without zeroing
// accumulate into existing grad buffers by design; training loops zero
// parameter grads explicitly between steps.
template <typename S>
void backward(Tensor<S> loss) {
    if (loss.size() != 1)
        throw UsageError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    using Node = typename Tensor<S>::Node;
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS; child appears after all ancestors it feeds.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto& seed = loss.node()->grad_buffer();
    seed[0] += S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// --- elementwise ------------------------------------------------------------

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "add");
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    auto an = a.node(); auto bn = b.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](auto& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "sub");
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    auto an = a.node(); auto bn = b.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](auto& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    require_same_shape(a, b, "mul");
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    auto an = a.node(); auto bn = b.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](auto& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            const auto& vb = bn->value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            const auto& va = an->value;
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
    std::vector<S> out(a.values());
    for (auto& v : out) v *= c;
    auto an = a.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a}, [an, c](auto& self) {
        auto& ga = an->grad_buffer();
        const auto& g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
}

// Broadcast add of a length-C row vector onto every row of [R x C].
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 1 || a.dim(1) != b.dim(0))
        throw DimensionError("add_rowvec: incompatible " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::int64_t rows = a.dim(0), cols = a.dim(1);
    std::vector<S> out(a.values());
    const S* pb = b.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        S* po = out.data() + r * cols;
        for (std::int64_t c = 0; c < cols; ++c) po[c] += pb[c];
    }
    auto an = a.node(); auto bn = b.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, b}, [an, bn, rows, cols](auto& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t c = 0; c < cols; ++c)
                    gb[static_cast<std::size_t>(c)] += g[static_cast<std::size_t>(r * cols + c)];
        }
    });
}

// --- linear algebra ----------------------------------------------------------

namespace detail {

// C[MxP] += A[MxK] * B[KxP]; ikj order so the inner loop streams rows of B.
template <typename S>
void gemm_acc(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t p) {
    for (std::int64_t i = 0; i < m; ++i) {
        S* crow = c + i * p;
        const S* arow = a + i * k;
        for (std::int64_t l = 0; l < k; ++l) {
            const S av = arow[l];
            if (av == S(0)) continue;
            const S* brow = b + l * p;
            for (std::int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[MxP] += A^T[MxK(strided)] * B, where A is stored [K x M].
template <typename S>
void gemm_at_b_acc(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t p) {
    for (std::int64_t l = 0; l < k; ++l) {
        const S* arow = a + l * m;
        const S* brow = b + l * p;
        for (std::int64_t i = 0; i < m; ++i) {
            const S av = arow[i];
            if (av == S(0)) continue;
            S* crow = c + i * p;
            for (std::int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[MxP] += A[MxK] * B^T, where B is stored [P x K].
template <typename S>
void gemm_a_bt_acc(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k, std::int64_t p) {
    for (std::int64_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        S* crow = c + i * p;
        for (std::int64_t j = 0; j < p; ++j) {
            const S* brow = b + j * k;
            S acc = S(0);
            for (std::int64_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

} // namespace detail

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    std::vector<S> out(static_cast<std::size_t>(m * p), S(0));
    detail::gemm_acc(a.data(), b.data(), out.data(), m, k, p);
    auto an = a.node(); auto bn = b.node();
    return Tensor<S>::make_op({m, p}, std::move(out), {a, b}, [an, bn, m, k, p](auto& self) {
        const S* g = self.grad.data();
        if (an->requires_grad) // dA = dC * B^T
            detail::gemm_a_bt_acc(g, bn->value.data(), an->grad_buffer().data(), m, p, k);
        if (bn->requires_grad) // dB = A^T * dC
            detail::gemm_at_b_acc(an->value.data(), g, bn->grad_buffer().data(), k, m, p);
    });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
    if (a.rank() != 2) throw DimensionError("transpose: need rank-2, got " + shape_str(a.shape()));
    const std::int64_t r = a.dim(0), c = a.dim(1);
    std::vector<S> out(static_cast<std::size_t>(r * c));
    const S* pa = a.data();
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j * r + i)] = pa[i * c + j];
    auto an = a.node();
    return Tensor<S>::make_op({c, r}, std::move(out), {a}, [an, r, c](auto& self) {
        auto& ga = an->grad_buffer();
        const auto& g = self.grad;
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
                ga[static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(j * r + i)];
    });
}

// --- nonlinearities and reductions -------------------------------------------

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
    std::vector<S> out(a.values());
    for (auto& v : out)
        if (v < S(0)) v = S(0);
    auto an = a.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a}, [an](auto& self) {
        auto& ga = an->grad_buffer();
        const auto& g = self.grad;
        const auto& va = an->value;
        // Subgradient at 0 is 0.
        for (std::size_t i = 0; i < g.size(); ++i)
            if (va[i] > S(0)) ga[i] += g[i];
    });
}

// Numerically stable softmax along `axis`.
template <typename S>
Tensor<S> softmax(const Tensor<S>& a, int axis) {
    if (axis < 0 || axis >= a.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(a.shape()));
    const std::int64_t n = a.dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);
    for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);

    std::vector<S> out(a.values());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            S* base = out.data() + o * n * inner + in;
            S mx = base[0];
            for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, base[j * inner]);
            S total = S(0);
            for (std::int64_t j = 0; j < n; ++j) {
                S e = std::exp(base[j * inner] - mx);
                base[j * inner] = e;
                total += e;
            }
            const S inv = S(1) / total;
            for (std::int64_t j = 0; j < n; ++j) base[j * inner] *= inv;
        }
    }
    auto an = a.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a}, [an, outer, n, inner](auto& self) {
        auto& ga = an->grad_buffer();
        const auto& g = self.grad;
        const auto& y = self.value;
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::size_t base = static_cast<std::size_t>(o * n * inner + in);
                S dot = S(0);
                for (std::int64_t j = 0; j < n; ++j) {
                    const std::size_t idx = base + static_cast<std::size_t>(j * inner);
                    dot += g[idx] * y[idx];
                }
                for (std::int64_t j = 0; j < n; ++j) {
                    const std::size_t idx = base + static_cast<std::size_t>(j * inner);
                    ga[idx] += y[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
    S total = S(0);
    for (S v : a.values()) total += v;
    auto an = a.node();
    return Tensor<S>::make_op({1}, {total}, {a}, [an](auto& self) {
        auto& ga = an->grad_buffer();
        const S g = self.grad[0];
        for (auto& v : ga) v += g;
    });
}

// Column sums of [R x C] -> [C].
template <typename S>
Tensor<S> colsum(const Tensor<S>& a) {
    if (a.rank() != 2) throw DimensionError("colsum: need rank-2, got " + shape_str(a.shape()));
    const std::int64_t rows = a.dim(0), cols = a.dim(1);
    std::vector<S> out(static_cast<std::size_t>(cols), S(0));
    const S* pa = a.data();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) out[static_cast<std::size_t>(c)] += pa[r * cols + c];
    auto an = a.node();
    return Tensor<S>::make_op({cols}, std::move(out), {a}, [an, rows, cols](auto& self) {
        auto& ga = an->grad_buffer();
        const auto& g = self.grad;
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c)
                ga[static_cast<std::size_t>(r * cols + c)] += g[static_cast<std::size_t>(c)];
    });
}

// Divide each row of a [R x C] by max(m[r], eps). Gradient into m is masked
// where the clamp is active.
template <typename S>
Tensor<S> div_rows_clamped(const Tensor<S>& a, const Tensor<S>& m, S eps) {
    if (a.rank() != 2 || m.rank() != 1 || m.dim(0) != a.dim(0))
        throw DimensionError("div_rows_clamped: incompatible " + shape_str(a.shape()) + " vs " +
                             shape_str(m.shape()));
    const std::int64_t rows = a.dim(0), cols = a.dim(1);
    std::vector<S> out(a.values());
    const S* pm = m.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const S d = std::max(pm[r], eps);
        S* po = out.data() + r * cols;
        for (std::int64_t c = 0; c < cols; ++c) po[c] /= d;
    }
    auto an = a.node(); auto mn = m.node();
    return Tensor<S>::make_op(a.shape(), std::move(out), {a, m}, [an, mn, rows, cols, eps](auto& self) {
        const auto& g = self.grad;
        const auto& vm = mn->value;
        if (an->requires_grad) {
            auto& ga = an->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r) {
                const S inv = S(1) / std::max(vm[static_cast<std::size_t>(r)], eps);
                for (std::int64_t c = 0; c < cols; ++c)
                    ga[static_cast<std::size_t>(r * cols + c)] += g[static_cast<std::size_t>(r * cols + c)] * inv;
            }
        }
        if (mn->requires_grad) {
            auto& gm = mn->grad_buffer();
            const auto& va = an->value;
            for (std::int64_t r = 0; r < rows; ++r) {
                const S mv = vm[static_cast<std::size_t>(r)];
                if (mv <= eps) continue;
                S acc = S(0);
                for (std::int64_t c = 0; c < cols; ++c) {
                    const std::size_t idx = static_cast<std::size_t>(r * cols + c);
                    acc += g[idx] * va[idx];
                }
                gm[static_cast<std::size_t>(r)] -= acc / (mv * mv);
            }
        }
    });
}

// Pairwise cosine similarity between rows: out[i][j] = cos(a_i, b_j).
// A zero-norm row yields similarity 0 with zero gradient for its entries.
template <typename S>
Tensor<S> cosine_rows(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw DimensionError("cosine_rows: incompatible " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::int64_t na = a.dim(0), nb = b.dim(0), d = a.dim(1);
    std::vector<S> norm_a(static_cast<std::size_t>(na)), norm_b(static_cast<std::size_t>(nb));
    for (std::int64_t i = 0; i < na; ++i) {
        S s = S(0);
        const S* row = a.data() + i * d;
        for (std::int64_t k = 0; k < d; ++k) s += row[k] * row[k];
        norm_a[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    for (std::int64_t j = 0; j < nb; ++j) {
        S s = S(0);
        const S* row = b.data() + j * d;
        for (std::int64_t k = 0; k < d; ++k) s += row[k] * row[k];
        norm_b[static_cast<std::size_t>(j)] = std::sqrt(s);
    }
    std::vector<S> out(static_cast<std::size_t>(na * nb), S(0));
    for (std::int64_t i = 0; i < na; ++i) {
        const S* ra = a.data() + i * d;
        for (std::int64_t j = 0; j < nb; ++j) {
            const S denom = norm_a[static_cast<std::size_t>(i)] * norm_b[static_cast<std::size_t>(j)];
            if (denom == S(0)) continue;
            const S* rb = b.data() + j * d;
            S dot = S(0);
            for (std::int64_t k = 0; k < d; ++k) dot += ra[k] * rb[k];
            out[static_cast<std::size_t>(i * nb + j)] = dot / denom;
        }
    }
    auto an = a.node(); auto bn = b.node();
    return Tensor<S>::make_op({na, nb}, std::move(out), {a, b},
                              [an, bn, na, nb, d, norm_a, norm_b](auto& self) {
        const auto& g = self.grad;
        const auto& cv = self.value;
        const auto& va = an->value;
        const auto& vb = bn->value;
        for (std::int64_t i = 0; i < na; ++i) {
            const S ni = norm_a[static_cast<std::size_t>(i)];
            if (ni == S(0)) continue;
            for (std::int64_t j = 0; j < nb; ++j) {
                const S njn = norm_b[static_cast<std::size_t>(j)];
                if (njn == S(0)) continue;
                const std::size_t idx = static_cast<std::size_t>(i * nb + j);
                const S gij = g[idx];
                if (gij == S(0)) continue;
                const S cij = cv[idx];
                const S inv = S(1) / (ni * njn);
                if (an->requires_grad) {
                    auto& ga = an->grad_buffer();
                    for (std::int64_t k = 0; k < d; ++k)
                        ga[static_cast<std::size_t>(i * d + k)] +=
                            gij * (vb[static_cast<std::size_t>(j * d + k)] * inv -
                                   cij * va[static_cast<std::size_t>(i * d + k)] / (ni * ni));
                }
                if (bn->requires_grad) {
                    auto& gb = bn->grad_buffer();
                    for (std::int64_t k = 0; k < d; ++k)
                        gb[static_cast<std::size_t>(j * d + k)] +=
                            gij * (va[static_cast<std::size_t>(i * d + k)] * inv -
                                   cij * vb[static_cast<std::size_t>(j * d + k)] / (njn * njn));
                }
            }
        }
    });
}

// --- classification loss ------------------------------------------------------

inline constexpr std::int64_t kIgnoreNone = -1;

// Mean negative log-softmax over non-ignored rows of [P x K].
// Zero non-ignored rows yields loss 0 with zero gradient.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<std::int64_t>& labels,
                        std::int64_t ignore_index = kIgnoreNone) {
    if (logits.rank() != 2)
        throw DimensionError("cross_entropy: logits must be rank-2, got " + shape_str(logits.shape()));
    const std::int64_t p = logits.dim(0), k = logits.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != p)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(p) + " rows");
    std::int64_t scored = 0;
    double total = 0.0;
    const S* pl = logits.data();
    for (std::int64_t r = 0; r < p; ++r) {
        const std::int64_t lab = labels[static_cast<std::size_t>(r)];
        if (lab == ignore_index) continue;
        if (lab < 0 || lab >= k)
            throw DataError("cross_entropy: label " + std::to_string(lab) + " out of range [0," +
                            std::to_string(k) + ") at pixel " + std::to_string(r));
        const S* row = pl + r * k;
        S mx = row[0];
        for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, row[c]);
        double lse = 0.0;
        for (std::int64_t c = 0; c < k; ++c) lse += std::exp(static_cast<double>(row[c] - mx));
        lse = std::log(lse) + static_cast<double>(mx);
        total += lse - static_cast<double>(row[lab]);
        ++scored;
    }
    const S loss = scored ? static_cast<S>(total / static_cast<double>(scored)) : S(0);
    auto ln = logits.node();
    auto labels_copy = labels;
    return Tensor<S>::make_op(
        {1}, {loss}, {logits},
        [ln, labels_copy = std::move(labels_copy), ignore_index, p, k, scored](auto& self) {
            if (scored == 0) return;
            auto& gl = ln->grad_buffer();
            const auto& v = ln->value;
            const S g = self.grad[0] / static_cast<S>(scored);
            for (std::int64_t r = 0; r < p; ++r) {
                const std::int64_t lab = labels_copy[static_cast<std::size_t>(r)];
                if (lab == ignore_index) continue;
                const S* row = v.data() + r * k;
                S mx = row[0];
                for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, row[c]);
                S total_exp = S(0);
                for (std::int64_t c = 0; c < k; ++c) total_exp += std::exp(row[c] - mx);
                const S inv = S(1) / total_exp;
                for (std::int64_t c = 0; c < k; ++c) {
                    S soft = std::exp(row[c] - mx) * inv;
                    if (c == lab) soft -= S(1);
                    gl[static_cast<std::size_t>(r * k + c)] += g * soft;
                }
            }
        });
}

// --- structure ops -------------------------------------------------------------

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, std::int64_t r0, std::int64_t r1) {
    if (a.rank() != 2 || r0 < 0 || r1 > a.dim(0) || r0 >= r1)
        throw DimensionError("slice_rows: invalid range [" + std::to_string(r0) + "," +
                             std::to_string(r1) + ") for " + shape_str(a.shape()));
    const std::int64_t cols = a.dim(1), rows = r1 - r0;
    std::vector<S> out(a.data() + r0 * cols, a.data() + r1 * cols);
    auto an = a.node();
    return Tensor<S>::make_op({rows, cols}, std::move(out), {a}, [an, r0, rows, cols](auto& self) {
        auto& ga = an->grad_buffer();
        const auto& g = self.grad;
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c)
                ga[static_cast<std::size_t>((r0 + r) * cols + c)] += g[static_cast<std::size_t>(r * cols + c)];
    });
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw UsageError("concat_rows: empty input");
    const std::int64_t cols = parts[0].dim(1);
    std::int64_t rows = 0;
    for (const auto& t : parts) {
        if (t.rank() != 2 || t.dim(1) != cols)
            throw DimensionError("concat_rows: mismatched column counts");
        rows += t.dim(0);
    }
    std::vector<S> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    for (const auto& t : parts) out.insert(out.end(), t.values().begin(), t.values().end());
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& t : parts) {
        offsets.push_back(off);
        off += t.dim(0);
    }
    std::vector<std::shared_ptr<typename Tensor<S>::Node>> nodes;
    for (const auto& t : parts) nodes.push_back(t.node());
    return Tensor<S>::make_op({rows, cols}, std::move(out), parts,
                              [nodes, offsets, cols](auto& self) {
                                  const auto& g = self.grad;
                                  for (std::size_t i = 0; i < nodes.size(); ++i) {
                                      if (!nodes[i]->requires_grad) continue;
                                      auto& gp = nodes[i]->grad_buffer();
                                      const std::size_t base =
                                          static_cast<std::size_t>(offsets[i] * cols);
                                      for (std::size_t j = 0; j < gp.size(); ++j) gp[j] += g[base + j];
                                  }
                              });
}

} // namespace graphonomy::num
