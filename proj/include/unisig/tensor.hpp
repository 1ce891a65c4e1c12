#pragma once

// Minimal dense-tensor engine with reverse-mode differentiation.
// Row-major storage, scalar type templated (float default, double for
// gradient-check mode). Reduction order in every contraction is fixed
// (sequential over the contraction axis) so results are run-to-run
// deterministic at the bit level.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "unisig/common.hpp"

namespace unisig {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // lazily allocated, same length as data once touched
    bool requires_grad = false;
    bool on_graph = false;
    std::vector<std::shared_ptr<TensorNode<S>>> parents;
    std::function<void(TensorNode<S>&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), S(0));
    }
};

template <typename S = float>
class Tensor {
public:
    using Node = TensorNode<S>;

    Tensor() : node_(std::make_shared<Node>()) {}
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& shape) {
        Tensor t;
        t.node_->shape = shape;
        t.node_->data.assign(numel_of(shape), S(0));
        return t;
    }

    static Tensor full(const Shape& shape, S value) {
        Tensor t = zeros(shape);
        std::fill(t.node_->data.begin(), t.node_->data.end(), value);
        return t;
    }

    static Tensor from_data(const Shape& shape, std::vector<S> data) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ShapeError("from_data: " + shape_str(shape) + " needs " +
                             std::to_string(numel_of(shape)) + " values, got " +
                             std::to_string(data.size()));
        Tensor t;
        t.node_->shape = shape;
        t.node_->data = std::move(data);
        return t;
    }

    static Tensor scalar(S value) { return full({}, value); }

    static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0) {
        Tensor t = zeros(shape);
        for (auto& v : t.node_->data) v = static_cast<S>(rng.gauss() * stddev);
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
    int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(node_->shape.size()); }

    std::vector<S>& data() { return node_->data; }
    const std::vector<S>& data() const { return node_->data; }

    S item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return node_->data[0];
    }

    S& at(std::initializer_list<int64_t> idx) { return node_->data[flat_index(idx)]; }
    S at(std::initializer_list<int64_t> idx) const { return node_->data[flat_index(idx)]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool on_graph() const { return node_->on_graph; }

    Tensor& set_requires_grad(bool v = true) {
        node_->requires_grad = v;
        node_->on_graph = node_->on_graph || v;
        return *this;
    }

    // Gradient accumulated by the last backward pass; zeros if never touched.
    Tensor grad() const {
        Tensor g = zeros(shape());
        if (node_->grad.size() == node_->data.size()) g.node_->data = node_->grad;
        return g;
    }

    void zero_grad() { node_->grad.clear(); }

    // Copy of the values with no graph attached.
    Tensor detached() const {
        Tensor t;
        t.node_->shape = node_->shape;
        t.node_->data = node_->data;
        return t;
    }

    void backward() const {
        if (numel() != 1) throw GraphError("backward() requires a scalar loss");
        if (!node_->on_graph) throw GraphError("backward() on a tensor with no recorded graph");

        // Iterative post-order DFS over parents; order is fully determined by
        // the recorded parent lists, so repeated runs visit nodes identically.
        std::vector<Node*> topo;
        std::unordered_set<Node*> visited;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node* p = n->parents[next++].get();
                if (!visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                topo.push_back(n);
                stack.pop_back();
            }
        }

        node_->ensure_grad();
        node_->grad[0] += S(1);
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn) n->backward_fn(*n);
        }
    }

    std::shared_ptr<Node> node() const { return node_; }

private:
    int64_t flat_index(std::initializer_list<int64_t> idx) const {
        auto st = strides_of(node_->shape);
        if (idx.size() != st.size()) throw ShapeError("index rank mismatch");
        int64_t f = 0;
        size_t i = 0;
        for (int64_t v : idx) f += v * st[i++];
        return f;
    }

    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename S>
Tensor<S> make_result(Shape shape, std::vector<S> data,
                      std::vector<Tensor<S>> parents,
                      std::function<void(TensorNode<S>&)> backward_fn) {
    Tensor<S> out = Tensor<S>::from_data(std::move(shape), std::move(data));
    bool record = false;
    for (const auto& p : parents) record = record || p.on_graph();
    if (record) {
        auto n = out.node();
        n->on_graph = true;
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return out;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ----------------------------- elementwise -----------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<S> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& n) {
        if (an->on_graph) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->on_graph) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
        }
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<S> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& n) {
        if (an->on_graph) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        }
        if (bn->on_graph) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
        }
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<S> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<S>& n) {
        if (an->on_graph) {
            an->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->data[i];
        }
        if (bn->on_graph) {
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->data[i];
        }
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, double c) {
    std::vector<S> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>(x.data()[i] * c);
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, c](TensorNode<S>& n) {
        xn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) xn->grad[i] += static_cast<S>(n.grad[i] * c);
    });
}

// x[..., j] + v[j], broadcast over all leading axes.
template <typename S>
Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& v) {
    if (x.rank() < 1 || v.rank() != 1 || x.shape().back() != v.dim(0))
        throw ShapeError("add_bias: " + shape_str(x.shape()) + " + " + shape_str(v.shape()));
    int64_t n = v.dim(0);
    int64_t rows = x.numel() / n;
    std::vector<S> out(x.data().size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < n; ++j) out[r * n + j] = x.data()[r * n + j] + v.data()[j];
    auto xn = x.node(), vn = v.node();
    return detail::make_result<S>(x.shape(), std::move(out), {x, v},
                                  [xn, vn, rows, n](TensorNode<S>& nd) {
        if (xn->on_graph) {
            xn->ensure_grad();
            for (size_t i = 0; i < nd.grad.size(); ++i) xn->grad[i] += nd.grad[i];
        }
        if (vn->on_graph) {
            vn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < n; ++j) vn->grad[j] += nd.grad[r * n + j];
        }
    });
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    // tanh approximation
    const double k = std::sqrt(2.0 / M_PI);
    std::vector<S> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = x.data()[i];
        out[i] = static_cast<S>(0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v))));
    }
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, k](TensorNode<S>& n) {
        xn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double v = xn->data[i];
            double u = k * (v + 0.044715 * v * v * v);
            double t = std::tanh(u);
            double du = k * (1.0 + 3.0 * 0.044715 * v * v);
            double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
            xn->grad[i] += static_cast<S>(n.grad[i] * d);
        }
    });
}

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    S acc = S(0);
    for (S v : x.data()) acc += v;
    auto xn = x.node();
    return detail::make_result<S>({}, {acc}, {x}, [xn](TensorNode<S>& n) {
        xn->ensure_grad();
        for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += n.grad[0];
    });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ----------------------------- structure -----------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& shape) {
    if (numel_of(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    auto xn = x.node();
    return detail::make_result<S>(shape, x.data(), {x}, [xn](TensorNode<S>& n) {
        xn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) xn->grad[i] += n.grad[i];
    });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& axes) {
    int r = x.rank();
    if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = x.dim(axes[i]);
    auto in_st = strides_of(x.shape());
    auto out_st = strides_of(out_shape);
    std::vector<S> out(x.data().size());
    std::vector<int64_t> idx(r, 0);
    // out index -> in index mapping, computed by odometer walk over the output
    std::vector<int64_t> mapping(x.data().size());
    for (int64_t o = 0; o < static_cast<int64_t>(out.size()); ++o) {
        int64_t in_flat = 0;
        for (int i = 0; i < r; ++i) in_flat += idx[i] * in_st[axes[i]];
        mapping[o] = in_flat;
        out[o] = x.data()[in_flat];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    auto xn = x.node();
    auto map = std::make_shared<std::vector<int64_t>>(std::move(mapping));
    return detail::make_result<S>(out_shape, std::move(out), {x}, [xn, map](TensorNode<S>& n) {
        xn->ensure_grad();
        for (size_t o = 0; o < n.grad.size(); ++o) xn->grad[(*map)[o]] += n.grad[o];
    });
}

// New leading axis of extent n, contents replicated.
template <typename S>
Tensor<S> expand_lead(const Tensor<S>& x, int64_t n) {
    Shape out_shape;
    out_shape.push_back(n);
    for (int64_t e : x.shape()) out_shape.push_back(e);
    int64_t inner = x.numel();
    std::vector<S> out(static_cast<size_t>(n * inner));
    for (int64_t i = 0; i < n; ++i)
        std::copy(x.data().begin(), x.data().end(), out.begin() + i * inner);
    auto xn = x.node();
    return detail::make_result<S>(out_shape, std::move(out), {x}, [xn, n, inner](TensorNode<S>& nd) {
        xn->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < inner; ++j) xn->grad[j] += nd.grad[i * inner + j];
    });
}

// Stack equal-shape tensors along a new leading axis.
template <typename S>
Tensor<S> stack0(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ValueError("stack0: empty input");
    for (const auto& p : parts) detail::check_same_shape(parts[0], p, "stack0");
    int64_t inner = parts[0].numel();
    Shape out_shape;
    out_shape.push_back(static_cast<int64_t>(parts.size()));
    for (int64_t e : parts[0].shape()) out_shape.push_back(e);
    std::vector<S> out(static_cast<size_t>(inner * parts.size()));
    for (size_t i = 0; i < parts.size(); ++i)
        std::copy(parts[i].data().begin(), parts[i].data().end(), out.begin() + i * inner);
    std::vector<std::shared_ptr<TensorNode<S>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return detail::make_result<S>(out_shape, std::move(out), parts,
                                  [nodes, inner](TensorNode<S>& nd) {
        for (size_t i = 0; i < nodes.size(); ++i) {
            if (!nodes[i]->on_graph) continue;
            nodes[i]->ensure_grad();
            for (int64_t j = 0; j < inner; ++j)
                nodes[i]->grad[j] += nd.grad[i * inner + j];
        }
    });
}

// Concatenate along the last axis.
template <typename S>
Tensor<S> concat_last(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != b.rank() || a.rank() < 1) throw ShapeError("concat_last: rank mismatch");
    for (int i = 0; i < a.rank() - 1; ++i)
        if (a.dim(i) != b.dim(i)) throw ShapeError("concat_last: leading extents differ");
    int64_t na = a.shape().back(), nb = b.shape().back();
    int64_t rows = a.numel() / na;
    Shape out_shape = a.shape();
    out_shape.back() = na + nb;
    std::vector<S> out(static_cast<size_t>(rows * (na + nb)));
    for (int64_t r = 0; r < rows; ++r) {
        std::copy(a.data().begin() + r * na, a.data().begin() + (r + 1) * na,
                  out.begin() + r * (na + nb));
        std::copy(b.data().begin() + r * nb, b.data().begin() + (r + 1) * nb,
                  out.begin() + r * (na + nb) + na);
    }
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(out_shape, std::move(out), {a, b},
                                  [an, bn, rows, na, nb](TensorNode<S>& nd) {
        if (an->on_graph) {
            an->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < na; ++j)
                    an->grad[r * na + j] += nd.grad[r * (na + nb) + j];
        }
        if (bn->on_graph) {
            bn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < nb; ++j)
                    bn->grad[r * nb + j] += nd.grad[r * (na + nb) + na + j];
        }
    });
}

// Single row of a [R x D] table.
template <typename S>
Tensor<S> select_row(const Tensor<S>& table, int64_t row) {
    if (table.rank() != 2) throw ShapeError("select_row: table must be 2-D");
    if (row < 0 || row >= table.dim(0)) throw ValueError("select_row: row out of range");
    int64_t d = table.dim(1);
    std::vector<S> out(table.data().begin() + row * d, table.data().begin() + (row + 1) * d);
    auto tn = table.node();
    return detail::make_result<S>({d}, std::move(out), {table}, [tn, row, d](TensorNode<S>& n) {
        tn->ensure_grad();
        for (int64_t j = 0; j < d; ++j) tn->grad[row * d + j] += n.grad[j];
    });
}

// ----------------------------- matmul -----------------------------

// [m,k]x[k,n] or batched [B...,m,k]x[B...,k,n] with identical leading extents.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() < 2 || b.rank() != a.rank())
        throw ShapeError("matmul: rank mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    int r = a.rank();
    for (int i = 0; i < r - 2; ++i)
        if (a.dim(i) != b.dim(i)) throw ShapeError("matmul: batch extents differ");
    int64_t m = a.dim(r - 2), k = a.dim(r - 1), k2 = b.dim(r - 2), n = b.dim(r - 1);
    if (k != k2)
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    int64_t batch = a.numel() / (m * k);

    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<S> out(static_cast<size_t>(batch * m * n), S(0));
    const S* ad = a.data().data();
    const S* bd = b.data().data();
    for (int64_t t = 0; t < batch; ++t) {
        const S* A = ad + t * m * k;
        const S* B = bd + t * k * n;
        S* O = out.data() + t * m * n;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
                S av = A[i * k + p];
                for (int64_t j = 0; j < n; ++j) O[i * n + j] += av * B[p * n + j];
            }
    }
    auto an = a.node(), bn = b.node();
    return detail::make_result<S>(out_shape, std::move(out), {a, b},
                                  [an, bn, batch, m, k, n](TensorNode<S>& nd) {
        const S* g = nd.grad.data();
        if (an->on_graph) {
            an->ensure_grad();
            // dA = G  B^T
            for (int64_t t = 0; t < batch; ++t) {
                const S* G = g + t * m * n;
                const S* B = bn->data.data() + t * k * n;
                S* GA = an->grad.data() + t * m * k;
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) {
                        S gv = G[i * n + j];
                        for (int64_t p = 0; p < k; ++p) GA[i * k + p] += gv * B[p * n + j];
                    }
            }
        }
        if (bn->on_graph) {
            bn->ensure_grad();
            // dB = A^T G
            for (int64_t t = 0; t < batch; ++t) {
                const S* G = g + t * m * n;
                const S* A = an->data.data() + t * m * k;
                S* GB = bn->grad.data() + t * k * n;
                for (int64_t p = 0; p < k; ++p)
                    for (int64_t i = 0; i < m; ++i) {
                        S av = A[i * k + p];
                        for (int64_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
                    }
            }
        }
    });
}

// ----------------------------- normalization -----------------------------

namespace detail {

// Lane iteration for axis-wise ops: view tensor as [outer, extent, inner].
struct AxisView {
    int64_t outer, extent, inner;
};

inline AxisView axis_view(const Shape& shape, int axis) {
    int r = static_cast<int>(shape.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("axis out of range");
    AxisView v{1, shape[axis], 1};
    for (int i = 0; i < axis; ++i) v.outer *= shape[i];
    for (int i = axis + 1; i < r; ++i) v.inner *= shape[i];
    return v;
}

}  // namespace detail

// Max-shifted softmax along `axis`. With `sorted_denominator` the partition
// sum adds exp terms in ascending value order, which makes the per-lane
// weights independent of how the lane entries were ordered (bit-exact under
// permutations of the axis).
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis, bool sorted_denominator = false) {
    auto v = detail::axis_view(x.shape(), axis);
    std::vector<S> out(x.data().size());
    std::vector<S> lane(static_cast<size_t>(v.extent));
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t in = 0; in < v.inner; ++in) {
            int64_t base = o * v.extent * v.inner + in;
            S mx = x.data()[base];
            for (int64_t e = 1; e < v.extent; ++e)
                mx = std::max(mx, x.data()[base + e * v.inner]);
            for (int64_t e = 0; e < v.extent; ++e)
                lane[e] = std::exp(x.data()[base + e * v.inner] - mx);
            S denom = S(0);
            if (sorted_denominator) {
                std::vector<S> sorted_lane(lane.begin(), lane.end());
                std::sort(sorted_lane.begin(), sorted_lane.end());
                for (S t : sorted_lane) denom += t;
            } else {
                for (S t : lane) denom += t;
            }
            for (int64_t e = 0; e < v.extent; ++e)
                out[base + e * v.inner] = lane[e] / denom;
        }
    auto xn = x.node();
    auto yv = std::make_shared<std::vector<S>>(out);
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, yv, v](TensorNode<S>& nd) {
        xn->ensure_grad();
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t in = 0; in < v.inner; ++in) {
                int64_t base = o * v.extent * v.inner + in;
                S dot = S(0);
                for (int64_t e = 0; e < v.extent; ++e)
                    dot += nd.grad[base + e * v.inner] * (*yv)[base + e * v.inner];
                for (int64_t e = 0; e < v.extent; ++e) {
                    int64_t i = base + e * v.inner;
                    xn->grad[i] += (*yv)[i] * (nd.grad[i] - dot);
                }
            }
    });
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x, int axis) {
    auto v = detail::axis_view(x.shape(), axis);
    std::vector<S> out(x.data().size());
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t in = 0; in < v.inner; ++in) {
            int64_t base = o * v.extent * v.inner + in;
            S mx = x.data()[base];
            for (int64_t e = 1; e < v.extent; ++e)
                mx = std::max(mx, x.data()[base + e * v.inner]);
            S denom = S(0);
            for (int64_t e = 0; e < v.extent; ++e)
                denom += std::exp(x.data()[base + e * v.inner] - mx);
            S lse = mx + std::log(denom);
            for (int64_t e = 0; e < v.extent; ++e)
                out[base + e * v.inner] = x.data()[base + e * v.inner] - lse;
        }
    auto xn = x.node();
    auto yv = std::make_shared<std::vector<S>>(out);
    return detail::make_result<S>(x.shape(), std::move(out), {x}, [xn, yv, v](TensorNode<S>& nd) {
        xn->ensure_grad();
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t in = 0; in < v.inner; ++in) {
                int64_t base = o * v.extent * v.inner + in;
                S gsum = S(0);
                for (int64_t e = 0; e < v.extent; ++e) gsum += nd.grad[base + e * v.inner];
                for (int64_t e = 0; e < v.extent; ++e) {
                    int64_t i = base + e * v.inner;
                    xn->grad[i] += nd.grad[i] - std::exp((*yv)[i]) * gsum;
                }
            }
    });
}

// Last-axis layer norm: zero mean / unit variance (population) before affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     double eps = 1e-5) {
    int64_t d = x.shape().back();
    if (gamma.numel() != d || beta.numel() != d)
        throw ShapeError("layer_norm: gamma/beta width must match last axis");
    int64_t rows = x.numel() / d;
    std::vector<S> out(x.data().size());
    std::vector<S> xhat(x.data().size());
    std::vector<S> inv_sd(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x.data().data() + r * d;
        S mean = S(0);
        for (int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<S>(d);
        S var = S(0);
        for (int64_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<S>(d);
        S isd = S(1) / std::sqrt(var + static_cast<S>(eps));
        inv_sd[r] = isd;
        for (int64_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mean) * isd;
            out[r * d + j] = gamma.data()[j] * xhat[r * d + j] + beta.data()[j];
        }
    }
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto xh = std::make_shared<std::vector<S>>(std::move(xhat));
    auto is = std::make_shared<std::vector<S>>(std::move(inv_sd));
    return detail::make_result<S>(x.shape(), std::move(out), {x, gamma, beta},
                                  [xn, gn, bn, xh, is, rows, d](TensorNode<S>& nd) {
        if (gn->on_graph) {
            gn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < d; ++j)
                    gn->grad[j] += nd.grad[r * d + j] * (*xh)[r * d + j];
        }
        if (bn->on_graph) {
            bn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t j = 0; j < d; ++j) bn->grad[j] += nd.grad[r * d + j];
        }
        if (xn->on_graph) {
            xn->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                S gmean = S(0), gxmean = S(0);
                for (int64_t j = 0; j < d; ++j) {
                    S gy = nd.grad[r * d + j] * gn->data[j];
                    gmean += gy;
                    gxmean += gy * (*xh)[r * d + j];
                }
                gmean /= static_cast<S>(d);
                gxmean /= static_cast<S>(d);
                for (int64_t j = 0; j < d; ++j) {
                    S gy = nd.grad[r * d + j] * gn->data[j];
                    xn->grad[r * d + j] +=
                        (*is)[r] * (gy - gmean - (*xh)[r * d + j] * gxmean);
                }
            }
        }
    });
}

// ----------------------------- real FFT magnitude -----------------------------

namespace detail {

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 complex FFT in double precision.
inline void fft_inplace(std::vector<double>& re, std::vector<double>& im) {
    size_t n = re.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * M_PI / static_cast<double>(len);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t j = 0; j < len / 2; ++j) {
                double ur = re[i + j], ui = im[i + j];
                double vr = re[i + j + len / 2] * cr - im[i + j + len / 2] * ci;
                double vi = re[i + j + len / 2] * ci + im[i + j + len / 2] * cr;
                re[i + j] = ur + vr;
                im[i + j] = ui + vi;
                re[i + j + len / 2] = ur - vr;
                im[i + j + len / 2] = ui - vi;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

}  // namespace detail

// Magnitude of the unnormalized real DFT along the last axis; N/2+1 bins.
template <typename S>
Tensor<S> rfft_mag(const Tensor<S>& x) {
    int64_t n = x.shape().back();
    if (!detail::is_pow2(n) || n < 2)
        throw ShapeError("rfft_mag: length " + std::to_string(n) + " is not a power of two");
    int64_t bins = n / 2 + 1;
    int64_t lanes = x.numel() / n;
    Shape out_shape = x.shape();
    out_shape.back() = bins;
    std::vector<S> out(static_cast<size_t>(lanes * bins));
    auto spec_re = std::make_shared<std::vector<double>>(lanes * bins);
    auto spec_im = std::make_shared<std::vector<double>>(lanes * bins);
    std::vector<double> re(n), im(n);
    for (int64_t l = 0; l < lanes; ++l) {
        for (int64_t i = 0; i < n; ++i) {
            re[i] = static_cast<double>(x.data()[l * n + i]);
            im[i] = 0.0;
        }
        detail::fft_inplace(re, im);
        for (int64_t k = 0; k < bins; ++k) {
            (*spec_re)[l * bins + k] = re[k];
            (*spec_im)[l * bins + k] = im[k];
            out[l * bins + k] = static_cast<S>(std::hypot(re[k], im[k]));
        }
    }
    auto xn = x.node();
    return detail::make_result<S>(out_shape, std::move(out), {x},
                                  [xn, spec_re, spec_im, lanes, bins, n](TensorNode<S>& nd) {
        xn->ensure_grad();
        for (int64_t l = 0; l < lanes; ++l)
            for (int64_t k = 0; k < bins; ++k) {
                double mr = (*spec_re)[l * bins + k];
                double mi = (*spec_im)[l * bins + k];
                double mag = std::hypot(mr, mi);
                if (mag < 1e-30) continue;  // magnitude not differentiable at 0
                double g = static_cast<double>(nd.grad[l * bins + k]) / mag;
                for (int64_t i = 0; i < n; ++i) {
                    double th = 2.0 * M_PI * static_cast<double>(k * i) / static_cast<double>(n);
                    xn->grad[l * n + i] +=
                        static_cast<S>(g * (mr * std::cos(th) - mi * std::sin(th)));
                }
            }
    });
}

// ----------------------------- 1-D conv support -----------------------------

// x [B, C, L] -> [B, Lout, C*K] patches for stride-s kernel-K conv as matmul.
template <typename S>
Tensor<S> im2col1d(const Tensor<S>& x, int64_t kernel, int64_t stride) {
    if (x.rank() != 3) throw ShapeError("im2col1d: expected [B,C,L]");
    int64_t b = x.dim(0), c = x.dim(1), l = x.dim(2);
    if (l < kernel) throw ShapeError("im2col1d: input shorter than kernel");
    int64_t lout = (l - kernel) / stride + 1;
    std::vector<S> out(static_cast<size_t>(b * lout * c * kernel));
    for (int64_t t = 0; t < b; ++t)
        for (int64_t o = 0; o < lout; ++o)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t k = 0; k < kernel; ++k)
                    out[((t * lout + o) * c + ch) * kernel + k] =
                        x.data()[(t * c + ch) * l + o * stride + k];
    auto xn = x.node();
    return detail::make_result<S>({b, lout, c * kernel}, std::move(out), {x},
                                  [xn, b, c, l, lout, kernel, stride](TensorNode<S>& nd) {
        xn->ensure_grad();
        for (int64_t t = 0; t < b; ++t)
            for (int64_t o = 0; o < lout; ++o)
                for (int64_t ch = 0; ch < c; ++ch)
                    for (int64_t k = 0; k < kernel; ++k)
                        xn->grad[(t * c + ch) * l + o * stride + k] +=
                            nd.grad[((t * lout + o) * c + ch) * kernel + k];
    });
}

// ----------------------------- rotary embedding -----------------------------

struct RopeParams {
    double base = 10000.0;
    int dim = 0;  // rotated width, must be even
};

// Pairwise 2-D rotation of (x[2i], x[2i+1]) by angle pos * base^(-2i/dim),
// applied along the last axis; `positions` indexes the second-to-last axis.
template <typename S>
Tensor<S> rope_apply(const Tensor<S>& x, const std::vector<int64_t>& positions,
                     const RopeParams& p) {
    if (x.rank() < 2) throw ShapeError("rope_apply: expected [..., T, dim]");
    int64_t dim = x.shape().back();
    int64_t t_ext = x.dim(x.rank() - 2);
    if (p.dim != dim) throw ConfigError("rope_apply: params dim mismatch");
    if (dim % 2 != 0) throw ConfigError("rope_apply: dim must be even");
    if (static_cast<int64_t>(positions.size()) != t_ext)
        throw ShapeError("rope_apply: positions length mismatch");
    int64_t outer = x.numel() / (t_ext * dim);
    std::vector<S> out(x.data().size());
    std::vector<double> theta(static_cast<size_t>(dim / 2));
    for (int64_t i = 0; i < dim / 2; ++i)
        theta[i] = std::pow(p.base, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    auto thetas = std::make_shared<std::vector<double>>(std::move(theta));
    auto pos = std::make_shared<std::vector<int64_t>>(positions);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t t = 0; t < t_ext; ++t) {
            const S* xi = x.data().data() + (o * t_ext + t) * dim;
            S* yo = out.data() + (o * t_ext + t) * dim;
            for (int64_t i = 0; i < dim / 2; ++i) {
                double ang = static_cast<double>((*pos)[t]) * (*thetas)[i];
                double c = std::cos(ang), s = std::sin(ang);
                yo[2 * i] = static_cast<S>(c * xi[2 * i] - s * xi[2 * i + 1]);
                yo[2 * i + 1] = static_cast<S>(s * xi[2 * i] + c * xi[2 * i + 1]);
            }
        }
    auto xn = x.node();
    return detail::make_result<S>(x.shape(), std::move(out), {x},
                                  [xn, thetas, pos, outer, t_ext, dim](TensorNode<S>& nd) {
        xn->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t t = 0; t < t_ext; ++t) {
                const S* g = nd.grad.data() + (o * t_ext + t) * dim;
                S* gx = xn->grad.data() + (o * t_ext + t) * dim;
                for (int64_t i = 0; i < dim / 2; ++i) {
                    double ang = static_cast<double>((*pos)[t]) * (*thetas)[i];
                    double c = std::cos(ang), s = std::sin(ang);
                    // transpose of the rotation
                    gx[2 * i] += static_cast<S>(c * g[2 * i] + s * g[2 * i + 1]);
                    gx[2 * i + 1] += static_cast<S>(-s * g[2 * i] + c * g[2 * i + 1]);
                }
            }
    });
}

// Spec-level convenience: rotate one vector as if at sequence position `position`.
template <typename S>
Tensor<S> rope_rotate(const Tensor<S>& x, int64_t position, const RopeParams& p) {
    auto x2 = reshape(x, {1, static_cast<int64_t>(x.numel())});
    return reshape(rope_apply(x2, {position}, p), x.shape());
}

template <typename S>
void backward(const Tensor<S>& loss) {
    loss.backward();
}

}  // namespace unisig
