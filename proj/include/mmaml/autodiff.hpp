#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mmaml/tensor.hpp"

namespace mmaml {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the computation graph. Forward values are computed eagerly
// at construction; `backward` builds the adjoints of the inputs as graph
// nodes, so gradients are themselves differentiable (grad-of-grad).
struct Node {
    Tensor value;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<NodePtr> inputs;
    // (self, upstream adjoint) -> adjoint per input; null entry means the
    // input is treated as constant along that slot.
    std::function<std::vector<NodePtr>(const NodePtr&, const NodePtr&)> backward;
};

inline NodePtr constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->op = "const";
    return n;
}

inline NodePtr constant(double v) { return constant(Tensor::scalar(v)); }

inline NodePtr leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return n;
}

inline NodePtr detach(const NodePtr& a) { return constant(a->value); }

namespace detail {

inline NodePtr make_node(const char* op, Tensor value, std::vector<NodePtr> inputs,
                         std::function<std::vector<NodePtr>(const NodePtr&, const NodePtr&)> bw) {
    if (!value.all_finite())
        throw Error(std::string(op) + ": produced a non-finite value");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    n->inputs = std::move(inputs);
    n->backward = std::move(bw);
    for (const auto& in : n->inputs)
        if (in->requires_grad) { n->requires_grad = true; break; }
    return n;
}

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Broadcast classification for binary elementwise ops. Allowed pairs:
// equal shapes; scalar against anything; vector against matrix along the
// matrix's last axis.
enum class Bcast { None, LeftScalar, RightScalar, LeftVec, RightVec };

inline Bcast classify(const char* op, const Shape& a, const Shape& b) {
    if (a == b) return Bcast::None;
    // vector-vs-matrix wins over the scalar rule so 1x1 edge shapes keep rank
    if (a.size() == 1 && b.size() == 2 && a[0] == b[1]) return Bcast::LeftVec;
    if (b.size() == 1 && a.size() == 2 && b[0] == a[1]) return Bcast::RightVec;
    if (Tensor::numel_of(a) == 1) return Bcast::LeftScalar;
    if (Tensor::numel_of(b) == 1) return Bcast::RightScalar;
    shape_error(op, a, b);
}

}  // namespace detail

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double c);
NodePtr sum(const NodePtr& a);
NodePtr col_sum(const NodePtr& a);
NodePtr broadcast(const NodePtr& v, std::size_t rows);
NodePtr expand_scalar(const NodePtr& s, Shape shape);
NodePtr reshape(const NodePtr& a, Shape shape);
NodePtr transpose(const NodePtr& a);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr sin(const NodePtr& a);
NodePtr cos(const NodePtr& a);

// --- elementwise binary ---

namespace detail {

template <class F>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f) {
    Bcast bc = classify(op, a.shape, b.shape);
    switch (bc) {
        case Bcast::None: {
            Tensor out(a.shape);
            for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = f(a.data[i], b.data[i]);
            return out;
        }
        case Bcast::LeftScalar: {
            Tensor out(b.shape);
            for (std::size_t i = 0; i < b.numel(); ++i) out.data[i] = f(a.data[0], b.data[i]);
            return out;
        }
        case Bcast::RightScalar: {
            Tensor out(a.shape);
            for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = f(a.data[i], b.data[0]);
            return out;
        }
        case Bcast::LeftVec: {
            Tensor out(b.shape);
            std::size_t n = b.cols();
            for (std::size_t r = 0; r < b.rows(); ++r)
                for (std::size_t c = 0; c < n; ++c)
                    out.data[r * n + c] = f(a.data[c], b.data[r * n + c]);
            return out;
        }
        case Bcast::RightVec: {
            Tensor out(a.shape);
            std::size_t n = a.cols();
            for (std::size_t r = 0; r < a.rows(); ++r)
                for (std::size_t c = 0; c < n; ++c)
                    out.data[r * n + c] = f(a.data[r * n + c], b.data[c]);
            return out;
        }
    }
    shape_error(op, a.shape, b.shape);
}

// Reduce an adjoint of `full` shape down to the shape of the broadcast
// operand.
inline NodePtr reduce_to(const NodePtr& g, const Shape& target) {
    if (g->value.shape == target) return g;
    if (Tensor::numel_of(target) == 1) return reshape(sum(g), target);
    return col_sum(g);  // vector broadcast over matrix rows
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
    Tensor v = detail::ew_binary("add", a->value, b->value, [](double x, double y) { return x + y; });
    return detail::make_node("add", std::move(v), {a, b},
        [sa = a->value.shape, sb = b->value.shape](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{detail::reduce_to(g, sa), detail::reduce_to(g, sb)};
        });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
    Tensor v = detail::ew_binary("sub", a->value, b->value, [](double x, double y) { return x - y; });
    return detail::make_node("sub", std::move(v), {a, b},
        [sa = a->value.shape, sb = b->value.shape](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{detail::reduce_to(g, sa),
                                        scale(detail::reduce_to(g, sb), -1.0)};
        });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
    Tensor v = detail::ew_binary("elementwise_mul", a->value, b->value,
                                 [](double x, double y) { return x * y; });
    return detail::make_node("elementwise_mul", std::move(v), {a, b},
        [sa = a->value.shape, sb = b->value.shape](const NodePtr& self, const NodePtr& g) {
            return std::vector<NodePtr>{detail::reduce_to(mul(g, self->inputs[1]), sa),
                                        detail::reduce_to(mul(g, self->inputs[0]), sb)};
        });
}

inline NodePtr scale(const NodePtr& a, double c) {
    Tensor v = a->value;
    for (double& x : v.data) x *= c;
    return detail::make_node("scale", std::move(v), {a},
        [c](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{scale(g, c)};
        });
}

inline NodePtr neg(const NodePtr& a) { return scale(a, -1.0); }

// --- elementwise unary ---

namespace detail {

template <class F>
Tensor ew_unary(const Tensor& a, F f) {
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = f(a.data[i]);
    return out;
}

// Constant mask derived from a node's forward value; carries no gradient,
// which matches the a.e. derivative of the kinked ops.
template <class F>
NodePtr const_map(const NodePtr& a, F f) {
    return constant(ew_unary(a->value, f));
}

}  // namespace detail

inline NodePtr relu(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return x > 0.0 ? x : 0.0; });
    return detail::make_node("relu", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            auto mask = detail::const_map(self->inputs[0], [](double x) { return x > 0.0 ? 1.0 : 0.0; });
            return std::vector<NodePtr>{mul(g, mask)};
        });
}

inline NodePtr tanh(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return std::tanh(x); });
    return detail::make_node("tanh", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            // d tanh = 1 - tanh^2, expressed on the output node so the
            // derivative itself stays differentiable
            auto one = expand_scalar(constant(1.0), self->value.shape);
            return std::vector<NodePtr>{mul(g, sub(one, mul(self, self)))};
        });
}

inline NodePtr sigmoid(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return detail::make_node("sigmoid", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            auto one = expand_scalar(constant(1.0), self->value.shape);
            return std::vector<NodePtr>{mul(g, mul(self, sub(one, self)))};
        });
}

inline NodePtr sin(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return std::sin(x); });
    return detail::make_node("sin", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            return std::vector<NodePtr>{mul(g, cos(self->inputs[0]))};
        });
}

inline NodePtr cos(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return std::cos(x); });
    return detail::make_node("cos", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            return std::vector<NodePtr>{neg(mul(g, sin(self->inputs[0])))};
        });
}

inline NodePtr abs(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return std::abs(x); });
    return detail::make_node("abs", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            auto sign = detail::const_map(self->inputs[0],
                                          [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
            return std::vector<NodePtr>{mul(g, sign)};
        });
}

inline NodePtr square(const NodePtr& a) {
    Tensor v = detail::ew_unary(a->value, [](double x) { return x * x; });
    return detail::make_node("square", std::move(v), {a},
        [](const NodePtr& self, const NodePtr& g) {
            return std::vector<NodePtr>{scale(mul(g, self->inputs[0]), 2.0)};
        });
}

// --- reductions / shape ---

inline NodePtr sum(const NodePtr& a) {
    double s = 0.0;
    for (double x : a->value.data) s += x;
    return detail::make_node("sum", Tensor::scalar(s), {a},
        [sh = a->value.shape](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{expand_scalar(g, sh)};
        });
}

inline NodePtr mean(const NodePtr& a) {
    std::size_t n = a->value.numel();
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

// column sums of a matrix -> vector
inline NodePtr col_sum(const NodePtr& a) {
    if (a->value.ndim() != 2) throw Error("col_sum: expected rank-2, got " + shape_str(a->value.shape));
    std::size_t r = a->value.rows(), c = a->value.cols();
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j] += a->value.data[i * c + j];
    return detail::make_node("col_sum", std::move(out), {a},
        [r](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{broadcast(g, r)};
        });
}

// replicate a vector as the rows of a matrix
inline NodePtr broadcast(const NodePtr& v, std::size_t rows) {
    if (v->value.ndim() != 1) throw Error("broadcast: expected rank-1, got " + shape_str(v->value.shape));
    std::size_t n = v->value.numel();
    Tensor out({rows, n});
    for (std::size_t i = 0; i < rows; ++i)
        std::copy(v->value.data.begin(), v->value.data.end(), out.data.begin() + i * n);
    return detail::make_node("broadcast", std::move(out), {v},
        [](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{col_sum(g)};
        });
}

inline NodePtr expand_scalar(const NodePtr& s, Shape shape) {
    if (s->value.numel() != 1) throw Error("expand_scalar: source is not scalar");
    Tensor out(shape);
    std::fill(out.data.begin(), out.data.end(), s->value.data[0]);
    return detail::make_node("expand_scalar", std::move(out), {s},
        [ss = s->value.shape](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{reshape(sum(g), ss)};
        });
}

inline NodePtr reshape(const NodePtr& a, Shape shape) {
    if (Tensor::numel_of(shape) != a->value.numel())
        detail::shape_error("reshape", a->value.shape, shape);
    Tensor out(std::move(shape), a->value.data);
    return detail::make_node("reshape", std::move(out), {a},
        [sh = a->value.shape](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{reshape(g, sh)};
        });
}

inline NodePtr transpose(const NodePtr& a) {
    if (a->value.ndim() != 2) throw Error("transpose: expected rank-2, got " + shape_str(a->value.shape));
    std::size_t r = a->value.rows(), c = a->value.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = a->value.data[i * c + j];
    return detail::make_node("transpose", std::move(out), {a},
        [](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{transpose(g)};
        });
}

// [m,k] x [k,n] -> [m,n]; also [m,k] x [k] -> [m]
inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    if (A.ndim() != 2 || (B.ndim() != 2 && B.ndim() != 1))
        detail::shape_error("matmul", A.shape, B.shape);
    bool vec = B.ndim() == 1;
    std::size_t m = A.rows(), k = A.cols();
    std::size_t n = vec ? 1 : B.cols();
    if ((vec ? B.shape[0] : B.rows()) != k) detail::shape_error("matmul", A.shape, B.shape);

    Tensor out(vec ? Shape{m} : Shape{m, n});
    // ikj order keeps the inner loop contiguous in B and out
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = A.data[i * k + kk];
            if (av == 0.0) continue;
            const double* brow = &B.data[kk * n];
            double* orow = &out.data[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    return detail::make_node("matmul", std::move(out), {a, b},
        [vec, m, k, n](const NodePtr& self, const NodePtr& g) {
            const NodePtr& A_ = self->inputs[0];
            const NodePtr& B_ = self->inputs[1];
            NodePtr g2 = vec ? reshape(g, {m, 1}) : g;
            NodePtr B2 = vec ? reshape(B_, {k, 1}) : B_;
            NodePtr ga = matmul(g2, transpose(B2));
            NodePtr gb = matmul(transpose(A_), g2);
            if (vec) gb = reshape(gb, {k});
            (void)n;
            return std::vector<NodePtr>{ga, gb};
        });
}

// --- concat / slice (rank-1) ---

inline NodePtr slice(const NodePtr& a, std::size_t offset, std::size_t len);

inline NodePtr concat(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw Error("concat: no operands");
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->value.ndim() != 1) throw Error("concat: expected rank-1, got " + shape_str(p->value.shape));
        total += p->value.numel();
    }
    Tensor out({total});
    std::size_t off = 0;
    std::vector<std::size_t> lens;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
        lens.push_back(p->value.numel());
        off += p->value.numel();
    }
    return detail::make_node("concat", std::move(out), parts,
        [lens](const NodePtr&, const NodePtr& g) {
            std::vector<NodePtr> grads;
            std::size_t o = 0;
            for (std::size_t l : lens) {
                grads.push_back(slice(g, o, l));
                o += l;
            }
            return grads;
        });
}

namespace detail {
inline NodePtr pad1d(const NodePtr& a, std::size_t total, std::size_t offset) {
    Tensor out({total});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin() + offset);
    return make_node("pad1d", std::move(out), {a},
        [offset, len = a->value.numel()](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{slice(g, offset, len)};
        });
}
}  // namespace detail

inline NodePtr slice(const NodePtr& a, std::size_t offset, std::size_t len) {
    if (a->value.ndim() != 1 || offset + len > a->value.numel())
        throw Error("slice: out of range on " + shape_str(a->value.shape));
    Tensor out({len});
    std::copy(a->value.data.begin() + offset, a->value.data.begin() + offset + len, out.data.begin());
    return detail::make_node("slice", std::move(out), {a},
        [offset, total = a->value.numel()](const NodePtr&, const NodePtr& g) {
            return std::vector<NodePtr>{detail::pad1d(g, total, offset)};
        });
}

// softmax over the last (only) axis of a vector, or row-wise on a matrix
inline NodePtr softmax(const NodePtr& a) {
    const Tensor& x = a->value;
    std::size_t rows = x.ndim() == 2 ? x.rows() : 1;
    std::size_t n = x.ndim() == 2 ? x.cols() : x.numel();
    Tensor out(x.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = &x.data[r * n];
        double* o = &out.data[r * n];
        double mx = *std::max_element(in, in + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= z;
    }
    return detail::make_node("softmax_over_axis", std::move(out), {a},
        [rows](const NodePtr& self, const NodePtr& g) {
            // gx = y * (g - <g, y>) per row
            NodePtr dot;  // scalar or per-row vector of <g,y>
            NodePtr gy = mul(g, self);
            if (rows == 1 && self->value.ndim() == 1) {
                dot = sum(gy);
                return std::vector<NodePtr>{mul(self, sub(g, expand_scalar(dot, self->value.shape)))};
            }
            // matrix case: row dot via matmul with ones
            std::size_t n = self->value.cols();
            NodePtr ones = constant(Tensor::ones({n}));
            NodePtr rowdot = matmul(gy, ones);  // [rows]
            NodePtr expanded = transpose(broadcast(rowdot, n));  // [rows, n]
            return std::vector<NodePtr>{mul(self, sub(g, expanded))};
        });
}

// --- gradient driver ---

namespace detail {

inline void topo_collect(const NodePtr& root, std::vector<NodePtr>& order) {
    // iterative post-order DFS
    std::unordered_map<Node*, int> state;  // 0 new, 1 open, 2 done
    std::vector<NodePtr> stack{root};
    while (!stack.empty()) {
        NodePtr n = stack.back();
        int& st = state[n.get()];
        if (st == 0) {
            st = 1;
            for (const auto& in : n->inputs)
                if (in->requires_grad && state[in.get()] == 0) stack.push_back(in);
        } else {
            stack.pop_back();
            if (st == 1) {
                st = 2;
                order.push_back(n);
            }
        }
    }
}

}  // namespace detail

// Reverse-mode gradient of a scalar `output` w.r.t. each node in `wrt`.
// With create_graph the returned nodes stay attached to the original graph
// and can be differentiated again; otherwise they are detached constants.
// A wrt node unreachable from output yields zeros.
inline std::vector<NodePtr> grad(const NodePtr& output, const std::vector<NodePtr>& wrt,
                                 bool create_graph) {
    if (output->value.numel() != 1)
        throw Error("grad: output must be scalar, got " + shape_str(output->value.shape));

    std::vector<NodePtr> order;
    if (output->requires_grad) detail::topo_collect(output, order);

    std::unordered_map<Node*, NodePtr> adjoint;
    adjoint[output.get()] = constant(Tensor::ones(output->value.shape));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const NodePtr& n = *it;
        auto found = adjoint.find(n.get());
        if (found == adjoint.end() || n->inputs.empty() || !n->backward) continue;
        std::vector<NodePtr> in_grads = n->backward(n, found->second);
        for (std::size_t i = 0; i < n->inputs.size(); ++i) {
            const NodePtr& in = n->inputs[i];
            if (!in->requires_grad || !in_grads[i]) continue;
            auto cur = adjoint.find(in.get());
            if (cur == adjoint.end())
                adjoint[in.get()] = in_grads[i];
            else
                cur->second = add(cur->second, in_grads[i]);
        }
    }

    std::vector<NodePtr> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto found = adjoint.find(w.get());
        NodePtr g = (found != adjoint.end()) ? found->second
                                             : constant(Tensor::zeros(w->value.shape));
        result.push_back(create_graph ? g : detach(g));
    }
    return result;
}

}  // namespace mmaml
