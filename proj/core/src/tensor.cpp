#include "cvq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace cvq {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::runtime_error(std::string("non-finite value produced by '") + op + "'");
        }
    }
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

int check_axis(const char* op, const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank()) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                    " out of range for " + shape_str(x.shape()));
    }
    return axis;
}

// Decomposes a shape around `axis` into (outer, n, inner) extents so that
// flat index = (o * n + a) * inner + i.
struct AxisView {
    int64_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, int axis) {
    AxisView v;
    for (int i = 0; i < axis; ++i) v.outer *= shape[i];
    v.n = shape[axis];
    for (size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor basics

namespace detail {

TensorImpl* impl(const Tensor& t) { return detail_impl(t); }

Tensor make_node(const char* op, Shape shape, std::vector<double> data,
                 std::vector<Tensor> parents,
                 std::function<void(const std::vector<double>&)> backward) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument(std::string(op) + ": data size does not match shape " +
                                    shape_str(shape));
    }
    check_finite(op, data);
    auto node = std::make_shared<TensorImpl>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool needs_grad = false;
    for (const Tensor& p : parents) {
        if (p.requires_grad()) needs_grad = true;
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward);
    }
    return detail_wrap(std::move(node));
}

std::vector<double>* grad_buffer(const Tensor& t) {
    TensorImpl* ti = impl(t);
    if (!ti->requires_grad) return nullptr;
    if (ti->grad.empty()) ti->grad.assign(ti->data.size(), 0.0);
    return &ti->grad;
}

void accumulate(const Tensor& t, int64_t index, double value) {
    if (auto* g = grad_buffer(t)) (*g)[index] += value;
}

void accumulate_all(const Tensor& t, const std::vector<double>& contribution) {
    auto* g = grad_buffer(t);
    if (!g) return;
    if (g->size() != contribution.size()) {
        throw std::logic_error("accumulate_all: gradient size mismatch");
    }
    for (size_t i = 0; i < contribution.size(); ++i) (*g)[i] += contribution[i];
}

}  // namespace detail

detail::TensorImpl* detail_impl(const Tensor& t) {
    if (!t.impl_) throw std::logic_error("operation on an undefined tensor");
    return t.impl_.get();
}

Tensor detail_wrap(std::shared_ptr<detail::TensorImpl> impl) { return Tensor(std::move(impl)); }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return from_vector(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return from_vector(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from_vector(const Shape& shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw std::invalid_argument("from_vector: data size does not match shape " + shape_str(shape));
    }
    check_finite("leaf", values);
    auto node = std::make_shared<detail::TensorImpl>();
    node->shape = shape;
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return detail_wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_vector({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return detail_impl(*this)->shape; }
int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int axis) const {
    const Shape& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size())) {
        throw std::invalid_argument("dim: axis out of range");
    }
    return s[axis];
}

int64_t Tensor::size() const { return static_cast<int64_t>(detail_impl(*this)->data.size()); }
const char* Tensor::op() const { return detail_impl(*this)->op; }
bool Tensor::requires_grad() const { return detail_impl(*this)->requires_grad; }

double Tensor::item() const {
    if (size() != 1) throw std::logic_error("item: tensor has more than one element");
    return detail_impl(*this)->data[0];
}

const std::vector<double>& Tensor::values() const { return detail_impl(*this)->data; }

std::vector<double>& Tensor::mutable_values() {
    detail::TensorImpl* ti = detail_impl(*this);
    if (ti->backward_fn) {
        throw std::logic_error("mutable_values: refusing in-place edit of a graph node");
    }
    return ti->data;
}

bool Tensor::has_grad() const { return !detail_impl(*this)->grad.empty(); }

Tensor Tensor::grad() const {
    detail::TensorImpl* ti = detail_impl(*this);
    if (ti->grad.empty()) return Tensor::zeros(ti->shape);
    return Tensor::from_vector(ti->shape, ti->grad);
}

void Tensor::zero_grad() const {
    detail::TensorImpl* ti = detail_impl(*this);
    std::fill(ti->grad.begin(), ti->grad.end(), 0.0);
    ti->consumed = false;
}

// ---------------------------------------------------------------------------
// backward

void backward(const Tensor& loss) {
    detail::TensorImpl* root = detail_impl(loss);
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a single element");
    if (!root->requires_grad) {
        throw std::invalid_argument("backward: loss does not depend on any differentiable input");
    }
    if (root->consumed) {
        throw std::logic_error("backward: this graph was already swept; rebuild it for the next step");
    }

    // Post-order DFS, parents expanded in index order.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    struct Frame {
        detail::TensorImpl* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::TensorImpl* p = detail::impl(f.node->parents[f.next_parent++]);
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    root->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* node = *it;
        node->consumed = true;
        if (!node->backward_fn) continue;       // leaf
        if (node->grad.empty()) continue;       // no gradient reached this node
        node->backward_fn(node->grad);
    }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

template <class Fwd, class Bwd>
Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    check_same_shape(op, a, b);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return detail::make_node(op, a.shape(), std::move(out), {a, b},
                             [a, b, bwd](const std::vector<double>& g) {
                                 const auto& av = a.values();
                                 const auto& bv = b.values();
                                 auto* ga = detail::grad_buffer(a);
                                 auto* gb = detail::grad_buffer(b);
                                 for (size_t i = 0; i < g.size(); ++i) {
                                     auto [da, db] = bwd(av[i], bv[i]);
                                     if (ga) (*ga)[i] += da * g[i];
                                     if (gb) (*gb)[i] += db * g[i];
                                 }
                             });
}

template <class Fwd, class Bwd>
Tensor elementwise_unary(const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    Tensor result = detail::make_node(op, x.shape(), std::move(out), {x}, nullptr);
    detail::TensorImpl* ri = detail::impl(result);
    if (ri->requires_grad) {
        // ri outlives the closure: the node owns it.
        ri->backward_fn = [x, bwd, ri](const std::vector<double>& g) {
            const auto& xv = x.values();
            auto* gx = detail::grad_buffer(x);
            if (!gx) return;
            for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += bwd(xv[i], ri->data[i]) * g[i];
        };
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary("add", a, b, [](double x, double y) { return x + y; },
                              [](double, double) { return std::pair<double, double>(1.0, 1.0); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary("sub", a, b, [](double x, double y) { return x - y; },
                              [](double, double) { return std::pair<double, double>(1.0, -1.0); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary("mul", a, b, [](double x, double y) { return x * y; },
                              [](double x, double y) { return std::pair<double, double>(y, x); });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return elementwise_binary("div", a, b, [](double x, double y) { return x / y; },
                              [](double x, double y) {
                                  return std::pair<double, double>(1.0 / y, -x / (y * y));
                              });
}

Tensor broadcast_add(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw std::invalid_argument("broadcast_add: scalar operand must hold one element");
    const auto& xv = x.values();
    double sv = s.values()[0];
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + sv;
    return detail::make_node("broadcast_add", x.shape(), std::move(out), {x, s},
                             [x, s](const std::vector<double>& g) {
                                 if (auto* gx = detail::grad_buffer(x)) {
                                     for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
                                 }
                                 if (s.requires_grad()) {
                                     double total = 0.0;
                                     for (double gi : g) total += gi;
                                     detail::accumulate(s, 0, total);
                                 }
                             });
}

Tensor broadcast_mul(const Tensor& x, const Tensor& s) {
    if (s.size() != 1) throw std::invalid_argument("broadcast_mul: scalar operand must hold one element");
    const auto& xv = x.values();
    double sv = s.values()[0];
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * sv;
    return detail::make_node("broadcast_mul", x.shape(), std::move(out), {x, s},
                             [x, s](const std::vector<double>& g) {
                                 const auto& xv = x.values();
                                 double sv = s.values()[0];
                                 if (auto* gx = detail::grad_buffer(x)) {
                                     for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += sv * g[i];
                                 }
                                 if (s.requires_grad()) {
                                     double total = 0.0;
                                     for (size_t i = 0; i < g.size(); ++i) total += xv[i] * g[i];
                                     detail::accumulate(s, 0, total);
                                 }
                             });
}

Tensor add_const(const Tensor& x, double c) {
    return elementwise_unary("add_const", x, [c](double v) { return v + c; },
                             [](double, double) { return 1.0; });
}

Tensor mul_const(const Tensor& x, double c) {
    return elementwise_unary("mul_const", x, [c](double v) { return v * c; },
                             [c](double, double) { return c; });
}

Tensor pow_const(const Tensor& x, double p) {
    return elementwise_unary("pow_const", x, [p](double v) { return std::pow(v, p); },
                             [p](double v, double) { return p * std::pow(v, p - 1.0); });
}

Tensor clamp_min(const Tensor& x, double lo) {
    return elementwise_unary("clamp_min", x, [lo](double v) { return v < lo ? lo : v; },
                             [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
    return elementwise_unary("exp", x, [](double v) { return std::exp(v); },
                             [](double, double o) { return o; });
}

Tensor log(const Tensor& x) {
    return elementwise_unary("log", x, [](double v) { return std::log(v); },
                             [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
    return elementwise_unary("sigmoid", x,
                             [](double v) {
                                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                                 double e = std::exp(v);
                                 return e / (1.0 + e);
                             },
                             [](double, double o) { return o * (1.0 - o); });
}

Tensor relu(const Tensor& x) {
    return elementwise_unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                             [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
    return elementwise_unary("softplus", x,
                             [](double v) {
                                 if (v > 0.0) return v + std::log1p(std::exp(-v));
                                 return std::log1p(std::exp(v));
                             },
                             [](double v, double) {
                                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                                 double e = std::exp(v);
                                 return e / (1.0 + e);
                             });
}

Tensor neg(const Tensor& x) { return mul_const(x, -1.0); }
Tensor square(const Tensor& x) { return mul(x, x); }

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& x) {
    const auto& xv = x.values();
    double total = std::accumulate(xv.begin(), xv.end(), 0.0);
    return detail::make_node("sum", {1}, {total}, {x}, [x](const std::vector<double>& g) {
        if (auto* gx = detail::grad_buffer(x)) {
            for (double& v : *gx) v += g[0];
        }
    });
}

Tensor mean_all(const Tensor& x) { return mul_const(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor sum_axis(const Tensor& x, int axis) {
    check_axis("sum_axis", x, axis);
    AxisView v = axis_view(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = 1;
    std::vector<double> out(v.outer * v.inner, 0.0);
    const auto& xv = x.values();
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t a = 0; a < v.n; ++a)
            for (int64_t i = 0; i < v.inner; ++i)
                out[o * v.inner + i] += xv[(o * v.n + a) * v.inner + i];
    return detail::make_node("sum_axis", out_shape, std::move(out), {x},
                             [x, v](const std::vector<double>& g) {
                                 auto* gx = detail::grad_buffer(x);
                                 if (!gx) return;
                                 for (int64_t o = 0; o < v.outer; ++o)
                                     for (int64_t a = 0; a < v.n; ++a)
                                         for (int64_t i = 0; i < v.inner; ++i)
                                             (*gx)[(o * v.n + a) * v.inner + i] += g[o * v.inner + i];
                             });
}

Tensor mean_axis(const Tensor& x, int axis) {
    check_axis("mean_axis", x, axis);
    return mul_const(sum_axis(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

// ---------------------------------------------------------------------------
// softmax family

Tensor softmax(const Tensor& x, int axis) {
    check_axis("softmax", x, axis);
    AxisView v = axis_view(x.shape(), axis);
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t i = 0; i < v.inner; ++i) {
            double mx = -1e300;
            for (int64_t a = 0; a < v.n; ++a) mx = std::max(mx, xv[(o * v.n + a) * v.inner + i]);
            double denom = 0.0;
            for (int64_t a = 0; a < v.n; ++a) {
                double e = std::exp(xv[(o * v.n + a) * v.inner + i] - mx);
                out[(o * v.n + a) * v.inner + i] = e;
                denom += e;
            }
            for (int64_t a = 0; a < v.n; ++a) out[(o * v.n + a) * v.inner + i] /= denom;
        }
    }
    Tensor result = detail::make_node("softmax", x.shape(), std::move(out), {x}, nullptr);
    detail::TensorImpl* ri = detail::impl(result);
    if (ri->requires_grad) {
        ri->backward_fn = [x, v, ri](const std::vector<double>& g) {
            auto* gx = detail::grad_buffer(x);
            if (!gx) return;
            const std::vector<double>& ov = ri->data;
            for (int64_t o = 0; o < v.outer; ++o) {
                for (int64_t i = 0; i < v.inner; ++i) {
                    double dot = 0.0;
                    for (int64_t a = 0; a < v.n; ++a) {
                        int64_t idx = (o * v.n + a) * v.inner + i;
                        dot += g[idx] * ov[idx];
                    }
                    for (int64_t a = 0; a < v.n; ++a) {
                        int64_t idx = (o * v.n + a) * v.inner + i;
                        (*gx)[idx] += ov[idx] * (g[idx] - dot);
                    }
                }
            }
        };
    }
    return result;
}

Tensor logsumexp(const Tensor& x, int axis) {
    check_axis("logsumexp", x, axis);
    AxisView v = axis_view(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = 1;
    const auto& xv = x.values();
    std::vector<double> out(v.outer * v.inner);
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t i = 0; i < v.inner; ++i) {
            double mx = -1e300;
            for (int64_t a = 0; a < v.n; ++a) mx = std::max(mx, xv[(o * v.n + a) * v.inner + i]);
            double acc = 0.0;
            for (int64_t a = 0; a < v.n; ++a) acc += std::exp(xv[(o * v.n + a) * v.inner + i] - mx);
            out[o * v.inner + i] = mx + std::log(acc);
        }
    }
    Tensor result = detail::make_node("logsumexp", out_shape, std::move(out), {x}, nullptr);
    detail::TensorImpl* ri = detail::impl(result);
    if (ri->requires_grad) {
        ri->backward_fn = [x, v, ri](const std::vector<double>& g) {
            auto* gx = detail::grad_buffer(x);
            if (!gx) return;
            const auto& xv = x.values();
            const std::vector<double>& ov = ri->data;
            for (int64_t o = 0; o < v.outer; ++o)
                for (int64_t i = 0; i < v.inner; ++i) {
                    double lse = ov[o * v.inner + i];
                    double go = g[o * v.inner + i];
                    for (int64_t a = 0; a < v.n; ++a) {
                        int64_t idx = (o * v.n + a) * v.inner + i;
                        (*gx)[idx] += std::exp(xv[idx] - lse) * go;
                    }
                }
        };
    }
    return result;
}

// ---------------------------------------------------------------------------
// shape ops

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_numel(shape) != x.size()) {
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(x.shape()) +
                                    " -> " + shape_str(shape));
    }
    return detail::make_node("reshape", shape, x.values(), {x}, [x](const std::vector<double>& g) {
        detail::accumulate_all(x, g);
    });
}

Tensor apply_index_map(const Tensor& x, const Shape& out_shape, std::vector<int64_t> src_of_dst,
                       const char* op_name) {
    int64_t out_n = shape_numel(out_shape);
    if (out_n != static_cast<int64_t>(src_of_dst.size())) {
        throw std::invalid_argument(std::string(op_name) + ": index map size mismatch");
    }
    const auto& xv = x.values();
    std::vector<double> out(out_n);
    for (int64_t i = 0; i < out_n; ++i) {
        int64_t s = src_of_dst[i];
        if (s < 0 || s >= x.size()) throw std::invalid_argument(std::string(op_name) + ": index out of range");
        out[i] = xv[s];
    }
    auto map = std::make_shared<std::vector<int64_t>>(std::move(src_of_dst));
    return detail::make_node(op_name, out_shape, std::move(out), {x},
                             [x, map](const std::vector<double>& g) {
                                 auto* gx = detail::grad_buffer(x);
                                 if (!gx) return;
                                 for (size_t i = 0; i < g.size(); ++i) (*gx)[(*map)[i]] += g[i];
                             });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    int r = x.rank();
    if (static_cast<int>(axes.size()) != r) throw std::invalid_argument("permute: axes rank mismatch");
    std::vector<bool> used(r, false);
    for (int a : axes) {
        if (a < 0 || a >= r || used[a]) throw std::invalid_argument("permute: axes must be a permutation");
        used[a] = true;
    }
    const Shape& in_shape = x.shape();
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];

    std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];

    std::vector<int64_t> map(x.size());
    for (int64_t flat = 0; flat < x.size(); ++flat) {
        int64_t rem = flat;
        int64_t src = 0;
        for (int i = 0; i < r; ++i) {
            int64_t coord = rem / out_strides[i];
            rem %= out_strides[i];
            src += coord * in_strides[axes[i]];
        }
        map[flat] = src;
    }
    return apply_index_map(x, out_shape, std::move(map), "permute");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    check_axis("concat", parts[0], axis);
    Shape out_shape = first;
    int total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != parts[0].rank()) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < p.rank(); ++i) {
            if (i != axis && p.shape()[i] != first[i]) {
                throw std::invalid_argument("concat: shape mismatch off the concat axis");
            }
        }
        total += p.shape()[axis];
    }
    out_shape[axis] = total;

    AxisView ov = axis_view(out_shape, axis);
    std::vector<double> out(shape_numel(out_shape));
    int64_t offset = 0;
    for (const Tensor& p : parts) {
        AxisView pv = axis_view(p.shape(), axis);
        const auto& pvals = p.values();
        for (int64_t o = 0; o < pv.outer; ++o)
            for (int64_t a = 0; a < pv.n; ++a)
                for (int64_t i = 0; i < pv.inner; ++i)
                    out[(o * ov.n + offset + a) * ov.inner + i] = pvals[(o * pv.n + a) * pv.inner + i];
        offset += pv.n;
    }
    return detail::make_node("concat", out_shape, std::move(out), parts,
                             [parts, axis, ov](const std::vector<double>& g) {
                                 int64_t offset = 0;
                                 for (const Tensor& p : parts) {
                                     AxisView pv = axis_view(p.shape(), axis);
                                     auto* gp = detail::grad_buffer(p);
                                     if (gp) {
                                         for (int64_t o = 0; o < pv.outer; ++o)
                                             for (int64_t a = 0; a < pv.n; ++a)
                                                 for (int64_t i = 0; i < pv.inner; ++i)
                                                     (*gp)[(o * pv.n + a) * pv.inner + i] +=
                                                         g[(o * ov.n + offset + a) * ov.inner + i];
                                     }
                                     offset += pv.n;
                                 }
                             });
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int>& sizes) {
    check_axis("split", x, axis);
    int total = 0;
    for (int s : sizes) {
        if (s <= 0) throw std::invalid_argument("split: sizes must be positive");
        total += s;
    }
    if (total != x.dim(axis)) throw std::invalid_argument("split: sizes do not cover the axis");

    AxisView v = axis_view(x.shape(), axis);
    std::vector<Tensor> parts;
    int offset = 0;
    for (int s : sizes) {
        Shape part_shape = x.shape();
        part_shape[axis] = s;
        std::vector<int64_t> map(shape_numel(part_shape));
        int64_t k = 0;
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t a = 0; a < s; ++a)
                for (int64_t i = 0; i < v.inner; ++i)
                    map[k++] = (o * v.n + offset + a) * v.inner + i;
        parts.push_back(apply_index_map(x, part_shape, std::move(map), "split"));
        offset += s;
    }
    return parts;
}

// ---------------------------------------------------------------------------
// structured ops

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
    if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be [C,H,W]");
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be [Cout,Cin,kh,kw]");
    if (b.rank() != 1) throw std::invalid_argument("conv2d: bias must be [Cout]");
    if (pad < 0) throw std::invalid_argument("conv2d: negative padding");
    const int cin = x.dim(0), h = x.dim(1), wid = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) throw std::invalid_argument("conv2d: weight Cin does not match input");
    if (b.dim(0) != cout) throw std::invalid_argument("conv2d: bias size does not match Cout");
    const int oh = h + 2 * pad - kh + 1;
    const int ow = wid + 2 * pad - kw + 1;
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");

    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<size_t>(cout) * oh * ow);
    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bv[co];
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox + kx - pad;
                            if (ix < 0 || ix >= wid) continue;
                            acc += xv[(static_cast<int64_t>(ci) * h + iy) * wid + ix] *
                                   wv[((static_cast<int64_t>(co) * cin + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out[(static_cast<int64_t>(co) * oh + oy) * ow + ox] = acc;
            }
        }
    }
    return detail::make_node(
        "conv2d", {cout, oh, ow}, std::move(out), {x, w, b},
        [x, w, b, pad, cin, h, wid, cout, kh, kw, oh, ow](const std::vector<double>& g) {
            const auto& xv = x.values();
            const auto& wv = w.values();
            auto* gx = detail::grad_buffer(x);
            auto* gw = detail::grad_buffer(w);
            auto* gb = detail::grad_buffer(b);
            for (int co = 0; co < cout; ++co) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        double go = g[(static_cast<int64_t>(co) * oh + oy) * ow + ox];
                        if (gb) (*gb)[co] += go;
                        for (int ci = 0; ci < cin; ++ci) {
                            for (int ky = 0; ky < kh; ++ky) {
                                int iy = oy + ky - pad;
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    int ix = ox + kx - pad;
                                    if (ix < 0 || ix >= wid) continue;
                                    int64_t xi = (static_cast<int64_t>(ci) * h + iy) * wid + ix;
                                    int64_t wi = ((static_cast<int64_t>(co) * cin + ci) * kh + ky) * kw + kx;
                                    if (gx) (*gx)[xi] += wv[wi] * go;
                                    if (gw) (*gw)[wi] += xv[xi] * go;
                                }
                            }
                        }
                    }
                }
            }
        });
}

namespace {

// Kernel taps allowed by the causal mask, in fixed scan order.
struct Tap {
    int dz, dy, dx;
};

std::vector<Tap> mask_taps(int k, MaskType mask) {
    std::vector<Tap> taps;
    const int c = k / 2;
    for (int dz = 0; dz < k; ++dz)
        for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
                bool before = (dz < c) || (dz == c && dy < c) || (dz == c && dy == c && dx < c);
                bool center = (dz == c && dy == c && dx == c);
                if (before || (mask == MaskType::B && center)) taps.push_back({dz, dy, dx});
            }
    return taps;
}

}  // namespace

Tensor masked_conv3d(const Tensor& x, const Tensor& w, const Tensor& b, MaskType mask) {
    if (x.rank() != 4) throw std::invalid_argument("masked_conv3d: input must be [Cin,D,H,W]");
    if (w.rank() != 5) throw std::invalid_argument("masked_conv3d: weight must be [Cout,Cin,k,k,k]");
    if (b.rank() != 1) throw std::invalid_argument("masked_conv3d: bias must be [Cout]");
    const int cin = x.dim(0), d = x.dim(1), h = x.dim(2), wid = x.dim(3);
    const int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin) throw std::invalid_argument("masked_conv3d: weight Cin does not match input");
    if (w.dim(3) != k || w.dim(4) != k) throw std::invalid_argument("masked_conv3d: kernel must be cubic");
    if (k % 2 == 0) throw std::invalid_argument("masked_conv3d: kernel size must be odd");
    if (b.dim(0) != cout) throw std::invalid_argument("masked_conv3d: bias size does not match Cout");
    const int pad = k / 2;
    auto taps = mask_taps(k, mask);

    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = b.values();
    auto xat = [&](int ci, int z, int y, int xx) {
        return xv[((static_cast<int64_t>(ci) * d + z) * h + y) * wid + xx];
    };
    std::vector<double> out(static_cast<size_t>(cout) * d * h * wid);
    for (int co = 0; co < cout; ++co) {
        for (int oz = 0; oz < d; ++oz) {
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < wid; ++ox) {
                    double acc = bv[co];
                    for (const Tap& t : taps) {
                        int iz = oz + t.dz - pad, iy = oy + t.dy - pad, ix = ox + t.dx - pad;
                        if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= wid) continue;
                        for (int ci = 0; ci < cin; ++ci) {
                            acc += xat(ci, iz, iy, ix) *
                                   wv[(((static_cast<int64_t>(co) * cin + ci) * k + t.dz) * k + t.dy) * k + t.dx];
                        }
                    }
                    out[((static_cast<int64_t>(co) * d + oz) * h + oy) * wid + ox] = acc;
                }
            }
        }
    }
    auto taps_shared = std::make_shared<std::vector<Tap>>(std::move(taps));
    return detail::make_node(
        "masked_conv3d", {cout, d, h, wid}, std::move(out), {x, w, b},
        [x, w, b, taps_shared, pad, cin, d, h, wid, cout, k](const std::vector<double>& g) {
            const auto& xv = x.values();
            const auto& wv = w.values();
            auto* gx = detail::grad_buffer(x);
            auto* gw = detail::grad_buffer(w);
            auto* gb = detail::grad_buffer(b);
            for (int co = 0; co < cout; ++co) {
                for (int oz = 0; oz < d; ++oz) {
                    for (int oy = 0; oy < h; ++oy) {
                        for (int ox = 0; ox < wid; ++ox) {
                            double go = g[((static_cast<int64_t>(co) * d + oz) * h + oy) * wid + ox];
                            if (gb) (*gb)[co] += go;
                            for (const Tap& t : *taps_shared) {
                                int iz = oz + t.dz - pad, iy = oy + t.dy - pad, ix = ox + t.dx - pad;
                                if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= wid) continue;
                                for (int ci = 0; ci < cin; ++ci) {
                                    int64_t xi = ((static_cast<int64_t>(ci) * d + iz) * h + iy) * wid + ix;
                                    int64_t wi =
                                        (((static_cast<int64_t>(co) * cin + ci) * k + t.dz) * k + t.dy) * k + t.dx;
                                    if (gx) (*gx)[xi] += wv[wi] * go;
                                    if (gw) (*gw)[wi] += xv[xi] * go;
                                }
                            }
                        }
                    }
                }
            }
        });
}

Tensor global_avg_pool2d(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("global_avg_pool2d: input must be [C,h,w]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    const auto& xv = x.values();
    std::vector<double> out(c, 0.0);
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (int i = 0; i < h * w; ++i) acc += xv[static_cast<int64_t>(ci) * h * w + i];
        out[ci] = acc * inv;
    }
    return detail::make_node("global_avg_pool2d", {c, 1, 1}, std::move(out), {x},
                             [x, c, h, w, inv](const std::vector<double>& g) {
                                 auto* gx = detail::grad_buffer(x);
                                 if (!gx) return;
                                 for (int ci = 0; ci < c; ++ci)
                                     for (int i = 0; i < h * w; ++i)
                                         (*gx)[static_cast<int64_t>(ci) * h * w + i] += g[ci] * inv;
                             });
}

Tensor scale_channels(const Tensor& x, const Tensor& g) {
    if (x.rank() != 3) throw std::invalid_argument("scale_channels: input must be [C,h,w]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (g.size() != c) throw std::invalid_argument("scale_channels: gate must hold C elements");
    const auto& xv = x.values();
    const auto& gv = g.values();
    std::vector<double> out(xv.size());
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h * w; ++i)
            out[static_cast<int64_t>(ci) * h * w + i] = xv[static_cast<int64_t>(ci) * h * w + i] * gv[ci];
    return detail::make_node("scale_channels", x.shape(), std::move(out), {x, g},
                             [x, g, c, h, w](const std::vector<double>& go) {
                                 const auto& xv = x.values();
                                 const auto& gv = g.values();
                                 auto* gx = detail::grad_buffer(x);
                                 auto* gg = detail::grad_buffer(g);
                                 for (int ci = 0; ci < c; ++ci) {
                                     double acc = 0.0;
                                     for (int i = 0; i < h * w; ++i) {
                                         int64_t idx = static_cast<int64_t>(ci) * h * w + i;
                                         if (gx) (*gx)[idx] += gv[ci] * go[idx];
                                         acc += xv[idx] * go[idx];
                                     }
                                     if (gg) (*gg)[ci] += acc;
                                 }
                             });
}

Tensor avg_pool2(const Tensor& x) {
    if (x.rank() != 3) throw std::invalid_argument("avg_pool2: input must be [C,h,w]");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int oh = h / 2, ow = w / 2;
    if (oh < 1 || ow < 1) throw std::invalid_argument("avg_pool2: input too small");
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(c) * oh * ow);
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int64_t base = static_cast<int64_t>(ci) * h * w;
                double acc = xv[base + (2 * oy) * w + 2 * ox] + xv[base + (2 * oy) * w + 2 * ox + 1] +
                             xv[base + (2 * oy + 1) * w + 2 * ox] + xv[base + (2 * oy + 1) * w + 2 * ox + 1];
                out[(static_cast<int64_t>(ci) * oh + oy) * ow + ox] = acc * 0.25;
            }
    return detail::make_node("avg_pool2", {c, oh, ow}, std::move(out), {x},
                             [x, c, h, w, oh, ow](const std::vector<double>& g) {
                                 auto* gx = detail::grad_buffer(x);
                                 if (!gx) return;
                                 for (int ci = 0; ci < c; ++ci)
                                     for (int oy = 0; oy < oh; ++oy)
                                         for (int ox = 0; ox < ow; ++ox) {
                                             double q = g[(static_cast<int64_t>(ci) * oh + oy) * ow + ox] * 0.25;
                                             int64_t base = static_cast<int64_t>(ci) * h * w;
                                             (*gx)[base + (2 * oy) * w + 2 * ox] += q;
                                             (*gx)[base + (2 * oy) * w + 2 * ox + 1] += q;
                                             (*gx)[base + (2 * oy + 1) * w + 2 * ox] += q;
                                             (*gx)[base + (2 * oy + 1) * w + 2 * ox + 1] += q;
                                         }
                             });
}

// ---------------------------------------------------------------------------
// special ops

Tensor gather_symbols(const Tensor& x, const std::vector<int>& symbols) {
    if (x.rank() < 2) throw std::invalid_argument("gather_symbols: input needs a leading symbol axis");
    const int q = x.dim(0);
    Shape out_shape(x.shape().begin() + 1, x.shape().end());
    int64_t rest = shape_numel(out_shape);
    if (static_cast<int64_t>(symbols.size()) != rest) {
        throw std::invalid_argument("gather_symbols: symbol count does not match trailing shape");
    }
    const auto& xv = x.values();
    std::vector<double> out(rest);
    for (int64_t i = 0; i < rest; ++i) {
        int s = symbols[i];
        if (s < 0 || s >= q) throw std::invalid_argument("gather_symbols: symbol out of range");
        out[i] = xv[static_cast<int64_t>(s) * rest + i];
    }
    auto syms = std::make_shared<std::vector<int>>(symbols);
    return detail::make_node("gather_symbols", out_shape, std::move(out), {x},
                             [x, syms, rest](const std::vector<double>& g) {
                                 auto* gx = detail::grad_buffer(x);
                                 if (!gx) return;
                                 for (int64_t i = 0; i < rest; ++i)
                                     (*gx)[static_cast<int64_t>((*syms)[i]) * rest + i] += g[i];
                             });
}

Tensor ste_override(const Tensor& soft, std::vector<double> hard_values) {
    if (static_cast<int64_t>(hard_values.size()) != soft.size()) {
        throw std::invalid_argument("ste_override: value count mismatch");
    }
    return detail::make_node("ste_override", soft.shape(), std::move(hard_values), {soft},
                             [soft](const std::vector<double>& g) { detail::accumulate_all(soft, g); });
}

}  // namespace cvq
