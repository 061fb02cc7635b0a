#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
// Every operation builds a node in an implicit DAG (outputs hold shared
// ownership of their inputs); backward() walks that DAG once in reverse
// topological order. Single-threaded by design: determinism over speed.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cvq {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the node receives a gradient
    std::vector<Tensor> parents;
    std::function<void(const std::vector<double>& grad_out)> backward_fn;
    const char* op = "leaf";
    bool requires_grad = false;
    bool consumed = false;  // set once backward() has run through this node
};

}  // namespace detail

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from_vector(const Shape& shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int dim(int axis) const;
    int64_t size() const;
    const char* op() const;
    bool requires_grad() const;

    double item() const;  // single-element tensors only
    const std::vector<double>& values() const;
    // In-place access for leaves (parameter updates). Graph nodes refuse it.
    std::vector<double>& mutable_values();

    bool has_grad() const;
    Tensor grad() const;  // zeros if no gradient ever reached this tensor
    void zero_grad() const;

    bool same_ref(const Tensor& other) const { return impl_ == other.impl_; }

  private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend detail::TensorImpl* detail_impl(const Tensor& t);
    friend Tensor detail_wrap(std::shared_ptr<detail::TensorImpl> impl);
};

detail::TensorImpl* detail_impl(const Tensor& t);
Tensor detail_wrap(std::shared_ptr<detail::TensorImpl> impl);

namespace detail {

TensorImpl* impl(const Tensor& t);

// Builds a graph node. `backward` receives the output gradient and is
// responsible for pushing contributions into the captured parents via
// accumulate(). Pass an empty function for non-differentiable outputs.
Tensor make_node(const char* op, Shape shape, std::vector<double> data,
                 std::vector<Tensor> parents,
                 std::function<void(const std::vector<double>&)> backward);

// Adds `value` into the gradient slot `index` of `t` (no-op when the tensor
// does not require gradients).
void accumulate(const Tensor& t, int64_t index, double value);
// Whole-buffer accumulation; sizes must match.
void accumulate_all(const Tensor& t, const std::vector<double>& contribution);
// Direct access to the (lazily allocated) gradient buffer.
std::vector<double>* grad_buffer(const Tensor& t);

}  // namespace detail

// ---- elementwise, same shape ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// ---- tensor (any shape) against a single-element tensor ----
Tensor broadcast_add(const Tensor& x, const Tensor& s);
Tensor broadcast_mul(const Tensor& x, const Tensor& s);

// ---- constants ----
Tensor add_const(const Tensor& x, double c);
Tensor mul_const(const Tensor& x, double c);
Tensor pow_const(const Tensor& x, double p);  // x must stay positive for non-integer p
Tensor clamp_min(const Tensor& x, double lo);

// ---- unary ----
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);

// ---- reductions ----
Tensor sum_all(const Tensor& x);   // -> [1]
Tensor mean_all(const Tensor& x);  // -> [1]
Tensor sum_axis(const Tensor& x, int axis);   // keeps the axis with size 1
Tensor mean_axis(const Tensor& x, int axis);  // keeps the axis with size 1

// ---- softmax family (numerically stabilized via max subtraction) ----
Tensor softmax(const Tensor& x, int axis);
Tensor logsumexp(const Tensor& x, int axis);  // keeps the axis with size 1

// ---- shape ops ----
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int>& sizes);
// out[i] = x[src_of_dst[i]]; gradient scatters back through the map.
Tensor apply_index_map(const Tensor& x, const Shape& out_shape,
                       std::vector<int64_t> src_of_dst, const char* op_name);

// ---- structured ----
// x [Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; stride 1, zero padding `pad`.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad);

enum class MaskType { A, B };  // A: strictly-before-center taps; B: center included
// x [Cin,D,H,W], w [Cout,Cin,k,k,k] with odd k, b [Cout]; stride 1,
// zero padding k/2 (spatial extent preserved). Masked taps are skipped,
// not zeroed, so summation order is identical however the rest of the
// input is filled in.
Tensor masked_conv3d(const Tensor& x, const Tensor& w, const Tensor& b, MaskType mask);

Tensor global_avg_pool2d(const Tensor& x);              // [C,h,w] -> [C,1,1]
Tensor scale_channels(const Tensor& x, const Tensor& g);  // g [C,1,1] or [C]
Tensor avg_pool2(const Tensor& x);  // 2x2 mean, stride 2, odd edges dropped

// ---- special ----
// x [Q, rest...], symbols indexes the leading axis per trailing position.
Tensor gather_symbols(const Tensor& x, const std::vector<int>& symbols);
// Forward takes `hard_values`; backward passes the gradient to `soft`
// untouched (straight-through pairing).
Tensor ste_override(const Tensor& soft, std::vector<double> hard_values);

// Reverse-mode sweep from a scalar loss. Each reachable node is visited
// exactly once, in reverse topological order, with parents expanded in a
// fixed order so gradient accumulation is deterministic. A loss can only be
// swept once; rebuild the graph for the next step.
void backward(const Tensor& loss);

}  // namespace cvq
