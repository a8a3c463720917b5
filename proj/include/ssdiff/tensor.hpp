#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ssdiff/array.hpp"

namespace ssdiff {

/// Thread-local flag: when false, ops record no graph (inference mode).
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    Array value;
    Array grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    /// Propagates this node's grad into its parents.
    std::function<void(TensorNode&)> backprop;

    void add_grad(const Array& g);
    void add_grad_scaled(const Array& g, double s);
    Array& grad_buffer();
};

/// Value-semantic handle to a node in the autodiff graph.
class Tensor {
public:
    Tensor() = default;
    /// Leaf tensor; set requires_grad for trainable parameters.
    explicit Tensor(Array v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(n_); }
    const Array& value() const { return n_->value; }
    Array& value() { return n_->value; }
    const Array& grad() const { return n_->grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }
    void zero_grad() { n_->grad = Array(); }

    const std::vector<int64_t>& shape() const { return n_->value.shape(); }
    int64_t dim(int i) const { return n_->value.dim(i); }

    NodePtr node() const { return n_; }
    static Tensor from_node(NodePtr n);

private:
    NodePtr n_;
};

/// Reverse-mode sweep from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Tensor& root);

// ---- graph-building ops ----

Tensor constant(Array v);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor silu(const Tensor& a);
/// Shares the value, drops the graph edge.
Tensor detach(const Tensor& a);

/// (A,B)x(B,C) or batched (N,A,B)x(N,B,C).
Tensor matmul(const Tensor& a, const Tensor& b);
/// alpha * (a x b) without materializing an intermediate.
Tensor matmul_scaled(const Tensor& a, const Tensor& b, double alpha);
/// Softmax over the last dimension.
Tensor softmax_rows(const Tensor& a);
/// Swap the last two dims (copy).
Tensor transpose_last2(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);
/// (N,C,H,W) -> (N,HW,C)
Tensor chw_to_pixmat(const Tensor& a);
/// (N,HW,C) -> (N,C,H,W)
Tensor pixmat_to_chw(const Tensor& a, int64_t h, int64_t w);
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// x (N,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout); zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample_nearest2(const Tensor& x);
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  double eps = 1e-5);
/// v (N,C) added to x (N,C,H,W) across all pixels.
Tensor add_channel_vec(const Tensor& x, const Tensor& v);
/// a (A,B) applied per row of x (N,A): y = x * a^T + b.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Mean absolute error over all elements; scalar result (shape {1}).
Tensor l1_loss(const Tensor& a, const Tensor& b);

}  // namespace ssdiff
