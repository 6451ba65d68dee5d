#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ssda2/tensor.hpp"

namespace ssda2 {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Nodes are created in forward order,
/// so the creation sequence number is a valid topological order for the
/// backward sweep. Gradients are allocated lazily; a node whose gradient was
/// never touched is skipped during backward.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<Var> parents;
  std::function<void(Node&)> backfn;

  Tensor& g() {
    if (!grad.defined() || !grad.same_shape(value)) grad = Tensor::zeros(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.defined(); }
};

/// Thread-local switch mirroring the usual no-grad guard: while disabled,
/// newly built nodes carry no backward functions.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool prev;
};

Var make_leaf(Tensor value, bool requires_grad);
inline Var constant(Tensor value) { return make_leaf(std::move(value), false); }
Var detach(const Var& x);

/// Reverse sweep from a scalar root. Accumulates into leaf .grad tensors.
void backward(const Var& root);

void zero_grad(const std::vector<Var>& params);

// ---- elementwise / scalar ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var square(const Var& a);
Var sqrt_eps(const Var& a, double eps);
Var rsqrt_eps(const Var& a, double eps);

// ---- reductions / broadcasts ----
Var mean_all(const Var& a);
Var sum_all(const Var& a);
/// (N,C,H,W) -> (N,C), mean over the spatial dims.
Var mean_spatial(const Var& x);
/// x: (N,C,H,W), v: (N,C) broadcast over H,W.
Var bc_mul(const Var& x, const Var& v);
Var bc_add(const Var& x, const Var& v);

// ---- structure ----
Var concat_channels(const Var& a, const Var& b);

// ---- neural net ops ----
/// x: (N,Cin,H,W), w: (Cout,Cin,K,K), b: (Cout). Stride 1, zero padding K/2.
Var conv2d(const Var& x, const Var& w, const Var& b);
/// 2x2 max pooling, stride 2; H and W must be even.
Var maxpool2(const Var& x);
/// Nearest-neighbour 2x upsampling.
Var upsample2(const Var& x);
/// x: (N,K), w: (M,K), b: (M) -> (N,M).
Var linear(const Var& x, const Var& w, const Var& b);
/// Row-wise L2 normalization of (N,K); guarded against zero rows.
Var l2_normalize_rows(const Var& x);
/// Row-wise dot product of two (N,K) -> (N).
Var rowdot(const Var& a, const Var& b);

// ---- losses ----
/// Mean over elements of the Huber-style smooth L1 with threshold beta.
Var smooth_l1(const Var& a, const Var& b, double beta = 1.0);
/// Mean squared error over all elements.
Var mse(const Var& a, const Var& b);
/// Numerically stable mean binary cross entropy on logits; target in [0,1].
Var bce_with_logits(const Var& logits, const Var& target);

}  // namespace ssda2
