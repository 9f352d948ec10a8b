#pragma once

#include <cstdint>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet::nn {

// Differentiable primitives. Every function validates shapes up front and, when
// the result requires gradients, records a node whose backward accumulates into
// the parents. No broadcasting except the bias add in affine/conv2d.

// elementwise, identical shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// elementwise max; on ties the gradient routes to `a`
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// relu kink convention: gradient 0 at exactly 0
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// a[m,k] x b[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[m,k] * w[k,n] + bias[n] broadcast over rows
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// x[B,H,W,Cin], w[KH,KW,Cin,Cout] odd kernel, stride 1, zero same-padding,
// bias[Cout] -> [B,H,W,Cout]
Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& b);
// x[B,H,W,C] with even H,W -> [B,H/2,W/2,C]; ties route the gradient to the
// first maximal element in window scan order
Tensor maxpool2x2(const Tensor& x);

// view with identical element count; shares no storage but routes gradients 1:1
Tensor reshape(const Tensor& x, Shape shape);

// fused per-sample losses
// logits [B] or [B,1]; loss_i = max(z,0) - t*z + log1p(exp(-|z|)), the
// log-sum-exp form that stays finite for |z| well beyond 700
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets);
// logits [B,K], labels in [0,K) -> per-sample cross entropy [B]
Tensor softmax_xent(const Tensor& logits, const std::vector<int>& labels);

// reductions to scalar
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// first maximal element in scan order takes the gradient
Tensor max_all(const Tensor& a);
// sum of squares of all elements
Tensor sumsq(const Tensor& a);

// rowwise ops on [B,K] matrices, all returning [B]
Tensor row_max(const Tensor& a);
// max over columns excluding excl[i] in row i; needs K >= 2
Tensor row_max_excluding(const Tensor& a, const std::vector<int>& excl);
Tensor gather_col(const Tensor& a, const std::vector<int>& idx);
Tensor row_sumsq(const Tensor& a);

// columns: K tensors of shape [B] or [B,1] -> [B,K]
Tensor concat_cols(const std::vector<Tensor>& cols);

// per-element choice between same-shape a and b; take_first is constant, the
// gradient follows the chosen element only
Tensor select(const std::vector<std::uint8_t>& take_first, const Tensor& a, const Tensor& b);

}  // namespace advdet::nn
