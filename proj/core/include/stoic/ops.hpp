#pragma once

#include "stoic/tensor.hpp"

namespace stoic {

// Differentiable tensor operations. Each op validates shapes, runs the
// corresponding kernel, and (when gradients are being tracked) attaches a
// backward closure to the output.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

/// Sum of all elements, rank-0 output.
Tensor sum(const Tensor& a);
/// mean((a - b)^2) over every element.
Tensor mean_squared_error(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates same-rank tensors along `axis`; other extents must match.
Tensor concat(const Tensor& a, const Tensor& b, int axis);
/// First `count` entries along `axis`.
Tensor slice_prefix(const Tensor& a, int axis, int64_t count);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& a);
/// [B,C,H,W] -> [B,H*W,C] row-major sequence of channel vectors.
Tensor nchw_to_seq(const Tensor& a);
/// [B,T,C] with T == h*w -> [B,C,h,w].
Tensor seq_to_nchw(const Tensor& a, int64_t h, int64_t w);

/// x[...,in] @ w[in,out] + b[out]; leading axes are treated as batch.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor gelu(const Tensor& x);

/// Normalizes the last axis to zero mean / unit variance, then applies the
/// (gamma, beta) affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Channel batch norm over (B,H,W) with batch statistics (ablation layer).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Cross-correlation convolution, zero padding.
/// x[B,Ci,H,W], w[Co,Ci,K,K], b[Co] -> [B,Co,Ho,Wo],
/// Ho = floor((H + 2P - K)/S) + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

/// Adjoint of conv2d with the same geometry.
/// x[B,Ci,H,W], w[Ci,Co,K,K], b[Co] -> [B,Co,Ho,Wo], Ho = (H-1)S - 2P + K.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

/// Scaled dot-product multi-head self-attention over x[B,T,L].
/// wqkv[L,3L], wout[L,L]; no positional information is injected anywhere.
Tensor multi_head_attention(const Tensor& x, const Tensor& wqkv, const Tensor& bqkv,
                            const Tensor& wout, const Tensor& bout, int heads);

/// linear -> gelu -> linear.
Tensor mlp(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2);

}  // namespace stoic
