#pragma once

#include <cstdint>
#include <vector>

namespace stoic::kernels {

// Dense math kernels shared by the autograd ops and the streaming block
// executor. All loops assign each output element to exactly one thread and
// reduce serially within it, so results are bit-identical for any thread
// count.

/// c[m,n] (+)= sum_k a[m,k] * b[k,n]
template <typename T>
void gemm_nn(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c, bool accumulate);

/// c[m,n] (+)= sum_k a[k,m] * b[k,n]   (a transposed; dW-style update)
template <typename T>
void gemm_tn(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c, bool accumulate);

/// out[c0,r] = a[r,c0]
template <typename T>
void transpose(int64_t rows, int64_t cols, const T* a, T* out);

/// x[r,:] += v
template <typename T>
void add_row_vector(int64_t rows, int64_t n, const T* v, T* x);

/// out[j] (+)= sum_r x[r,j]
template <typename T>
void col_sum(int64_t rows, int64_t n, const T* x, T* out, bool accumulate);

/// Numerically stable row softmax.
template <typename T>
void softmax_rows(int64_t rows, int64_t n, const T* x, T* y);

/// GELU, tanh approximation (fixed convention across the project),
/// evaluated through the algebraically equal sigmoid form
/// x * sigmoid(2 * sqrt(2/pi) * (x + 0.044715 x^3)).
template <typename T> void gelu_forward(int64_t n, const T* x, T* y);
/// dx += dy * gelu'(x)
template <typename T> void gelu_backward(int64_t n, const T* x, const T* dy, T* dx);
template <typename T> T gelu_tanh(T x);

struct ConvGeom {
    int64_t batch = 1;
    int64_t c_in = 1, h_in = 1, w_in = 1;
    int64_t c_out = 1;
    int64_t kernel = 1, stride = 1, pad = 0;
    int64_t h_out = 1, w_out = 1;
};

/// Cross-correlation (no kernel flip), zero padding.
/// x[B,Ci,Hi,Wi], w[Co,Ci,K,K], bias[Co] nullable -> y[B,Co,Ho,Wo].
template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y);

/// Accumulating gradients; any of dx/dw/db may be null.
template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);

/// Adjoint of conv2d with the same geometry.
/// x[B,Ci,Hi,Wi], w[Ci,Co,K,K], bias[Co] nullable -> y[B,Co,Ho,Wo]
/// with h_out = (h_in-1)*stride - 2*pad + kernel.
template <typename T>
void conv_transpose2d_forward(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y);

template <typename T>
void conv_transpose2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                               T* db);

/// Normalizes the last axis of x viewed as [rows, n]; saves per-row mean and
/// reciprocal stddev for the backward pass.
template <typename T>
void layer_norm_forward(int64_t rows, int64_t n, const T* x, const T* gamma, const T* beta, T eps,
                        T* y, T* mean, T* rstd);

template <typename T>
void layer_norm_backward(int64_t rows, int64_t n, const T* x, const T* gamma, const T* mean,
                         const T* rstd, const T* dy, T* dx, T* dgamma, T* dbeta);

/// Per-channel batch statistics over (B,H,W); always batch stats, no running
/// averages (the layer exists for the initial-conv normalization ablation).
template <typename T>
void batch_norm_forward(int64_t batch, int64_t channels, int64_t hw, const T* x, const T* gamma,
                        const T* beta, T eps, T* y, T* mean, T* rstd);

template <typename T>
void batch_norm_backward(int64_t batch, int64_t channels, int64_t hw, const T* x, const T* gamma,
                         const T* mean, const T* rstd, const T* dy, T* dx, T* dgamma, T* dbeta);

/// Saved activations for one attention evaluation. Reusable across calls
/// with the same geometry; buffers are resized on demand.
template <typename T>
struct MhaWorkspace {
    std::vector<T> qkv;   // [B,T,3L]
    std::vector<T> attn;  // [B,heads,T,T], post-softmax
    std::vector<T> ctx;   // [B,T,L], pre-output-projection
};

/// Fused multi-head self-attention, scale 1/sqrt(L/heads), no positional
/// input of any kind. x[B,T,L], wqkv[L,3L], wout[L,L] -> y[B,T,L].
template <typename T>
void mha_forward(int64_t batch, int64_t tlen, int64_t dim, int64_t heads, const T* x, const T* wqkv,
                 const T* bqkv, const T* wout, const T* bout, T* y, MhaWorkspace<T>& ws);

template <typename T>
void mha_backward(int64_t batch, int64_t tlen, int64_t dim, int64_t heads, const T* x, const T* wqkv,
                  const T* wout, const MhaWorkspace<T>& ws, const T* dy, T* dx, T* dwqkv, T* dbqkv,
                  T* dwout, T* dbout);

}  // namespace stoic::kernels
