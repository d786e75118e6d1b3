#include "stoic/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stoic::kernels {

namespace {

// Minimum multiply count before threading a gemm is worth the fork.
constexpr int64_t kParallelWork = 1 << 16;

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace

template <typename T>
void gemm_nn(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork && m > 1)
    for (int64_t mm = 0; mm < m; ++mm) {
        T* crow = c + mm * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + mm * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            T av = arow[kk];
            const T* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_tn(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    // k outermost keeps both a and b rows contiguous; threads own disjoint
    // row ranges of c, so the per-row accumulation order stays serial.
#pragma omp parallel if (m * k * n > kParallelWork && m > 1)
    {
#ifdef _OPENMP
        int nt = omp_get_num_threads();
        int tid = omp_get_thread_num();
#else
        int nt = 1, tid = 0;
#endif
        int64_t lo = m * tid / nt;
        int64_t hi = m * (tid + 1) / nt;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T* arow = a + kk * m;
            const T* brow = b + kk * n;
            for (int64_t mm = lo; mm < hi; ++mm) {
                T av = arow[mm];
                T* crow = c + mm * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    (void)thread_count;
}

template <typename T>
void transpose(int64_t rows, int64_t cols, const T* a, T* out) {
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c0 = 0; c0 < cols; ++c0) out[c0 * rows + r] = a[r * cols + c0];
}

template <typename T>
void add_row_vector(int64_t rows, int64_t n, const T* v, T* x) {
    for (int64_t r = 0; r < rows; ++r) {
        T* row = x + r * n;
        for (int64_t j = 0; j < n; ++j) row[j] += v[j];
    }
}

template <typename T>
void col_sum(int64_t rows, int64_t n, const T* x, T* out, bool accumulate) {
    if (!accumulate) std::fill(out, out + n, T(0));
    for (int64_t r = 0; r < rows; ++r) {
        const T* row = x + r * n;
        for (int64_t j = 0; j < n; ++j) out[j] += row[j];
    }
}

template <typename T>
void softmax_rows(int64_t rows, int64_t n, const T* x, T* y) {
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * n;
        T* yr = y + r * n;
        T mx = xr[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
#pragma omp simd
        for (int64_t j = 0; j < n; ++j) yr[j] = std::exp(xr[j] - mx);
        T sum = T(0);  // serial sum keeps the reduction order fixed
        for (int64_t j = 0; j < n; ++j) sum += yr[j];
        T inv = T(1) / sum;
        for (int64_t j = 0; j < n; ++j) yr[j] *= inv;
    }
}

namespace {
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;
}  // namespace

template <typename T>
void gelu_forward(int64_t n, const T* x, T* y) {
    const T c0 = static_cast<T>(kGeluC0), c1 = static_cast<T>(kGeluC1);
#pragma omp simd
    for (int64_t i = 0; i < n; ++i) {
        T v = x[i];
        T u = c0 * (v + c1 * v * v * v);
        T s = T(1) / (T(1) + std::exp(T(-2) * u));  // 0.5 * (1 + tanh(u))
        y[i] = v * s;
    }
}

template <typename T>
void gelu_backward(int64_t n, const T* x, const T* dy, T* dx) {
    const T c0 = static_cast<T>(kGeluC0), c1 = static_cast<T>(kGeluC1);
#pragma omp simd
    for (int64_t i = 0; i < n; ++i) {
        T v = x[i];
        T u = c0 * (v + c1 * v * v * v);
        T s = T(1) / (T(1) + std::exp(T(-2) * u));
        T du = c0 * (T(1) + T(3) * c1 * v * v);
        dx[i] += dy[i] * (s + v * s * (T(1) - s) * T(2) * du);
    }
}

template <typename T> T gelu_tanh(T x) {
    T out;
    gelu_forward(1, &x, &out);
    return out;
}

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y) {
#pragma omp parallel for schedule(static) if (g.batch >= 8)
    for (int64_t b = 0; b < g.batch; ++b) {
        const T* xb = x + b * g.c_in * g.h_in * g.w_in;
        T* yb = y + b * g.c_out * g.h_out * g.w_out;
        for (int64_t co = 0; co < g.c_out; ++co) {
            const T* wco = w + co * g.c_in * g.kernel * g.kernel;
            for (int64_t oy = 0; oy < g.h_out; ++oy)
                for (int64_t ox = 0; ox < g.w_out; ++ox) {
                    T acc = bias ? bias[co] : T(0);
                    for (int64_t ci = 0; ci < g.c_in; ++ci) {
                        const T* xc = xb + ci * g.h_in * g.w_in;
                        const T* wc = wco + ci * g.kernel * g.kernel;
                        for (int64_t ky = 0; ky < g.kernel; ++ky) {
                            int64_t iy = oy * g.stride - g.pad + ky;
                            if (iy < 0 || iy >= g.h_in) continue;
                            for (int64_t kx = 0; kx < g.kernel; ++kx) {
                                int64_t ix = ox * g.stride - g.pad + kx;
                                if (ix < 0 || ix >= g.w_in) continue;
                                acc += xc[iy * g.w_in + ix] * wc[ky * g.kernel + kx];
                            }
                        }
                    }
                    yb[(co * g.h_out + oy) * g.w_out + ox] = acc;
                }
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    for (int64_t b = 0; b < g.batch; ++b) {
        const T* xb = x + b * g.c_in * g.h_in * g.w_in;
        T* dxb = dx ? dx + b * g.c_in * g.h_in * g.w_in : nullptr;
        const T* dyb = dy + b * g.c_out * g.h_out * g.w_out;
        for (int64_t co = 0; co < g.c_out; ++co) {
            const T* wco = w + co * g.c_in * g.kernel * g.kernel;
            T* dwco = dw ? dw + co * g.c_in * g.kernel * g.kernel : nullptr;
            for (int64_t oy = 0; oy < g.h_out; ++oy)
                for (int64_t ox = 0; ox < g.w_out; ++ox) {
                    T go = dyb[(co * g.h_out + oy) * g.w_out + ox];
                    if (db) db[co] += go;
                    for (int64_t ci = 0; ci < g.c_in; ++ci) {
                        const T* xc = xb + ci * g.h_in * g.w_in;
                        T* dxc = dxb ? dxb + ci * g.h_in * g.w_in : nullptr;
                        for (int64_t ky = 0; ky < g.kernel; ++ky) {
                            int64_t iy = oy * g.stride - g.pad + ky;
                            if (iy < 0 || iy >= g.h_in) continue;
                            for (int64_t kx = 0; kx < g.kernel; ++kx) {
                                int64_t ix = ox * g.stride - g.pad + kx;
                                if (ix < 0 || ix >= g.w_in) continue;
                                int64_t wi = ci * g.kernel * g.kernel + ky * g.kernel + kx;
                                if (dwco) dwco[wi] += go * xc[iy * g.w_in + ix];
                                if (dxc) dxc[iy * g.w_in + ix] += go * wco[wi];
                            }
                        }
                    }
                }
        }
    }
}

template <typename T>
void conv_transpose2d_forward(const ConvGeom& g, const T* x, const T* w, const T* bias, T* y) {
    int64_t out_plane = g.h_out * g.w_out;
#pragma omp parallel for schedule(static) if (g.batch >= 8)
    for (int64_t b = 0; b < g.batch; ++b) {
        const T* xb = x + b * g.c_in * g.h_in * g.w_in;
        T* yb = y + b * g.c_out * out_plane;
        for (int64_t co = 0; co < g.c_out; ++co) {
            T* yc = yb + co * out_plane;
            std::fill(yc, yc + out_plane, bias ? bias[co] : T(0));
        }
        for (int64_t ci = 0; ci < g.c_in; ++ci) {
            const T* xc = xb + ci * g.h_in * g.w_in;
            const T* wci = w + ci * g.c_out * g.kernel * g.kernel;
            for (int64_t iy = 0; iy < g.h_in; ++iy)
                for (int64_t ix = 0; ix < g.w_in; ++ix) {
                    T v = xc[iy * g.w_in + ix];
                    for (int64_t co = 0; co < g.c_out; ++co) {
                        const T* wc = wci + co * g.kernel * g.kernel;
                        T* yc = yb + co * out_plane;
                        for (int64_t ky = 0; ky < g.kernel; ++ky) {
                            int64_t oy = iy * g.stride - g.pad + ky;
                            if (oy < 0 || oy >= g.h_out) continue;
                            for (int64_t kx = 0; kx < g.kernel; ++kx) {
                                int64_t ox = ix * g.stride - g.pad + kx;
                                if (ox < 0 || ox >= g.w_out) continue;
                                yc[oy * g.w_out + ox] += v * wc[ky * g.kernel + kx];
                            }
                        }
                    }
                }
        }
    }
}

template <typename T>
void conv_transpose2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw,
                               T* db) {
    int64_t out_plane = g.h_out * g.w_out;
    if (db) {
        for (int64_t b = 0; b < g.batch; ++b)
            for (int64_t co = 0; co < g.c_out; ++co) {
                const T* dyc = dy + (b * g.c_out + co) * out_plane;
                for (int64_t i = 0; i < out_plane; ++i) db[co] += dyc[i];
            }
    }
    for (int64_t b = 0; b < g.batch; ++b) {
        const T* xb = x + b * g.c_in * g.h_in * g.w_in;
        T* dxb = dx ? dx + b * g.c_in * g.h_in * g.w_in : nullptr;
        const T* dyb = dy + b * g.c_out * out_plane;
        for (int64_t ci = 0; ci < g.c_in; ++ci) {
            const T* xc = xb + ci * g.h_in * g.w_in;
            T* dxc = dxb ? dxb + ci * g.h_in * g.w_in : nullptr;
            const T* wci = w + ci * g.c_out * g.kernel * g.kernel;
            T* dwci = dw ? dw + ci * g.c_out * g.kernel * g.kernel : nullptr;
            for (int64_t iy = 0; iy < g.h_in; ++iy)
                for (int64_t ix = 0; ix < g.w_in; ++ix) {
                    T xv = xc[iy * g.w_in + ix];
                    T acc = T(0);
                    for (int64_t co = 0; co < g.c_out; ++co) {
                        const T* wc = wci + co * g.kernel * g.kernel;
                        T* dwc = dwci ? dwci + co * g.kernel * g.kernel : nullptr;
                        const T* dyc = dyb + co * out_plane;
                        for (int64_t ky = 0; ky < g.kernel; ++ky) {
                            int64_t oy = iy * g.stride - g.pad + ky;
                            if (oy < 0 || oy >= g.h_out) continue;
                            for (int64_t kx = 0; kx < g.kernel; ++kx) {
                                int64_t ox = ix * g.stride - g.pad + kx;
                                if (ox < 0 || ox >= g.w_out) continue;
                                T go = dyc[oy * g.w_out + ox];
                                acc += go * wc[ky * g.kernel + kx];
                                if (dwc) dwc[ky * g.kernel + kx] += go * xv;
                            }
                        }
                    }
                    if (dxc) dxc[iy * g.w_in + ix] += acc;
                }
        }
    }
}

template <typename T>
void layer_norm_forward(int64_t rows, int64_t n, const T* x, const T* gamma, const T* beta, T eps,
                        T* y, T* mean, T* rstd) {
    T inv_n = T(1) / static_cast<T>(n);
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * n;
        T* yr = y + r * n;
        T mu = T(0);
        for (int64_t j = 0; j < n; ++j) mu += xr[j];
        mu *= inv_n;
        T var = T(0);
        for (int64_t j = 0; j < n; ++j) {
            T d = xr[j] - mu;
            var += d * d;
        }
        var *= inv_n;
        T rs = T(1) / std::sqrt(var + eps);
        mean[r] = mu;
        rstd[r] = rs;
        for (int64_t j = 0; j < n; ++j) yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    }
}

template <typename T>
void layer_norm_backward(int64_t rows, int64_t n, const T* x, const T* gamma, const T* mean,
                         const T* rstd, const T* dy, T* dx, T* dgamma, T* dbeta) {
    T inv_n = T(1) / static_cast<T>(n);
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * n;
        const T* dyr = dy + r * n;
        T mu = mean[r], rs = rstd[r];
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (int64_t j = 0; j < n; ++j) {
            T xhat = (xr[j] - mu) * rs;
            T dxhat = dyr[j] * gamma[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (dgamma) dgamma[j] += dyr[j] * xhat;
            if (dbeta) dbeta[j] += dyr[j];
        }
        if (dx) {
            T* dxr = dx + r * n;
            for (int64_t j = 0; j < n; ++j) {
                T xhat = (xr[j] - mu) * rs;
                T dxhat = dyr[j] * gamma[j];
                dxr[j] += rs * (dxhat - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
            }
        }
    }
}

template <typename T>
void batch_norm_forward(int64_t batch, int64_t channels, int64_t hw, const T* x, const T* gamma,
                        const T* beta, T eps, T* y, T* mean, T* rstd) {
    int64_t m = batch * hw;
    T inv_m = T(1) / static_cast<T>(m);
    for (int64_t c = 0; c < channels; ++c) {
        T mu = T(0);
        for (int64_t b = 0; b < batch; ++b) {
            const T* xc = x + (b * channels + c) * hw;
            for (int64_t i = 0; i < hw; ++i) mu += xc[i];
        }
        mu *= inv_m;
        T var = T(0);
        for (int64_t b = 0; b < batch; ++b) {
            const T* xc = x + (b * channels + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                T d = xc[i] - mu;
                var += d * d;
            }
        }
        var *= inv_m;
        T rs = T(1) / std::sqrt(var + eps);
        mean[c] = mu;
        rstd[c] = rs;
        for (int64_t b = 0; b < batch; ++b) {
            const T* xc = x + (b * channels + c) * hw;
            T* yc = y + (b * channels + c) * hw;
            for (int64_t i = 0; i < hw; ++i) yc[i] = (xc[i] - mu) * rs * gamma[c] + beta[c];
        }
    }
}

template <typename T>
void batch_norm_backward(int64_t batch, int64_t channels, int64_t hw, const T* x, const T* gamma,
                         const T* mean, const T* rstd, const T* dy, T* dx, T* dgamma, T* dbeta) {
    int64_t m = batch * hw;
    T inv_m = T(1) / static_cast<T>(m);
    for (int64_t c = 0; c < channels; ++c) {
        T mu = mean[c], rs = rstd[c];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int64_t b = 0; b < batch; ++b) {
            const T* xc = x + (b * channels + c) * hw;
            const T* dyc = dy + (b * channels + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                T xhat = (xc[i] - mu) * rs;
                sum_dy += dyc[i];
                sum_dy_xhat += dyc[i] * xhat;
            }
        }
        if (dgamma) dgamma[c] += sum_dy_xhat;
        if (dbeta) dbeta[c] += sum_dy;
        if (dx) {
            for (int64_t b = 0; b < batch; ++b) {
                const T* xc = x + (b * channels + c) * hw;
                const T* dyc = dy + (b * channels + c) * hw;
                T* dxc = dx + (b * channels + c) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    T xhat = (xc[i] - mu) * rs;
                    dxc[i] += gamma[c] * rs * (dyc[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                }
            }
        }
    }
}

template <typename T>
void mha_forward(int64_t batch, int64_t tlen, int64_t dim, int64_t heads, const T* x, const T* wqkv,
                 const T* bqkv, const T* wout, const T* bout, T* y, MhaWorkspace<T>& ws) {
    int64_t dh = dim / heads;
    int64_t rows = batch * tlen;
    T scale = T(1) / std::sqrt(static_cast<T>(dh));

    ws.qkv.resize(static_cast<size_t>(rows * 3 * dim));
    ws.attn.resize(static_cast<size_t>(batch * heads * tlen * tlen));
    ws.ctx.resize(static_cast<size_t>(rows * dim));

    // qkv = x @ wqkv + bqkv
    gemm_nn(rows, dim, 3 * dim, x, wqkv, ws.qkv.data(), false);
    add_row_vector(rows, 3 * dim, bqkv, ws.qkv.data());

    // Each (batch, head) pair owns disjoint slices of attn and ctx.
#pragma omp parallel if (batch * heads > 1)
    {
        std::vector<T> tiles(static_cast<size_t>(4 * tlen * dh));
        T* q_tile = tiles.data();
        T* kt_tile = q_tile + tlen * dh;
        T* v_tile = kt_tile + dh * tlen;
        T* o_tile = v_tile + tlen * dh;
#pragma omp for schedule(static)
        for (int64_t bh = 0; bh < batch * heads; ++bh) {
            int64_t b = bh / heads, h = bh % heads;
            const T* qkv_b = ws.qkv.data() + b * tlen * 3 * dim;
            // Gather contiguous per-head tiles; q is pre-scaled.
            for (int64_t t = 0; t < tlen; ++t) {
                const T* row = qkv_b + t * 3 * dim;
                for (int64_t d = 0; d < dh; ++d) {
                    q_tile[t * dh + d] = row[h * dh + d] * scale;
                    kt_tile[d * tlen + t] = row[dim + h * dh + d];
                    v_tile[t * dh + d] = row[2 * dim + h * dh + d];
                }
            }
            T* attn = ws.attn.data() + bh * tlen * tlen;
            gemm_nn(tlen, dh, tlen, q_tile, kt_tile, attn, false);
            softmax_rows(tlen, tlen, attn, attn);
            gemm_nn(tlen, tlen, dh, attn, v_tile, o_tile, false);
            T* ctx_b = ws.ctx.data() + b * tlen * dim;
            for (int64_t t = 0; t < tlen; ++t)
                for (int64_t d = 0; d < dh; ++d) ctx_b[t * dim + h * dh + d] = o_tile[t * dh + d];
        }
    }

    // y = ctx @ wout + bout
    gemm_nn(rows, dim, dim, ws.ctx.data(), wout, y, false);
    add_row_vector(rows, dim, bout, y);
}

template <typename T>
void mha_backward(int64_t batch, int64_t tlen, int64_t dim, int64_t heads, const T* x, const T* wqkv,
                  const T* wout, const MhaWorkspace<T>& ws, const T* dy, T* dx, T* dwqkv, T* dbqkv,
                  T* dwout, T* dbout) {
    int64_t dh = dim / heads;
    int64_t rows = batch * tlen;
    T scale = T(1) / std::sqrt(static_cast<T>(dh));

    // Output projection.
    if (dwout) gemm_tn(dim, rows, dim, ws.ctx.data(), dy, dwout, true);
    if (dbout) col_sum(rows, dim, dy, dbout, true);
    std::vector<T> dctx(static_cast<size_t>(rows * dim));
    std::vector<T> wt(static_cast<size_t>(dim * dim));
    transpose(dim, dim, wout, wt.data());
    gemm_nn(rows, dim, dim, dy, wt.data(), dctx.data(), false);

    std::vector<T> dqkv(static_cast<size_t>(rows * 3 * dim), T(0));
    // Each (batch, head) pair writes disjoint column slices of dqkv.
#pragma omp parallel if (batch * heads > 1)
    {
        std::vector<T> tiles(static_cast<size_t>(6 * tlen * dh));
        std::vector<T> da(static_cast<size_t>(tlen * tlen));
        T* q_tile = tiles.data();               // pre-scaled q
        T* k_tile = q_tile + tlen * dh;
        T* vt_tile = k_tile + tlen * dh;        // v transposed [dh, tlen]
        T* do_tile = vt_tile + dh * tlen;       // dctx head tile
        T* dq_tile = do_tile + tlen * dh;
        T* dkv_tile = dq_tile + tlen * dh;
#pragma omp for schedule(static)
        for (int64_t bh = 0; bh < batch * heads; ++bh) {
            int64_t b = bh / heads, h = bh % heads;
            const T* qkv_b = ws.qkv.data() + b * tlen * 3 * dim;
            T* dqkv_b = dqkv.data() + b * tlen * 3 * dim;
            const T* attn = ws.attn.data() + bh * tlen * tlen;
            for (int64_t t = 0; t < tlen; ++t) {
                const T* row = qkv_b + t * 3 * dim;
                const T* dctx_row = dctx.data() + (b * tlen + t) * dim;
                for (int64_t d = 0; d < dh; ++d) {
                    q_tile[t * dh + d] = row[h * dh + d] * scale;
                    k_tile[t * dh + d] = row[dim + h * dh + d];
                    vt_tile[d * tlen + t] = row[2 * dim + h * dh + d];
                    do_tile[t * dh + d] = dctx_row[h * dh + d];
                }
            }
            // dA = dctx_head @ v^T
            gemm_nn(tlen, dh, tlen, do_tile, vt_tile, da.data(), false);
            // dV = A^T @ dctx_head
            gemm_tn(tlen, tlen, dh, attn, do_tile, dkv_tile, false);
            for (int64_t t = 0; t < tlen; ++t)
                for (int64_t d = 0; d < dh; ++d)
                    dqkv_b[t * 3 * dim + 2 * dim + h * dh + d] = dkv_tile[t * dh + d];
            // Softmax backward in place: dS = A * (dA - rowdot(dA, A)).
            for (int64_t t = 0; t < tlen; ++t) {
                const T* ar = attn + t * tlen;
                T* dar = da.data() + t * tlen;
                T dot = T(0);
                for (int64_t j = 0; j < tlen; ++j) dot += dar[j] * ar[j];
                for (int64_t j = 0; j < tlen; ++j) dar[j] = ar[j] * (dar[j] - dot);
            }
            // dq (pre-scale) = dS @ K, then unscale into dqkv.
            gemm_nn(tlen, tlen, dh, da.data(), k_tile, dq_tile, false);
            for (int64_t t = 0; t < tlen; ++t)
                for (int64_t d = 0; d < dh; ++d)
                    dqkv_b[t * 3 * dim + h * dh + d] = dq_tile[t * dh + d] * scale;
            // dK = dS^T @ q_scaled
            gemm_tn(tlen, tlen, dh, da.data(), q_tile, dkv_tile, false);
            for (int64_t t = 0; t < tlen; ++t)
                for (int64_t d = 0; d < dh; ++d)
                    dqkv_b[t * 3 * dim + dim + h * dh + d] = dkv_tile[t * dh + d];
        }
    }

    if (dwqkv) gemm_tn(dim, rows, 3 * dim, x, dqkv.data(), dwqkv, true);
    if (dbqkv) col_sum(rows, 3 * dim, dqkv.data(), dbqkv, true);
    if (dx) {
        std::vector<T> wqkv_t(static_cast<size_t>(3 * dim * dim));
        transpose(dim, 3 * dim, wqkv, wqkv_t.data());
        gemm_nn(rows, 3 * dim, dim, dqkv.data(), wqkv_t.data(), dx, true);
    }
}

#define STOIC_INSTANTIATE(T)                                                                        \
    template void gemm_nn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);             \
    template void gemm_tn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);             \
    template void transpose<T>(int64_t, int64_t, const T*, T*);                                    \
    template void add_row_vector<T>(int64_t, int64_t, const T*, T*);                               \
    template void col_sum<T>(int64_t, int64_t, const T*, T*, bool);                                \
    template void softmax_rows<T>(int64_t, int64_t, const T*, T*);                                 \
    template void gelu_forward<T>(int64_t, const T*, T*);                                          \
    template void gelu_backward<T>(int64_t, const T*, const T*, T*);                               \
    template T gelu_tanh<T>(T);                                                                    \
    template void conv2d_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);            \
    template void conv2d_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*, T*, T*);   \
    template void conv_transpose2d_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);  \
    template void conv_transpose2d_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*,  \
                                               T*, T*);                                            \
    template void layer_norm_forward<T>(int64_t, int64_t, const T*, const T*, const T*, T, T*, T*, \
                                        T*);                                                       \
    template void layer_norm_backward<T>(int64_t, int64_t, const T*, const T*, const T*, const T*, \
                                         const T*, T*, T*, T*);                                    \
    template void batch_norm_forward<T>(int64_t, int64_t, int64_t, const T*, const T*, const T*,   \
                                        T, T*, T*, T*);                                            \
    template void batch_norm_backward<T>(int64_t, int64_t, int64_t, const T*, const T*, const T*,  \
                                         const T*, const T*, T*, T*, T*);                          \
    template void mha_forward<T>(int64_t, int64_t, int64_t, int64_t, const T*, const T*, const T*, \
                                 const T*, const T*, T*, MhaWorkspace<T>&);                        \
    template void mha_backward<T>(int64_t, int64_t, int64_t, int64_t, const T*, const T*,          \
                                  const T*, const MhaWorkspace<T>&, const T*, T*, T*, T*, T*, T*);

STOIC_INSTANTIATE(float)
STOIC_INSTANTIATE(double)

#undef STOIC_INSTANTIATE

}  // namespace stoic::kernels
