// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Dense kernels behind the autodiff graph. Every kernel comes in two forms:
// the OpenMP-parallel version used everywhere, and a plain serial reference
// under kernels::ref used by tests and the kernel benchmark.
//
// Parallel loops only ever split independent output elements, and every
// reduction accumulates in ascending index order, so the parallel kernels
// produce bit-identical results to the serial references at any thread
// count (the build sets -ffp-contract=off to keep codegen equivalent).

#ifndef TLM_KERNELS_HPP_
#define TLM_KERNELS_HPP_

#include <cmath>
#include <cstdint>
#include <limits>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace tlm {
namespace kernels {

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#if defined(_OPENMP)
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// C[m,n] = A[m,k] * B[k,n], optionally accumulating into C.
template <typename T>
void matmul_nn(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n,
               bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] = A[m,k] * B^T where B is stored [n,k].
template <typename T>
void matmul_nt(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n,
               bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// C[m,n] = A^T * B where A is stored [k,m].
template <typename T>
void matmul_tn(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n,
               bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    if (!accumulate) {
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    for (int64_t p = 0; p < k; ++p) {
      const T av = a[p * m + i];
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Row-wise stable softmax over the last dimension.
template <typename T>
void row_softmax(T* out, const T* in, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

// Row-wise log-softmax: x - max - log(sum(exp(x - max))).
template <typename T>
void row_log_softmax(T* out, const T* in, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
    const T lse = mx + std::log(sum);
    for (int64_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
}

// din += probs * (dout - sum(dout * probs)) per row.
template <typename T>
void softmax_backward(T* din, const T* dout, const T* probs, int64_t rows,
                      int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* p = probs + r * cols;
    const T* g = dout + r * cols;
    T* d = din + r * cols;
    T dot = T(0);
    for (int64_t j = 0; j < cols; ++j) dot += g[j] * p[j];
    for (int64_t j = 0; j < cols; ++j) d[j] += p[j] * (g[j] - dot);
  }
}

// din += dout - exp(logp) * sum(dout) per row.
template <typename T>
void log_softmax_backward(T* din, const T* dout, const T* logp, int64_t rows,
                          int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* lp = logp + r * cols;
    const T* g = dout + r * cols;
    T* d = din + r * cols;
    T gsum = T(0);
    for (int64_t j = 0; j < cols; ++j) gsum += g[j];
    for (int64_t j = 0; j < cols; ++j) d[j] += g[j] - std::exp(lp[j]) * gsum;
  }
}

// Causal softmax over a square [n,n] score matrix: row i is a softmax over
// columns 0..i; columns above the diagonal are exactly zero.
template <typename T>
void causal_softmax(T* out, const T* in, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < n; ++r) {
    const T* x = in + r * n;
    T* y = out + r * n;
    T mx = x[0];
    for (int64_t j = 1; j <= r; ++j) mx = x[j] > mx ? x[j] : mx;
    T sum = T(0);
    for (int64_t j = 0; j <= r; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j <= r; ++j) y[j] *= inv;
    for (int64_t j = r + 1; j < n; ++j) y[j] = T(0);
  }
}

template <typename T>
void causal_softmax_backward(T* din, const T* dout, const T* probs, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < n; ++r) {
    const T* p = probs + r * n;
    const T* g = dout + r * n;
    T* d = din + r * n;
    T dot = T(0);
    for (int64_t j = 0; j <= r; ++j) dot += g[j] * p[j];
    for (int64_t j = 0; j <= r; ++j) d[j] += p[j] * (g[j] - dot);
  }
}

// Multi-head causal self-attention over row-major [len, d] projections.
// Rows are grouped into independent blocks (packed sequences): row i
// attends rows [block_start[i], i] only. Head h uses columns
// [h*dh, (h+1)*dh); probs is [heads*len, max_block] with block-local
// column indices and is kept for the backward pass. Heads are independent
// and every element accumulates in a fixed order, so the head-parallel
// split is deterministic.
template <typename T>
void causal_attention(T* out, T* probs, const T* q, const T* k, const T* v,
                      int64_t len, int64_t d, int64_t heads,
                      const int64_t* block_start, int64_t max_block) {
  const int64_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
#pragma omp parallel for schedule(static)
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t col = h * dh;
    T* hp = probs + h * len * max_block;
    for (int64_t i = 0; i < len; ++i) {
      const int64_t base = block_start[i];
      const int64_t width = i - base + 1;
      const T* qi = q + i * d + col;
      T* prow = hp + i * max_block;
      T mx = T(0);
      for (int64_t j = 0; j < width; ++j) {
        const T* kj = k + (base + j) * d + col;
        T acc = T(0);
        for (int64_t p = 0; p < dh; ++p) acc += qi[p] * kj[p];
        prow[j] = acc * inv_sqrt;
        if (j == 0 || prow[j] > mx) mx = prow[j];
      }
      T sum = T(0);
      for (int64_t j = 0; j < width; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        sum += prow[j];
      }
      const T inv = T(1) / sum;
      for (int64_t j = 0; j < width; ++j) prow[j] *= inv;
      for (int64_t j = width; j < max_block; ++j) prow[j] = T(0);

      T* oi = out + i * d + col;
      for (int64_t p = 0; p < dh; ++p) oi[p] = T(0);
      for (int64_t j = 0; j < width; ++j) {
        const T pj = prow[j];
        const T* vj = v + (base + j) * d + col;
        for (int64_t p = 0; p < dh; ++p) oi[p] += pj * vj[p];
      }
    }
  }
}

// Gradients of causal_attention into dq/dk/dv (accumulated). Each head
// touches only its own column block, so the head-parallel split is
// race-free and deterministic.
template <typename T>
void causal_attention_backward(T* dq, T* dk, T* dv, const T* dout, const T* probs,
                               const T* q, const T* k, const T* v, int64_t len,
                               int64_t d, int64_t heads, const int64_t* block_start,
                               int64_t max_block) {
  const int64_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
#pragma omp parallel for schedule(static)
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t col = h * dh;
    const T* hp = probs + h * len * max_block;
    std::vector<T> dscores(static_cast<size_t>(max_block));
    for (int64_t i = 0; i < len; ++i) {
      const int64_t base = block_start[i];
      const int64_t width = i - base + 1;
      const T* go = dout + i * d + col;
      const T* prow = hp + i * max_block;
      // dv[j] += p[i,j] * dout[i]; dscores = dout . v[j]
      T dot = T(0);
      for (int64_t j = 0; j < width; ++j) {
        const T* vj = v + (base + j) * d + col;
        T acc = T(0);
        for (int64_t p = 0; p < dh; ++p) acc += go[p] * vj[p];
        dscores[static_cast<size_t>(j)] = acc;
        dot += acc * prow[j];
        T* dvj = dv + (base + j) * d + col;
        for (int64_t p = 0; p < dh; ++p) dvj[p] += prow[j] * go[p];
      }
      // softmax backward, then the scaled-dot-product chain
      const T* qi = q + i * d + col;
      T* dqi = dq + i * d + col;
      for (int64_t j = 0; j < width; ++j) {
        const T ds = prow[j] * (dscores[static_cast<size_t>(j)] - dot) * inv_sqrt;
        const T* kj = k + (base + j) * d + col;
        T* dkj = dk + (base + j) * d + col;
        for (int64_t p = 0; p < dh; ++p) {
          dqi[p] += ds * kj[p];
          dkj[p] += ds * qi[p];
        }
      }
    }
  }
}

// Row-wise layer normalization without affine parameters; eps sits inside
// the square root so constant rows normalize to exactly zero output.
template <typename T>
void layer_norm_rows(T* out, const T* in, int64_t rows, int64_t cols, T eps) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mean = T(0);
    for (int64_t j = 0; j < cols; ++j) mean += x[j];
    mean /= T(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= T(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * inv;
  }
}

template <typename T>
void layer_norm_backward(T* din, const T* dout, const T* in, int64_t rows,
                         int64_t cols, T eps) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    const T* g = dout + r * cols;
    T* d = din + r * cols;
    T mean = T(0);
    for (int64_t j = 0; j < cols; ++j) mean += x[j];
    mean /= T(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= T(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    // y_j = (x_j - mean) * inv; dx = inv * (g - mean(g) - y * mean(g*y)).
    T gsum = T(0), gysum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      gsum += g[j];
      gysum += g[j] * (x[j] - mean) * inv;
    }
    const T gmean = gsum / T(cols);
    const T gymean = gysum / T(cols);
    for (int64_t j = 0; j < cols; ++j) {
      const T yj = (x[j] - mean) * inv;
      d[j] += inv * (g[j] - gmean - yj * gymean);
    }
  }
}

// GELU, tanh approximation.
template <typename T>
void gelu(T* out, const T* in, int64_t numel) {
  constexpr T kC = T(0.7978845608028653558798921198687);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) {
    const T x = in[i];
    const T u = kC * (x + kA * x * x * x);
    out[i] = T(0.5) * x * (T(1) + std::tanh(u));
  }
}

template <typename T>
void gelu_backward(T* din, const T* dout, const T* in, int64_t numel) {
  constexpr T kC = T(0.7978845608028653558798921198687);
  constexpr T kA = T(0.044715);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) {
    const T x = in[i];
    const T u = kC * (x + kA * x * x * x);
    const T t = std::tanh(u);
    const T du = kC * (T(1) + T(3) * kA * x * x);
    const T dy = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
    din[i] += dout[i] * dy;
  }
}

template <typename T>
void add(T* out, const T* a, const T* b, int64_t numel) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) out[i] = a[i] + b[i];
}

// out[r,:] = a[r,:] + bias[:] for every row.
template <typename T>
void add_row_broadcast(T* out, const T* a, const T* bias, int64_t rows,
                       int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* arow = a + r * cols;
    T* orow = out + r * cols;
    for (int64_t j = 0; j < cols; ++j) orow[j] = arow[j] + bias[j];
  }
}

template <typename T>
void mul(T* out, const T* a, const T* b, int64_t numel) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_row_broadcast(T* out, const T* a, const T* scale_vec, int64_t rows,
                       int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* arow = a + r * cols;
    T* orow = out + r * cols;
    for (int64_t j = 0; j < cols; ++j) orow[j] = arow[j] * scale_vec[j];
  }
}

template <typename T>
void scale(T* out, const T* a, T factor, int64_t numel) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) out[i] = a[i] * factor;
}

// out += a * factor.
template <typename T>
void axpy(T* out, const T* a, T factor, int64_t numel) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) out[i] += a[i] * factor;
}

// Column-sum of a [rows,cols] matrix accumulated into out[cols]; rows are
// visited in ascending order per column.
template <typename T>
void col_sum_accumulate(T* out, const T* a, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < cols; ++j) {
    T acc = T(0);
    for (int64_t r = 0; r < rows; ++r) acc += a[r * cols + j];
    out[j] += acc;
  }
}

// dst[j,i] = src[i,j] for src [rows, cols]; data movement only.
template <typename T>
void transpose(T* dst, const T* src, int64_t rows, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < rows; ++i) {
    const T* srow = src + i * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = srow[j];
  }
}

// out[i,:] = table[ids[i],:].
template <typename T>
void gather_rows(T* out, const T* table, const int64_t* ids, int64_t n,
                 int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const T* src = table + ids[i] * cols;
    T* dst = out + i * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] = src[j];
  }
}

// table_grad[ids[i],:] += src[i,:]. Ids may repeat, so the parallel split is
// over columns: each column walks all rows in ascending order, keeping the
// accumulation deterministic and race-free.
template <typename T>
void scatter_add_rows(T* table_grad, const T* src, const int64_t* ids,
                      int64_t n, int64_t cols) {
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < cols; ++j) {
    for (int64_t i = 0; i < n; ++i) {
      table_grad[ids[i] * cols + j] += src[i * cols + j];
    }
  }
}

// Serial reference implementations, written independently in textbook form.
// Tests assert exact equality against the parallel kernels above and the
// bench_kernels tool reports the timing gap.
namespace ref {

template <typename T>
void matmul_nn(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n,
               bool accumulate = false) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      // seeded with the prior value so accumulation order matches the
      // parallel kernel term for term
      T acc = accumulate ? c[i * n + j] : T(0);
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_nt(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n,
               bool accumulate = false) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

template <typename T>
void matmul_tn(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n,
               bool accumulate = false) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void row_softmax(T* out, const T* in, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) {
      if (x[j] > mx) mx = x[j];
    }
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
  }
}

template <typename T>
void row_log_softmax(T* out, const T* in, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mx = x[0];
    for (int64_t j = 1; j < cols; ++j) {
      if (x[j] > mx) mx = x[j];
    }
    T sum = T(0);
    for (int64_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
    const T lse = mx + std::log(sum);
    for (int64_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
}

template <typename T>
void layer_norm_rows(T* out, const T* in, int64_t rows, int64_t cols, T eps) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = in + r * cols;
    T* y = out + r * cols;
    T mean = T(0);
    for (int64_t j = 0; j < cols; ++j) mean += x[j];
    mean /= T(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= T(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * inv;
  }
}

template <typename T>
void gelu(T* out, const T* in, int64_t numel) {
  constexpr T kC = T(0.7978845608028653558798921198687);
  constexpr T kA = T(0.044715);
  for (int64_t i = 0; i < numel; ++i) {
    const T x = in[i];
    const T u = kC * (x + kA * x * x * x);
    out[i] = T(0.5) * x * (T(1) + std::tanh(u));
  }
}

template <typename T>
void causal_softmax(T* out, const T* in, int64_t n) {
  for (int64_t r = 0; r < n; ++r) {
    const T* x = in + r * n;
    T* y = out + r * n;
    T mx = x[0];
    for (int64_t j = 1; j <= r; ++j) {
      if (x[j] > mx) mx = x[j];
    }
    T sum = T(0);
    for (int64_t j = 0; j <= r; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j <= r; ++j) y[j] *= inv;
    for (int64_t j = r + 1; j < n; ++j) y[j] = T(0);
  }
}

template <typename T>
void causal_attention(T* out, T* probs, const T* q, const T* k, const T* v,
                      int64_t len, int64_t d, int64_t heads,
                      const int64_t* block_start, int64_t max_block) {
  const int64_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t col = h * dh;
    T* hp = probs + h * len * max_block;
    for (int64_t i = 0; i < len; ++i) {
      const int64_t base = block_start[i];
      const int64_t width = i - base + 1;
      T* prow = hp + i * max_block;
      T mx = T(0);
      for (int64_t j = 0; j < width; ++j) {
        T acc = T(0);
        for (int64_t p = 0; p < dh; ++p) {
          acc += q[i * d + col + p] * k[(base + j) * d + col + p];
        }
        prow[j] = acc * inv_sqrt;
        if (j == 0 || prow[j] > mx) mx = prow[j];
      }
      T sum = T(0);
      for (int64_t j = 0; j < width; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        sum += prow[j];
      }
      const T inv = T(1) / sum;
      for (int64_t j = 0; j < width; ++j) prow[j] *= inv;
      for (int64_t j = width; j < max_block; ++j) prow[j] = T(0);
      for (int64_t p = 0; p < dh; ++p) {
        T acc = T(0);
        for (int64_t j = 0; j < width; ++j) acc += prow[j] * v[(base + j) * d + col + p];
        out[i * d + col + p] = acc;
      }
    }
  }
}

}  // namespace ref
}  // namespace kernels
}  // namespace tlm

#endif  // TLM_KERNELS_HPP_
