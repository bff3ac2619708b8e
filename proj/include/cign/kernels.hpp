/*
 * Copyright 2026 CIGN Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cign/common.hpp"
#include "cign/tensor.hpp"

// Raw compute kernels behind the autodiff nodes. Convolutions go through
// im2col + GEMM. Every output element is owned by exactly one thread and its
// reduction runs in a fixed order, so results are bitwise deterministic for
// any thread count.
namespace cign::kernels {

// C[M,N] += A[M,K] * B[K,N], all row-major. Four-row register blocking keeps
// B rows hot across consecutive A rows.
template <typename T>
void matmul_accum(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i0 = 0; i0 < m; i0 += 4) {
    const int ilim = std::min(m, i0 + 4) - i0;
    for (int p = 0; p < k; ++p) {
      const T* brow = b + static_cast<std::size_t>(p) * n;
      for (int r = 0; r < ilim; ++r) {
        const T av = a[static_cast<std::size_t>(i0 + r) * k + p];
        if (av == T(0)) continue;
        T* crow = c + static_cast<std::size_t>(i0 + r) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// C[M,N] += At' * B with At [rows, M], B [rows, N]: the weight-gradient
// contraction dW[k,n] = sum_i col[i,k] * dOut[i,n]. Threads own disjoint
// column strips of At and stream the rows once; each C row is accumulated in
// ascending i regardless of thread count.
template <typename T>
void matmul_at_b_accum(const T* at, const T* b, T* c, int rows, int m, int n) {
#ifdef _OPENMP
#pragma omp parallel
  {
    const int nt = omp_get_num_threads();
    const int tid = omp_get_thread_num();
#else
  {
    const int nt = 1, tid = 0;
#endif
    const int chunk = (m + nt - 1) / nt;
    const int p0 = std::min(m, tid * chunk), p1 = std::min(m, p0 + chunk);
    for (int i = 0; i < rows; ++i) {
      const T* arow = at + static_cast<std::size_t>(i) * m;
      const T* brow = b + static_cast<std::size_t>(i) * n;
      for (int p = p0; p < p1; ++p) {
        const T av = arow[p];
        if (av == T(0)) continue;
        T* crow = c + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// C[M,K] += A[M,N] * B^T where B is [K,N]: used for input gradients
// dCol[i,k] = sum_j dOut[i,j] * W[k,j]; parallel over i.
template <typename T>
void matmul_a_bt_accum(const T* a, const T* b, T* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * n;
    T* crow = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const T* brow = b + static_cast<std::size_t>(p) * n;
      T acc = 0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

enum class Padding { same, valid };

inline const char* padding_name(Padding p) { return p == Padding::same ? "same" : "valid"; }

// Geometry of a conv or pool window application over an NHWC batch.
struct ConvGeom {
  int in_h = 0, in_w = 0, in_c = 0;
  int kernel = 0, stride = 1;
  int pad_top = 0, pad_left = 0;
  int out_h = 0, out_w = 0;

  static ConvGeom make(int in_h, int in_w, int in_c, int kernel, int stride, Padding pad) {
    ConvGeom g;
    g.in_h = in_h;
    g.in_w = in_w;
    g.in_c = in_c;
    g.kernel = kernel;
    g.stride = stride;
    if (pad == Padding::same) {
      g.out_h = (in_h + stride - 1) / stride;
      g.out_w = (in_w + stride - 1) / stride;
      const int pad_h = std::max(0, (g.out_h - 1) * stride + kernel - in_h);
      const int pad_w = std::max(0, (g.out_w - 1) * stride + kernel - in_w);
      g.pad_top = pad_h / 2;
      g.pad_left = pad_w / 2;
    } else {
      if (in_h < kernel || in_w < kernel) {
        throw ConfigError("window larger than input under valid padding");
      }
      g.out_h = (in_h - kernel) / stride + 1;
      g.out_w = (in_w - kernel) / stride + 1;
    }
    return g;
  }
};

// col[(n*OH*OW + oy*OW + ox), (ky*K + kx)*C + c] = padded input patch value.
// The column layout matches a [K*K*C, filters] weight matrix flattened from
// HWIO order.
template <typename T>
void im2col(const Tensor<T>& in, const ConvGeom& g, Tensor<T>& col) {
  const int batch = in.dim(0);
  const int patch = g.kernel * g.kernel * g.in_c;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        T* dst = col.data() +
                 (static_cast<std::size_t>(n) * g.out_h * g.out_w + static_cast<std::size_t>(oy) * g.out_w + ox) *
                     patch;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad_top + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.kernel * g.in_c, T(0));
            dst += g.kernel * g.in_c;
            continue;
          }
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad_left + kx;
            if (ix < 0 || ix >= g.in_w) {
              std::fill(dst, dst + g.in_c, T(0));
            } else {
              const T* src = in.data() +
                             ((static_cast<std::size_t>(n) * g.in_h + iy) * g.in_w + ix) * g.in_c;
              std::memcpy(dst, src, sizeof(T) * g.in_c);
            }
            dst += g.in_c;
          }
        }
      }
    }
  }
}

// Scatter-add of column gradients back into the input gradient; parallel
// over samples (disjoint write regions).
template <typename T>
void col2im_accum(const Tensor<T>& col, const ConvGeom& g, Tensor<T>& din) {
  const int batch = din.dim(0);
  const int patch = g.kernel * g.kernel * g.in_c;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const T* src = col.data() +
                       (static_cast<std::size_t>(n) * g.out_h * g.out_w + static_cast<std::size_t>(oy) * g.out_w + ox) *
                           patch;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad_top + ky;
          if (iy < 0 || iy >= g.in_h) {
            src += g.kernel * g.in_c;
            continue;
          }
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad_left + kx;
            if (ix >= 0 && ix < g.in_w) {
              T* dst = din.data() +
                       ((static_cast<std::size_t>(n) * g.in_h + iy) * g.in_w + ix) * g.in_c;
              for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
            }
            src += g.in_c;
          }
        }
      }
    }
  }
}

// Max pooling with argmax capture (first maximum wins on ties). Valid
// padding, floor output size.
template <typename T>
void maxpool_forward(const Tensor<T>& in, const ConvGeom& g, Tensor<T>& out,
                     std::vector<int>& argmax) {
  const int batch = in.dim(0);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < batch; ++n) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        for (int c = 0; c < g.in_c; ++c) {
          T best = T(0);
          int best_idx = -1;
          for (int ky = 0; ky < g.kernel; ++ky) {
            const int iy = oy * g.stride + ky;
            if (iy >= g.in_h) break;
            for (int kx = 0; kx < g.kernel; ++kx) {
              const int ix = ox * g.stride + kx;
              if (ix >= g.in_w) break;
              const std::size_t idx =
                  ((static_cast<std::size_t>(n) * g.in_h + iy) * g.in_w + ix) * g.in_c + c;
              const T v = in[idx];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = static_cast<int>(idx);
              }
            }
          }
          const std::size_t out_idx =
              ((static_cast<std::size_t>(n) * g.out_h + oy) * g.out_w + ox) * g.in_c + c;
          out[out_idx] = best;
          argmax[out_idx] = best_idx;
        }
      }
    }
  }
}

template <typename T>
void maxpool_backward(const Tensor<T>& dout, const std::vector<int>& argmax, Tensor<T>& din) {
  // Argmax positions of distinct samples never collide, but serial keeps it
  // simple; pooling backward is a tiny fraction of step time.
  for (std::size_t i = 0; i < dout.size(); ++i) {
    if (argmax[i] >= 0) din[static_cast<std::size_t>(argmax[i])] += dout[i];
  }
}

}  // namespace cign::kernels
