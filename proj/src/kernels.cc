// Copyright 2026 The PartFormer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ppf/kernels.h"

#include <cmath>
#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ppf::kernels {
namespace {

// Below this many multiply-adds a kernel runs on the calling thread.
constexpr long kMinParallelWork = 1L << 15;

inline bool worth_parallel(long work) { return work >= kMinParallelWork; }

void im2col(const ConvShape& s, const double* x, double* col) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  const int k = s.kernel;
  const long work = static_cast<long>(s.in_channels) * k * k * oh * ow;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int c = 0; c < s.in_channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          double* out = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= s.height) {
            for (int ox = 0; ox < ow; ++ox) out[ox] = 0.0;
            continue;
          }
          const double* in = x + (static_cast<std::size_t>(c) * s.height + iy) * s.width;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            out[ox] = (ix < 0 || ix >= s.width) ? 0.0 : in[ix];
          }
        }
      }
    }
  }
}

// Each input channel owns a disjoint slice of dx, so channels can be
// processed in parallel without changing the accumulation order.
void col2im(const ConvShape& s, const double* col, double* dx) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  const int k = s.kernel;
  const long work = static_cast<long>(s.in_channels) * k * k * oh * ow;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int c = 0; c < s.in_channels; ++c) {
    double* plane = dx + static_cast<std::size_t>(c) * s.height * s.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row =
            col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          double* out = plane + static_cast<std::size_t>(iy) * s.width;
          const double* in = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix >= 0 && ix < s.width) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvShape& s) { return s.kernel == 1 && s.stride == 1 && s.pad == 0; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

SampleTap sample_tap(double pos, int size) {
  SampleTap t;
  const double hi_bound = static_cast<double>(size - 1);
  if (pos <= 0.0) {
    t.clamped = pos < 0.0;
    pos = 0.0;
  } else if (pos >= hi_bound) {
    t.clamped = pos > hi_bound;
    pos = hi_bound;
  }
  t.lo = static_cast<int>(std::floor(pos));
  if (t.lo > size - 1) t.lo = size - 1;
  t.hi = t.lo + 1 < size ? t.lo + 1 : size - 1;
  t.frac = pos - t.lo;
  return t;
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  const long work = static_cast<long>(m) * n * k;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int i = 0; i < m; ++i) {
    double* __restrict crow = c + static_cast<std::size_t>(i) * n;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* __restrict brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  // Transposing B turns the strided dot products into contiguous AXPYs.
  std::vector<double> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j) {
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c);
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  const long work = static_cast<long>(m) * n * k;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int i = 0; i < m; ++i) {
    double* __restrict crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<std::size_t>(p) * m + i];
      if (av == 0.0) continue;
      const double* __restrict brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* bias,
                    double* y) {
  const int p = s.out_height() * s.out_width();
  const int ckk = s.in_channels * s.kernel * s.kernel;
  for (int o = 0; o < s.out_channels; ++o) {
    const double b = bias ? bias[o] : 0.0;
    double* row = y + static_cast<std::size_t>(o) * p;
    for (int j = 0; j < p; ++j) row[j] = b;
  }
  if (is_pointwise(s)) {
    gemm_nn(s.out_channels, p, ckk, w, x, y);
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(ckk) * p);
  im2col(s, x, col.data());
  gemm_nn(s.out_channels, p, ckk, w, col.data(), y);
}

void conv2d_backward(const ConvShape& s, const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db) {
  const int p = s.out_height() * s.out_width();
  const int ckk = s.in_channels * s.kernel * s.kernel;
  if (db) {
    for (int o = 0; o < s.out_channels; ++o) {
      const double* row = dy + static_cast<std::size_t>(o) * p;
      double acc = 0.0;
      for (int j = 0; j < p; ++j) acc += row[j];
      db[o] += acc;
    }
  }
  const bool pointwise = is_pointwise(s);
  if (dw) {
    if (pointwise) {
      gemm_nt(s.out_channels, ckk, p, dy, x, dw);
    } else {
      std::vector<double> col(static_cast<std::size_t>(ckk) * p);
      im2col(s, x, col.data());
      gemm_nt(s.out_channels, ckk, p, dy, col.data(), dw);
    }
  }
  if (dx) {
    if (pointwise) {
      gemm_tn(ckk, p, s.out_channels, w, dy, dx);
    } else {
      std::vector<double> dcol(static_cast<std::size_t>(ckk) * p, 0.0);
      gemm_tn(ckk, p, s.out_channels, w, dy, dcol.data());
      col2im(s, dcol.data(), dx);
    }
  }
}

void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             const double* x, double* y) {
  std::vector<LinearTap> ty(out_h), tx(out_w);
  for (int i = 0; i < out_h; ++i) ty[i] = resize_tap(i, in_h, out_h);
  for (int j = 0; j < out_w; ++j) tx[j] = resize_tap(j, in_w, out_w);
  const long work = static_cast<long>(channels) * out_h * out_w * 4;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int c = 0; c < channels; ++c) {
    const double* src = x + static_cast<std::size_t>(c) * in_h * in_w;
    double* dst = y + static_cast<std::size_t>(c) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      const double* r0 = src + static_cast<std::size_t>(ty[i].lo) * in_w;
      const double* r1 = src + static_cast<std::size_t>(ty[i].hi) * in_w;
      const double fy = ty[i].frac;
      for (int j = 0; j < out_w; ++j) {
        const double fx = tx[j].frac;
        const double top = (1.0 - fx) * r0[tx[j].lo] + fx * r0[tx[j].hi];
        const double bot = (1.0 - fx) * r1[tx[j].lo] + fx * r1[tx[j].hi];
        dst[static_cast<std::size_t>(i) * out_w + j] = (1.0 - fy) * top + fy * bot;
      }
    }
  }
}

void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              const double* dy, double* dx) {
  std::vector<LinearTap> ty(out_h), tx(out_w);
  for (int i = 0; i < out_h; ++i) ty[i] = resize_tap(i, in_h, out_h);
  for (int j = 0; j < out_w; ++j) tx[j] = resize_tap(j, in_w, out_w);
  const long work = static_cast<long>(channels) * out_h * out_w * 4;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int c = 0; c < channels; ++c) {
    const double* g = dy + static_cast<std::size_t>(c) * out_h * out_w;
    double* d = dx + static_cast<std::size_t>(c) * in_h * in_w;
    for (int i = 0; i < out_h; ++i) {
      double* r0 = d + static_cast<std::size_t>(ty[i].lo) * in_w;
      double* r1 = d + static_cast<std::size_t>(ty[i].hi) * in_w;
      const double fy = ty[i].frac;
      for (int j = 0; j < out_w; ++j) {
        const double v = g[static_cast<std::size_t>(i) * out_w + j];
        const double fx = tx[j].frac;
        r0[tx[j].lo] += (1.0 - fy) * (1.0 - fx) * v;
        r0[tx[j].hi] += (1.0 - fy) * fx * v;
        r1[tx[j].lo] += fy * (1.0 - fx) * v;
        r1[tx[j].hi] += fy * fx * v;
      }
    }
  }
}

void warp_forward(int channels, int h, int w, const double* x, const double* flow, double* y) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const long work = static_cast<long>(channels) * h * w * 4;
#pragma omp parallel for schedule(static) if (worth_parallel(work))
  for (int idx = 0; idx < h * w; ++idx) {
    const int i = idx / w;
    const int j = idx % w;
    const SampleTap ty = sample_tap(i + flow[idx], h);
    const SampleTap tx = sample_tap(j + flow[plane + idx], w);
    const std::size_t i00 = static_cast<std::size_t>(ty.lo) * w + tx.lo;
    const std::size_t i01 = static_cast<std::size_t>(ty.lo) * w + tx.hi;
    const std::size_t i10 = static_cast<std::size_t>(ty.hi) * w + tx.lo;
    const std::size_t i11 = static_cast<std::size_t>(ty.hi) * w + tx.hi;
    for (int c = 0; c < channels; ++c) {
      const double* src = x + c * plane;
      const double top = (1.0 - tx.frac) * src[i00] + tx.frac * src[i01];
      const double bot = (1.0 - tx.frac) * src[i10] + tx.frac * src[i11];
      y[c * plane + idx] = (1.0 - ty.frac) * top + ty.frac * bot;
    }
  }
}

void warp_backward(int channels, int h, int w, const double* x, const double* flow,
                   const double* dy, double* dx, double* dflow) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const long work = static_cast<long>(channels) * h * w * 4;
  std::vector<SampleTap> ty(plane), tx(plane);
  for (std::size_t idx = 0; idx < plane; ++idx) {
    const int i = static_cast<int>(idx) / w;
    const int j = static_cast<int>(idx) % w;
    ty[idx] = sample_tap(i + flow[idx], h);
    tx[idx] = sample_tap(j + flow[plane + idx], w);
  }
  if (dflow) {
#pragma omp parallel for schedule(static) if (worth_parallel(work))
    for (int idx = 0; idx < h * w; ++idx) {
      const SampleTap& a = ty[idx];
      const SampleTap& b = tx[idx];
      const std::size_t i00 = static_cast<std::size_t>(a.lo) * w + b.lo;
      const std::size_t i01 = static_cast<std::size_t>(a.lo) * w + b.hi;
      const std::size_t i10 = static_cast<std::size_t>(a.hi) * w + b.lo;
      const std::size_t i11 = static_cast<std::size_t>(a.hi) * w + b.hi;
      double gy = 0.0, gx = 0.0;
      for (int c = 0; c < channels; ++c) {
        const double* src = x + c * plane;
        const double g = dy[c * plane + idx];
        gy += g * ((1.0 - b.frac) * (src[i10] - src[i00]) + b.frac * (src[i11] - src[i01]));
        gx += g * ((1.0 - a.frac) * (src[i01] - src[i00]) + a.frac * (src[i11] - src[i10]));
      }
      if (!a.clamped) dflow[idx] += gy;
      if (!b.clamped) dflow[plane + idx] += gx;
    }
  }
  if (dx) {
#pragma omp parallel for schedule(static) if (worth_parallel(work))
    for (int c = 0; c < channels; ++c) {
      double* d = dx + c * plane;
      const double* g = dy + c * plane;
      for (std::size_t idx = 0; idx < plane; ++idx) {
        const SampleTap& a = ty[idx];
        const SampleTap& b = tx[idx];
        const double v = g[idx];
        d[static_cast<std::size_t>(a.lo) * w + b.lo] += (1.0 - a.frac) * (1.0 - b.frac) * v;
        d[static_cast<std::size_t>(a.lo) * w + b.hi] += (1.0 - a.frac) * b.frac * v;
        d[static_cast<std::size_t>(a.hi) * w + b.lo] += a.frac * (1.0 - b.frac) * v;
        d[static_cast<std::size_t>(a.hi) * w + b.hi] += a.frac * b.frac * v;
      }
    }
  }
}

}  // namespace ppf::kernels
