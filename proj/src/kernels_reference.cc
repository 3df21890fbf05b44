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

// Serial reference kernels. Written for obviousness, not speed; the test
// suite checks the parallel kernels against these.

#include <cmath>
#include <cstddef>

#include "ppf/kernels.h"

namespace ppf::kernels::reference {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] += s;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* bias,
                    double* y) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  const int k = s.kernel;
  for (int o = 0; o < s.out_channels; ++o) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias ? bias[o] : 0.0;
        for (int c = 0; c < s.in_channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s.stride - s.pad + ky;
            if (iy < 0 || iy >= s.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s.stride - s.pad + kx;
              if (ix < 0 || ix >= s.width) continue;
              acc += w[((o * s.in_channels + c) * k + ky) * k + kx] *
                     x[(c * s.height + iy) * s.width + ix];
            }
          }
        }
        y[(o * oh + oy) * ow + ox] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvShape& s, const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db) {
  const int oh = s.out_height();
  const int ow = s.out_width();
  const int k = s.kernel;
  for (int o = 0; o < s.out_channels; ++o) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double g = dy[(o * oh + oy) * ow + ox];
        if (db) db[o] += g;
        for (int c = 0; c < s.in_channels; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s.stride - s.pad + ky;
            if (iy < 0 || iy >= s.height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s.stride - s.pad + kx;
              if (ix < 0 || ix >= s.width) continue;
              const int wi = ((o * s.in_channels + c) * k + ky) * k + kx;
              const int xi = (c * s.height + iy) * s.width + ix;
              if (dw) dw[wi] += g * x[xi];
              if (dx) dx[xi] += g * w[wi];
            }
          }
        }
      }
    }
  }
}

namespace {

double bilinear_at(const double* plane, int w, int ylo, int yhi, double fy, int xlo, int xhi,
                   double fx) {
  return (1.0 - fy) * ((1.0 - fx) * plane[ylo * w + xlo] + fx * plane[ylo * w + xhi]) +
         fy * ((1.0 - fx) * plane[yhi * w + xlo] + fx * plane[yhi * w + xhi]);
}

}  // namespace

void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             const double* x, double* y) {
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < out_h; ++i) {
      const LinearTap ty = resize_tap(i, in_h, out_h);
      for (int j = 0; j < out_w; ++j) {
        const LinearTap tx = resize_tap(j, in_w, out_w);
        y[(c * out_h + i) * out_w + j] = bilinear_at(x + c * in_h * in_w, in_w, ty.lo, ty.hi,
                                                     ty.frac, tx.lo, tx.hi, tx.frac);
      }
    }
  }
}

void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              const double* dy, double* dx) {
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < out_h; ++i) {
      const LinearTap ty = resize_tap(i, in_h, out_h);
      for (int j = 0; j < out_w; ++j) {
        const LinearTap tx = resize_tap(j, in_w, out_w);
        const double g = dy[(c * out_h + i) * out_w + j];
        double* d = dx + c * in_h * in_w;
        d[ty.lo * in_w + tx.lo] += (1.0 - ty.frac) * (1.0 - tx.frac) * g;
        d[ty.lo * in_w + tx.hi] += (1.0 - ty.frac) * tx.frac * g;
        d[ty.hi * in_w + tx.lo] += ty.frac * (1.0 - tx.frac) * g;
        d[ty.hi * in_w + tx.hi] += ty.frac * tx.frac * g;
      }
    }
  }
}

void warp_forward(int channels, int h, int w, const double* x, const double* flow, double* y) {
  const int plane = h * w;
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const int idx = i * w + j;
        const SampleTap ty = sample_tap(i + flow[idx], h);
        const SampleTap tx = sample_tap(j + flow[plane + idx], w);
        y[c * plane + idx] =
            bilinear_at(x + c * plane, w, ty.lo, ty.hi, ty.frac, tx.lo, tx.hi, tx.frac);
      }
    }
  }
}

void warp_backward(int channels, int h, int w, const double* x, const double* flow,
                   const double* dy, double* dx, double* dflow) {
  const int plane = h * w;
  for (int c = 0; c < channels; ++c) {
    const double* src = x + c * plane;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const int idx = i * w + j;
        const SampleTap ty = sample_tap(i + flow[idx], h);
        const SampleTap tx = sample_tap(j + flow[plane + idx], w);
        const double g = dy[c * plane + idx];
        if (dx) {
          double* d = dx + c * plane;
          d[ty.lo * w + tx.lo] += (1.0 - ty.frac) * (1.0 - tx.frac) * g;
          d[ty.lo * w + tx.hi] += (1.0 - ty.frac) * tx.frac * g;
          d[ty.hi * w + tx.lo] += ty.frac * (1.0 - tx.frac) * g;
          d[ty.hi * w + tx.hi] += ty.frac * tx.frac * g;
        }
        if (dflow) {
          const double v00 = src[ty.lo * w + tx.lo], v01 = src[ty.lo * w + tx.hi];
          const double v10 = src[ty.hi * w + tx.lo], v11 = src[ty.hi * w + tx.hi];
          if (!ty.clamped) {
            dflow[idx] += g * ((1.0 - tx.frac) * (v10 - v00) + tx.frac * (v11 - v01));
          }
          if (!tx.clamped) {
            dflow[plane + idx] += g * ((1.0 - ty.frac) * (v01 - v00) + ty.frac * (v11 - v10));
          }
        }
      }
    }
  }
}

}  // namespace ppf::kernels::reference
