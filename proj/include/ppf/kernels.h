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

#ifndef PPF_KERNELS_H_
#define PPF_KERNELS_H_

// Dense numeric kernels behind the autograd ops. Two implementations share
// one interface:
//
//   ppf::kernels            OpenMP-parallel, im2col + cache-friendly GEMM
//   ppf::kernels::reference straightforward serial loops, kept for testing
//
// The parallel kernels partition work over output elements only, so every
// output value is reduced in the same order regardless of thread count and
// results are bit-reproducible across OMP_NUM_THREADS settings.
//
// All accumulating kernels ADD into their outputs (callers zero them).

namespace ppf::kernels {

struct ConvShape {
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

// C[M,N] += A[M,K] B[K,N]
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
// C[M,N] += A[M,K] B[N,K]^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);
// C[M,N] += A[K,M]^T B[K,N]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);

// y[O,Ho,Wo] = conv(x[C,H,W], w[O,C,k,k]) + bias[O]; bias may be null.
// y is overwritten.
void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* bias,
                    double* y);
// Accumulates into dx, dw, db; any of them may be null.
void conv2d_backward(const ConvShape& s, const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db);

// Bilinear resize with half-pixel centers (align_corners = false) and
// edge clamping. y is overwritten.
void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             const double* x, double* y);
void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              const double* dy, double* dx);

// y(c, i, j) = bilinear sample of x(c) at (i + flow(0,i,j), j + flow(1,i,j))
// in pixel units with coordinates clamped to the map. y is overwritten.
void warp_forward(int channels, int h, int w, const double* x, const double* flow, double* y);
// Accumulates into dx and dflow; either may be null.
void warp_backward(int channels, int h, int w, const double* x, const double* flow,
                   const double* dy, double* dx, double* dflow);

namespace reference {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);
void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* bias,
                    double* y);
void conv2d_backward(const ConvShape& s, const double* x, const double* w, const double* dy,
                     double* dx, double* dw, double* db);
void resize_bilinear_forward(int channels, int in_h, int in_w, int out_h, int out_w,
                             const double* x, double* y);
void resize_bilinear_backward(int channels, int in_h, int in_w, int out_h, int out_w,
                              const double* dy, double* dx);
void warp_forward(int channels, int h, int w, const double* x, const double* flow, double* y);
void warp_backward(int channels, int h, int w, const double* x, const double* flow,
                   const double* dy, double* dx, double* dflow);

}  // namespace reference

// Shared sampling geometry.
struct LinearTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;  // weight of hi
};

// Half-pixel source coordinate for resizing, clamped to [0, in - 1].
inline LinearTap resize_tap(int dst, int in_size, int out_size) {
  double src = (dst + 0.5) * static_cast<double>(in_size) / out_size - 0.5;
  if (src < 0.0) src = 0.0;
  int lo = static_cast<int>(src);
  if (lo > in_size - 1) lo = in_size - 1;
  const int hi = lo + 1 < in_size ? lo + 1 : in_size - 1;
  return {lo, hi, src - lo};
}

// Clamped sampling tap at a continuous coordinate. `clamped` reports
// whether the coordinate lay outside [0, size - 1] (zero derivative).
struct SampleTap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
  bool clamped = false;
};

SampleTap sample_tap(double pos, int size);

}  // namespace ppf::kernels

#endif  // PPF_KERNELS_H_
