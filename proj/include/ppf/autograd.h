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

#ifndef PPF_AUTOGRAD_H_
#define PPF_AUTOGRAD_H_

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// Every op returns a Var that owns its value and, when any input requires a
// gradient, a closure that pushes the output gradient back into the inputs.
// The graph is discarded when the last Var referring into it goes away.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ppf/tensor.h"

namespace ppf::ag {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  // Gradient buffer of matching shape, zero-initialised on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Mutable access for parameter updates; never call on graph interiors.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Zero-filled when no gradient has reached this node.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Var make_op(Tensor, std::vector<Var>, std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

// While alive, ops on the current thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op node. `backward` reads self.grad and accumulates into
// self.inputs[i]->grad_buffer() for inputs that require grad.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

inline Var constant(Tensor t) { return Var(std::move(t), false); }
inline Var parameter(Tensor t) { return Var(std::move(t), true); }

// Seeds d(root)/d(root) = 1 (root must be a scalar) and back-propagates.
void backward(const Var& root);

// --- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var add_n(std::span<const Var> terms);

// --- reductions and shape ----------------------------------------------------
Var sum(const Var& a);
Var reshape(const Var& a, Shape shape);
// Concatenates along axis 0; empty inputs are allowed.
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, int begin, int end);
// Gathers rows in the given order (a row permutation or selection).
Var gather_rows(const Var& a, std::span<const int> rows);
Var transpose(const Var& a);

// --- dense -------------------------------------------------------------------
// [n,k] x [k,m]
Var matmul(const Var& a, const Var& b);
// [n,k] x [m,k]^T
Var matmul_nt(const Var& a, const Var& b);
// x[n,in] W[out,in]^T + b[out]; bias may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
// Row-wise normalisation with affine gamma/beta of shape [d].
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_rows(const Var& a);

// --- feature maps (C x H x W) -----------------------------------------------
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int channels_per_group,
               double eps = 1e-5);
Var upsample_nearest(const Var& x, int factor);
Var resize_bilinear(const Var& x, int out_h, int out_w);
// Samples x at (y + flow[0], x + flow[1]) bilinearly with edge clamping.
Var warp(const Var& x, const Var& flow);
Var concat_channels(std::span<const Var> parts);

}  // namespace ppf::ag

#endif  // PPF_AUTOGRAD_H_
