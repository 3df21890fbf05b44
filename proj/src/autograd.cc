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

#include "ppf/autograd.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "ppf/errors.h"
#include "ppf/kernels.h"

namespace ppf::ag {
namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

inline bool wants(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.shape() == node_->value.shape() && !node_->grad.empty()) return node_->grad;
  return Tensor(node_->value.shape());
}

void Var::zero_grad() { node_->grad = Tensor(); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const Var& v : inputs) any = any || v.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const Var& v : inputs) node->inputs.push_back(v.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  require(root.defined() && root.value().size() == 1, "backward: root must be a scalar");
  if (!root.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// --- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_inplace(b.value());
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (wants(self, i)) self.inputs[i]->grad_buffer().add_inplace(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.inputs[0]->grad_buffer().add_inplace(self.grad);
    if (wants(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (wants(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out.scale_inplace(s);
  return make_op(std::move(out), {a}, [s](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), {a}, [](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = 1.0 / (1.0 + std::exp(-v));
  return make_op(std::move(out), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var add_n(std::span<const Var> terms) {
  require(!terms.empty(), "add_n: no terms");
  Tensor out = terms[0].value();
  for (std::size_t t = 1; t < terms.size(); ++t) {
    require_same_shape(terms[0], terms[t], "add_n");
    out.add_inplace(terms[t].value());
  }
  return make_op(std::move(out), std::vector<Var>(terms.begin(), terms.end()), [](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (wants(self, i)) self.inputs[i]->grad_buffer().add_inplace(self.grad);
    }
  });
}

// --- reductions and shape ----------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_op(Tensor({1}, s), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double up = self.grad[0];
    for (double& v : g.storage()) v += up;
  });
}

Var reshape(const Var& a, Shape shape) {
  return make_op(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no parts");
  Shape trailing(parts[0].shape().begin() + 1, parts[0].shape().end());
  int rows = 0;
  for (const Var& p : parts) {
    require(p.value().rank() == static_cast<int>(trailing.size()) + 1, "concat_rows: rank");
    require(std::equal(trailing.begin(), trailing.end(), p.shape().begin() + 1),
            "concat_rows: trailing dims differ");
    rows += p.dim(0);
  }
  Shape shape{rows};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().storage().begin(), p.value().storage().end(),
              out.storage().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const std::size_t n = self.inputs[i]->value.size();
      if (wants(self, i) && n > 0) {
        Tensor& g = self.inputs[i]->grad_buffer();
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[off + j];
      }
      off += n;
    }
  });
}

Var slice_rows(const Var& a, int begin, int end) {
  require(0 <= begin && begin <= end && end <= a.dim(0), "slice_rows: bad range");
  const std::size_t row = a.value().size() / std::max(1, a.dim(0));
  Shape shape = a.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy(a.value().storage().begin() + static_cast<std::ptrdiff_t>(begin * row),
            a.value().storage().begin() + static_cast<std::ptrdiff_t>(end * row),
            out.storage().begin());
  return make_op(std::move(out), {a}, [begin, row](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t j = 0; j < self.grad.size(); ++j) g[begin * row + j] += self.grad[j];
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  const std::size_t row = a.value().size() / std::max(1, a.dim(0));
  Shape shape = a.shape();
  shape[0] = static_cast<int>(rows.size());
  Tensor out(shape);
  std::vector<int> idx(rows.begin(), rows.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] >= 0 && idx[r] < a.dim(0), "gather_rows: index out of range");
    std::copy_n(a.value().data() + idx[r] * row, row, out.data() + r * row);
  }
  return make_op(std::move(out), {a}, [idx, row](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < row; ++j) g[idx[r] * row + j] += self.grad[r * row + j];
    }
  });
}

Var transpose(const Var& a) {
  require(a.value().rank() == 2, "transpose: rank 2 required");
  const int n = a.dim(0), m = a.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.at(j, i) = a.value().at(i, j);
  return make_op(std::move(out), {a}, [n, m](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) g.at(i, j) += self.grad.at(j, i);
  });
}

// --- dense -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: shape mismatch");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  kernels::gemm_nn(n, m, k, a.value().data(), b.value().data(), out.data());
  return make_op(std::move(out), {a, b}, [n, k, m](Node& self) {
    if (wants(self, 0)) {
      kernels::gemm_nt(n, k, m, self.grad.data(), self.inputs[1]->value.data(),
                       self.inputs[0]->grad_buffer().data());
    }
    if (wants(self, 1)) {
      kernels::gemm_tn(k, m, n, self.inputs[0]->value.data(), self.grad.data(),
                       self.inputs[1]->grad_buffer().data());
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2 && a.dim(1) == b.dim(1),
          "matmul_nt: shape mismatch");
  const int n = a.dim(0), k = a.dim(1), m = b.dim(0);
  Tensor out({n, m});
  kernels::gemm_nt(n, m, k, a.value().data(), b.value().data(), out.data());
  return make_op(std::move(out), {a, b}, [n, k, m](Node& self) {
    if (wants(self, 0)) {
      kernels::gemm_nn(n, k, m, self.grad.data(), self.inputs[1]->value.data(),
                       self.inputs[0]->grad_buffer().data());
    }
    if (wants(self, 1)) {
      kernels::gemm_tn(m, k, n, self.grad.data(), self.inputs[0]->value.data(),
                       self.inputs[1]->grad_buffer().data());
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require(x.value().rank() == 2 && weight.value().rank() == 2 && x.dim(1) == weight.dim(1),
          "linear: shape mismatch");
  const int n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias) require(bias.value().size() == static_cast<std::size_t>(out_dim), "linear: bias");
  Tensor out({n, out_dim});
  if (has_bias) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) out.at(i, j) = bias.value()[j];
  }
  kernels::gemm_nt(n, out_dim, in, x.value().data(), weight.value().data(), out.data());
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [n, in, out_dim](Node& self) {
    if (wants(self, 0)) {
      kernels::gemm_nn(n, in, out_dim, self.grad.data(), self.inputs[1]->value.data(),
                       self.inputs[0]->grad_buffer().data());
    }
    if (wants(self, 1)) {
      kernels::gemm_tn(out_dim, in, n, self.grad.data(), self.inputs[0]->value.data(),
                       self.inputs[1]->grad_buffer().data());
    }
    if (self.inputs.size() > 2 && wants(self, 2)) {
      Tensor& g = self.inputs[2]->grad_buffer();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) g[j] += self.grad.at(i, j);
    }
  });
}

namespace {

// Normalises `count` contiguous groups of `len` values; shared by layer and
// group normalisation. Returns per-group inverse std.
std::vector<double> normalize_groups(const double* x, double* xhat, int count, int len,
                                     double eps) {
  std::vector<double> inv_std(count);
  for (int gidx = 0; gidx < count; ++gidx) {
    const double* p = x + static_cast<std::size_t>(gidx) * len;
    double mean = 0.0;
    for (int i = 0; i < len; ++i) mean += p[i];
    mean /= len;
    double var = 0.0;
    for (int i = 0; i < len; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= len;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[gidx] = is;
    double* q = xhat + static_cast<std::size_t>(gidx) * len;
    for (int i = 0; i < len; ++i) q[i] = (p[i] - mean) * is;
  }
  return inv_std;
}

// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) per group.
void normalize_groups_backward(const double* xhat, const double* dxhat,
                               const std::vector<double>& inv_std, int len, double* dx) {
  for (std::size_t gidx = 0; gidx < inv_std.size(); ++gidx) {
    const double* xh = xhat + gidx * len;
    const double* dh = dxhat + gidx * len;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < len; ++i) {
      m1 += dh[i];
      m2 += dh[i] * xh[i];
    }
    m1 /= len;
    m2 /= len;
    double* d = dx + gidx * len;
    for (int i = 0; i < len; ++i) d[i] += inv_std[gidx] * (dh[i] - m1 - xh[i] * m2);
  }
}

}  // namespace

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require(x.value().rank() == 2, "layer_norm: rank 2 required");
  const int n = x.dim(0), d = x.dim(1);
  require(gamma.value().size() == static_cast<std::size_t>(d) &&
              beta.value().size() == static_cast<std::size_t>(d),
          "layer_norm: affine size");
  Tensor xhat({n, d});
  auto inv_std = normalize_groups(x.value().data(), xhat.data(), n, d, eps);
  Tensor out({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out.at(i, j) = gamma.value()[j] * xhat.at(i, j) + beta.value()[j];
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](Node& self) {
                   const Tensor& gam = self.inputs[1]->value;
                   if (wants(self, 0)) {
                     Tensor dxhat({n, d});
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < d; ++j) dxhat.at(i, j) = self.grad.at(i, j) * gam[j];
                     normalize_groups_backward(xhat.data(), dxhat.data(), inv_std, d,
                                               self.inputs[0]->grad_buffer().data());
                   }
                   if (wants(self, 1)) {
                     Tensor& g = self.inputs[1]->grad_buffer();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < d; ++j) g[j] += self.grad.at(i, j) * xhat.at(i, j);
                   }
                   if (wants(self, 2)) {
                     Tensor& g = self.inputs[2]->grad_buffer();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < d; ++j) g[j] += self.grad.at(i, j);
                   }
                 });
}

Var softmax_rows(const Var& a) {
  require(a.value().rank() == 2, "softmax_rows: rank 2 required");
  const int n = a.dim(0), m = a.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int j = 0; j < m; ++j) mx = std::max(mx, a.value().at(i, j));
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += (out.at(i, j) = std::exp(a.value().at(i, j) - mx));
    for (int j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  return make_op(std::move(out), {a}, [n, m](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
      for (int j = 0; j < m; ++j) g.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
    }
  });
}

// --- feature maps ------------------------------------------------------------

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require(x.value().rank() == 3 && weight.value().rank() == 4, "conv2d: rank");
  require(weight.dim(1) == x.dim(0) && weight.dim(2) == weight.dim(3), "conv2d: weight shape");
  kernels::ConvShape s;
  s.in_channels = x.dim(0);
  s.height = x.dim(1);
  s.width = x.dim(2);
  s.out_channels = weight.dim(0);
  s.kernel = weight.dim(2);
  s.stride = stride;
  s.pad = pad;
  require(s.out_height() > 0 && s.out_width() > 0, "conv2d: empty output");
  const bool has_bias = bias.defined();
  Tensor out({s.out_channels, s.out_height(), s.out_width()});
  kernels::conv2d_forward(s, x.value().data(), weight.value().data(),
                          has_bias ? bias.value().data() : nullptr, out.data());
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op(std::move(out), std::move(inputs), [s](Node& self) {
    double* dx = wants(self, 0) ? self.inputs[0]->grad_buffer().data() : nullptr;
    double* dw = wants(self, 1) ? self.inputs[1]->grad_buffer().data() : nullptr;
    double* db = self.inputs.size() > 2 && wants(self, 2)
                     ? self.inputs[2]->grad_buffer().data()
                     : nullptr;
    kernels::conv2d_backward(s, self.inputs[0]->value.data(), self.inputs[1]->value.data(),
                             self.grad.data(), dx, dw, db);
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int channels_per_group,
               double eps) {
  require(x.value().rank() == 3, "group_norm: rank 3 required");
  const int c = x.dim(0);
  const int plane = x.dim(1) * x.dim(2);
  const int cpg = std::min(channels_per_group, c);
  require(cpg > 0 && c % cpg == 0, "group_norm: channels not divisible by group size");
  const int groups = c / cpg;
  const int len = cpg * plane;
  Tensor xhat(x.shape());
  auto inv_std = normalize_groups(x.value().data(), xhat.data(), groups, len, eps);
  Tensor out(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double ga = gamma.value()[ch], be = beta.value()[ch];
    for (int p = 0; p < plane; ++p) {
      const std::size_t i = static_cast<std::size_t>(ch) * plane + p;
      out[i] = ga * xhat[i] + be;
    }
  }
  return make_op(std::move(out), {x, gamma, beta},
                 [xhat = std::move(xhat), inv_std = std::move(inv_std), c, plane,
                  len](Node& self) {
                   const Tensor& gam = self.inputs[1]->value;
                   if (wants(self, 0)) {
                     Tensor dxhat(self.grad.shape());
                     for (int ch = 0; ch < c; ++ch)
                       for (int p = 0; p < plane; ++p) {
                         const std::size_t i = static_cast<std::size_t>(ch) * plane + p;
                         dxhat[i] = self.grad[i] * gam[ch];
                       }
                     normalize_groups_backward(xhat.data(), dxhat.data(), inv_std, len,
                                               self.inputs[0]->grad_buffer().data());
                   }
                   for (std::size_t which = 1; which <= 2; ++which) {
                     if (!wants(self, which)) continue;
                     Tensor& g = self.inputs[which]->grad_buffer();
                     for (int ch = 0; ch < c; ++ch) {
                       double acc = 0.0;
                       for (int p = 0; p < plane; ++p) {
                         const std::size_t i = static_cast<std::size_t>(ch) * plane + p;
                         acc += which == 1 ? self.grad[i] * xhat[i] : self.grad[i];
                       }
                       g[ch] += acc;
                     }
                   }
                 });
}

Var upsample_nearest(const Var& x, int factor) {
  require(x.value().rank() == 3 && factor >= 1, "upsample_nearest: bad input");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = h * factor, ow = w * factor;
  Tensor out({c, oh, ow});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) out.at(ch, i, j) = x.value().at(ch, i / factor, j / factor);
  return make_op(std::move(out), {x}, [c, oh, ow, factor](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) g.at(ch, i / factor, j / factor) += self.grad.at(ch, i, j);
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  require(x.value().rank() == 3 && out_h > 0 && out_w > 0, "resize_bilinear: bad input");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out({c, out_h, out_w});
  kernels::resize_bilinear_forward(c, h, w, out_h, out_w, x.value().data(), out.data());
  return make_op(std::move(out), {x}, [c, h, w, out_h, out_w](Node& self) {
    kernels::resize_bilinear_backward(c, h, w, out_h, out_w, self.grad.data(),
                                      self.inputs[0]->grad_buffer().data());
  });
}

Var warp(const Var& x, const Var& flow) {
  require(x.value().rank() == 3 && flow.value().rank() == 3 && flow.dim(0) == 2 &&
              flow.dim(1) == x.dim(1) && flow.dim(2) == x.dim(2),
          "warp: flow must be 2 x H x W matching the feature");
  for (double v : flow.value().values()) {
    if (!std::isfinite(v)) throw NumericalError("warp: non-finite flow");
  }
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out(x.shape());
  kernels::warp_forward(c, h, w, x.value().data(), flow.value().data(), out.data());
  return make_op(std::move(out), {x, flow}, [c, h, w](Node& self) {
    double* dx = wants(self, 0) ? self.inputs[0]->grad_buffer().data() : nullptr;
    double* df = wants(self, 1) ? self.inputs[1]->grad_buffer().data() : nullptr;
    kernels::warp_backward(c, h, w, self.inputs[0]->value.data(), self.inputs[1]->value.data(),
                           self.grad.data(), dx, df);
  });
}

Var concat_channels(std::span<const Var> parts) {
  for (const Var& p : parts) require(p.value().rank() == 3, "concat_channels: rank 3 required");
  return concat_rows(parts);
}

}  // namespace ppf::ag
