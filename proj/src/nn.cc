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

#include "ppf/nn.h"

#include <cmath>
#include <stdexcept>

namespace ppf::nn {

ag::Var ParameterSet::add(const std::string& name, Tensor init) {
  for (const auto& [n, v] : entries_) {
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  ag::Var v = ag::parameter(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

ag::Var& ParameterSet::find(const std::string& name) {
  for (auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

Tensor xavier_uniform(Shape shape, int fan_in, int fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

Linear Linear::create(ParameterSet& params, const std::string& name, int in, int out,
                      bool with_bias, Rng& rng) {
  Linear l;
  l.weight = params.add(name + ".weight", xavier_uniform({out, in}, in, out, rng));
  if (with_bias) l.bias = params.add(name + ".bias", Tensor({out}));
  return l;
}

Conv2d Conv2d::create(ParameterSet& params, const std::string& name, int in, int out,
                      int kernel, int stride, bool with_bias, Rng& rng) {
  Conv2d c;
  const int k2 = kernel * kernel;
  c.weight =
      params.add(name + ".weight", xavier_uniform({out, in, kernel, kernel}, in * k2, out * k2, rng));
  if (with_bias) c.bias = params.add(name + ".bias", Tensor({out}));
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

Conv2d Conv2d::create_zero(ParameterSet& params, const std::string& name, int in, int out,
                           int kernel, int stride) {
  Conv2d c;
  c.weight = params.add(name + ".weight", Tensor({out, in, kernel, kernel}));
  c.bias = params.add(name + ".bias", Tensor({out}));
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

GroupNorm GroupNorm::create(ParameterSet& params, const std::string& name, int channels,
                            int channels_per_group) {
  GroupNorm g;
  g.gamma = params.add(name + ".gamma", Tensor({channels}, 1.0));
  g.beta = params.add(name + ".beta", Tensor({channels}));
  g.channels_per_group = channels_per_group;
  return g;
}

LayerNorm LayerNorm::create(ParameterSet& params, const std::string& name, int dim) {
  LayerNorm l;
  l.gamma = params.add(name + ".gamma", Tensor({dim}, 1.0));
  l.beta = params.add(name + ".beta", Tensor({dim}));
  return l;
}

ConvNormAct ConvNormAct::create(ParameterSet& params, const std::string& name, int in, int out,
                                int stride, int channels_per_group, Rng& rng) {
  ConvNormAct b;
  b.conv = Conv2d::create(params, name + ".conv", in, out, 3, stride, false, rng);
  b.norm = GroupNorm::create(params, name + ".gn", out, channels_per_group);
  return b;
}

}  // namespace ppf::nn
