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

#ifndef PPF_NN_H_
#define PPF_NN_H_

#include <string>
#include <utility>
#include <vector>

#include "ppf/autograd.h"
#include "ppf/rng.h"

namespace ppf::nn {

// Ordered registry of named trainable tensors. Order is creation order and
// defines the checkpoint layout.
class ParameterSet {
 public:
  ag::Var add(const std::string& name, Tensor init);

  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, ag::Var>>& entries() { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();
  // Throws if `name` is unknown.
  ag::Var& find(const std::string& name);

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
};

// Xavier/Glorot uniform.
Tensor xavier_uniform(Shape shape, int fan_in, int fan_out, Rng& rng);

struct Linear {
  ag::Var weight;  // [out, in]
  ag::Var bias;    // [out] or undefined

  static Linear create(ParameterSet& params, const std::string& name, int in, int out,
                       bool with_bias, Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
  int in_features() const { return weight.dim(1); }
  int out_features() const { return weight.dim(0); }
};

struct Conv2d {
  ag::Var weight;  // [out, in, k, k]
  ag::Var bias;    // [out] or undefined
  int stride = 1;
  int pad = 0;

  static Conv2d create(ParameterSet& params, const std::string& name, int in, int out,
                       int kernel, int stride, bool with_bias, Rng& rng);
  // Same geometry, all weights and biases zero.
  static Conv2d create_zero(ParameterSet& params, const std::string& name, int in, int out,
                            int kernel, int stride);
  ag::Var operator()(const ag::Var& x) const {
    return ag::conv2d(x, weight, bias, stride, pad);
  }
};

struct GroupNorm {
  ag::Var gamma;
  ag::Var beta;
  int channels_per_group = 8;

  static GroupNorm create(ParameterSet& params, const std::string& name, int channels,
                          int channels_per_group);
  ag::Var operator()(const ag::Var& x) const {
    return ag::group_norm(x, gamma, beta, channels_per_group);
  }
};

struct LayerNorm {
  ag::Var gamma;
  ag::Var beta;

  static LayerNorm create(ParameterSet& params, const std::string& name, int dim);
  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

// conv 3x3 -> group norm -> relu
struct ConvNormAct {
  Conv2d conv;
  GroupNorm norm;

  static ConvNormAct create(ParameterSet& params, const std::string& name, int in, int out,
                            int stride, int channels_per_group, Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::relu(norm(conv(x))); }
};

}  // namespace ppf::nn

#endif  // PPF_NN_H_
