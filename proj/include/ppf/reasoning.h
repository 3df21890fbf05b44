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

#ifndef PPF_REASONING_H_
#define PPF_REASONING_H_

// Cascaded query refinement: masked feature grouping, gated dynamic
// convolution, joint self-attention and per-block prediction heads.

#include <vector>

#include "ppf/decoder.h"
#include "ppf/nn.h"

namespace ppf {

struct StageConfig {
  int num_stages = 3;
  bool use_dynamic_conv = true;
  bool use_self_attention = true;
  int heads = 4;
};

// Real class counts per block; the heads add one no-object slot each.
struct ClassCounts {
  int thing = 0;
  int stuff = 0;
  int part = 0;
};

struct StageOutput {
  QuerySet queries;
  MaskSet masks;
  ag::Var thing_logits;  // N_th x (thing + 1)
  ag::Var stuff_logits;
  ag::Var part_logits;
};

// X[k] = sum over pixels of sigmoid(M[k]) * F, with F = scene for thing and
// stuff rows and F = part for part rows.
ag::Var group_query_features(const MaskSet& prev, const ag::Var& scene, const ag::Var& part);

// Flattens a d x h x w map to d x (h*w).
ag::Var flatten_spatial(const ag::Var& f);

class DynamicConv {
 public:
  DynamicConv() = default;
  DynamicConv(const std::string& name, int d, nn::ParameterSet& params, Rng& rng);

  // sigmoid(LN(FC(X))) * Wx X + sigmoid(LN(FC'(X))) * Wq Q.
  ag::Var gated_sum(const ag::Var& x, const ag::Var& q) const;
  ag::Var operator()(const ag::Var& x, const ag::Var& q) const;

  nn::Linear proj_x, proj_q, gate_x, gate_q, out;
  nn::LayerNorm gate_x_norm, gate_q_norm, out_norm;
};

// Multi-head self-attention over all query rows followed by a two-layer
// FFN, each wrapped as LN(x + sublayer(x)).
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(const std::string& name, int d, int heads, nn::ParameterSet& params,
                     Rng& rng);

  ag::Var attention(const ag::Var& q) const;
  ag::Var operator()(const ag::Var& q) const;

  // Per-head projections; head h uses columns [h*dh, (h+1)*dh) of the
  // equivalent fused matrices.
  std::vector<nn::Linear> query, key, value, output;
  nn::LayerNorm attention_norm, ffn_norm;
  nn::Linear ffn1, ffn2;
};

// Bias-free two-layer FFN applied to queries before the mask dot product.
struct MaskFfn {
  nn::Linear layer1, layer2;
  ag::Var operator()(const ag::Var& q) const { return layer2(ag::relu(layer1(q))); }
};

struct ClassFfn {
  nn::Linear layer1, layer2;
  ag::Var operator()(const ag::Var& q) const { return layer2(ag::relu(layer1(q))); }
};

class PredictionHeads {
 public:
  PredictionHeads() = default;
  PredictionHeads(const std::string& name, int d, ClassCounts classes, nn::ParameterSet& params,
                  Rng& rng);

  StageOutput predict_masks_and_classes(const QuerySet& q, const ag::Var& scene,
                                        const ag::Var& part) const;

  MaskFfn thing_mask, stuff_mask, part_mask;
  ClassFfn thing_class, stuff_class, part_class;
};

class ReasoningStage {
 public:
  ReasoningStage(const std::string& name, int d, ClassCounts classes, const StageConfig& config,
                 nn::ParameterSet& params, Rng& rng);

  StageOutput forward(const QuerySet& q_prev, const MaskSet& m_prev, const ag::Var& scene,
                      const ag::Var& part) const;

  DynamicConv dynamic_conv;
  SelfAttentionBlock self_attention;
  PredictionHeads heads;

 private:
  StageConfig config_;
};

class QueryReasoning {
 public:
  QueryReasoning(int d, ClassCounts classes, const StageConfig& config, nn::ParameterSet& params,
                 Rng& rng);

  std::vector<StageOutput> run_decoder(const InitialPrediction& init, const ag::Var& scene,
                                       const ag::Var& part) const;
  // Runs stages [first, first + count) from explicit state.
  std::vector<StageOutput> run_stages(const QuerySet& q, const MaskSet& m, const ag::Var& scene,
                                      const ag::Var& part, int first, int count) const;

  const StageConfig& config() const { return config_; }
  std::vector<ReasoningStage>& stages() { return stages_; }

 private:
  StageConfig config_;
  std::vector<ReasoningStage> stages_;
};

}  // namespace ppf

#endif  // PPF_REASONING_H_
