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

#include "ppf/reasoning.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ppf {
namespace {

void check_blocks(const BlockSizes& b, int rows) {
  if (b.thing < 0 || b.stuff < 0 || b.part < 0 || b.total() != rows) {
    throw std::invalid_argument("block sizes do not match row count");
  }
}

ag::Var masked_sum(const ag::Var& logits, const ag::Var& flat_features) {
  const int n = logits.dim(0);
  const ag::Var weights = ag::sigmoid(ag::reshape(logits, {n, logits.dim(1) * logits.dim(2)}));
  return ag::matmul_nt(weights, flat_features);
}

ag::Var dot_masks(const ag::Var& embed, const ag::Var& f) {
  return ag::reshape(ag::matmul(embed, flatten_spatial(f)), {embed.dim(0), f.dim(1), f.dim(2)});
}

}  // namespace

ag::Var flatten_spatial(const ag::Var& f) {
  return ag::reshape(f, {f.dim(0), f.dim(1) * f.dim(2)});
}

ag::Var group_query_features(const MaskSet& prev, const ag::Var& scene, const ag::Var& part) {
  const BlockSizes& b = prev.blocks;
  check_blocks(b, prev.logits.dim(0));
  if (scene.shape() != part.shape() || prev.logits.dim(1) != scene.dim(1) ||
      prev.logits.dim(2) != scene.dim(2)) {
    throw std::invalid_argument("group_query_features: spatial shapes disagree");
  }
  const int scene_rows = b.thing + b.stuff;
  const std::array<ag::Var, 2> blocks{
      masked_sum(ag::slice_rows(prev.logits, 0, scene_rows), flatten_spatial(scene)),
      masked_sum(ag::slice_rows(prev.logits, scene_rows, b.total()), flatten_spatial(part))};
  return ag::concat_rows(blocks);
}

DynamicConv::DynamicConv(const std::string& name, int d, nn::ParameterSet& params, Rng& rng) {
  proj_x = nn::Linear::create(params, name + ".proj_x", d, d, true, rng);
  proj_q = nn::Linear::create(params, name + ".proj_q", d, d, true, rng);
  gate_x = nn::Linear::create(params, name + ".gate_x", d, d, true, rng);
  gate_q = nn::Linear::create(params, name + ".gate_q", d, d, true, rng);
  gate_x_norm = nn::LayerNorm::create(params, name + ".gate_x_norm", d);
  gate_q_norm = nn::LayerNorm::create(params, name + ".gate_q_norm", d);
  out = nn::Linear::create(params, name + ".out", d, d, true, rng);
  out_norm = nn::LayerNorm::create(params, name + ".out_norm", d);
}

ag::Var DynamicConv::gated_sum(const ag::Var& x, const ag::Var& q) const {
  if (x.shape() != q.shape()) throw std::invalid_argument("dynamic conv: X and Q differ in shape");
  const ag::Var gx = ag::sigmoid(gate_x_norm(gate_x(x)));
  const ag::Var gq = ag::sigmoid(gate_q_norm(gate_q(x)));
  return ag::add(ag::mul(gx, proj_x(x)), ag::mul(gq, proj_q(q)));
}

ag::Var DynamicConv::operator()(const ag::Var& x, const ag::Var& q) const {
  return out_norm(out(gated_sum(x, q)));
}

SelfAttentionBlock::SelfAttentionBlock(const std::string& name, int d, int heads,
                                       nn::ParameterSet& params, Rng& rng) {
  if (heads < 1 || d % heads != 0) {
    throw std::invalid_argument("attention heads must divide the query width");
  }
  const int dh = d / heads;
  for (int h = 0; h < heads; ++h) {
    const std::string hn = name + ".head" + std::to_string(h);
    query.push_back(nn::Linear::create(params, hn + ".query", d, dh, true, rng));
    key.push_back(nn::Linear::create(params, hn + ".key", d, dh, true, rng));
    value.push_back(nn::Linear::create(params, hn + ".value", d, dh, true, rng));
    output.push_back(nn::Linear::create(params, hn + ".output", dh, d, h == 0, rng));
  }
  attention_norm = nn::LayerNorm::create(params, name + ".attention_norm", d);
  ffn1 = nn::Linear::create(params, name + ".ffn1", d, 2 * d, true, rng);
  ffn2 = nn::Linear::create(params, name + ".ffn2", 2 * d, d, true, rng);
  ffn_norm = nn::LayerNorm::create(params, name + ".ffn_norm", d);
}

ag::Var SelfAttentionBlock::attention(const ag::Var& q) const {
  std::vector<ag::Var> terms;
  for (std::size_t h = 0; h < query.size(); ++h) {
    const double temperature = 1.0 / std::sqrt(static_cast<double>(query[h].out_features()));
    const ag::Var scores = ag::scale(ag::matmul_nt(query[h](q), key[h](q)), temperature);
    terms.push_back(output[h](ag::matmul(ag::softmax_rows(scores), value[h](q))));
  }
  return ag::add_n(terms);
}

ag::Var SelfAttentionBlock::operator()(const ag::Var& q) const {
  const ag::Var q1 = attention_norm(ag::add(q, attention(q)));
  return ffn_norm(ag::add(q1, ffn2(ag::relu(ffn1(q1)))));
}

PredictionHeads::PredictionHeads(const std::string& name, int d, ClassCounts classes,
                                 nn::ParameterSet& params, Rng& rng) {
  auto mask = [&](const std::string& block) {
    return MaskFfn{nn::Linear::create(params, name + "." + block + "_mask1", d, d, false, rng),
                   nn::Linear::create(params, name + "." + block + "_mask2", d, d, false, rng)};
  };
  auto cls = [&](const std::string& block, int count) {
    return ClassFfn{
        nn::Linear::create(params, name + "." + block + "_class1", d, d, true, rng),
        nn::Linear::create(params, name + "." + block + "_class2", d, count + 1, true, rng)};
  };
  thing_mask = mask("thing");
  stuff_mask = mask("stuff");
  part_mask = mask("part");
  thing_class = cls("thing", classes.thing);
  stuff_class = cls("stuff", classes.stuff);
  part_class = cls("part", classes.part);
}

StageOutput PredictionHeads::predict_masks_and_classes(const QuerySet& q, const ag::Var& scene,
                                                       const ag::Var& part) const {
  const BlockSizes& b = q.blocks;
  check_blocks(b, q.rows.dim(0));
  const ag::Var qt = ag::slice_rows(q.rows, 0, b.thing);
  const ag::Var qs = ag::slice_rows(q.rows, b.thing, b.thing + b.stuff);
  const ag::Var qp = ag::slice_rows(q.rows, b.thing + b.stuff, b.total());
  StageOutput out;
  out.queries = q;
  const std::array<ag::Var, 3> masks{dot_masks(thing_mask(qt), scene),
                                     dot_masks(stuff_mask(qs), scene),
                                     dot_masks(part_mask(qp), part)};
  out.masks = {ag::concat_rows(masks), b};
  out.thing_logits = thing_class(qt);
  out.stuff_logits = stuff_class(qs);
  out.part_logits = part_class(qp);
  return out;
}

ReasoningStage::ReasoningStage(const std::string& name, int d, ClassCounts classes,
                               const StageConfig& config, nn::ParameterSet& params, Rng& rng)
    : config_(config) {
  if (config.use_dynamic_conv) dynamic_conv = DynamicConv(name + ".dynamic_conv", d, params, rng);
  if (config.use_self_attention) {
    self_attention = SelfAttentionBlock(name + ".self_attention", d, config.heads, params, rng);
  }
  heads = PredictionHeads(name + ".heads", d, classes, params, rng);
}

StageOutput ReasoningStage::forward(const QuerySet& q_prev, const MaskSet& m_prev,
                                    const ag::Var& scene, const ag::Var& part) const {
  if (!(q_prev.blocks == m_prev.blocks)) {
    throw std::invalid_argument("query and mask blocks differ");
  }
  ag::Var q = q_prev.rows;
  if (config_.use_dynamic_conv) {
    const ag::Var x = group_query_features(m_prev, scene, part);
    q = dynamic_conv(x, q);
  }
  if (config_.use_self_attention) q = self_attention(q);
  return heads.predict_masks_and_classes({q, q_prev.blocks}, scene, part);
}

QueryReasoning::QueryReasoning(int d, ClassCounts classes, const StageConfig& config,
                               nn::ParameterSet& params, Rng& rng)
    : config_(config) {
  if (config.num_stages < 1) throw std::invalid_argument("at least one reasoning stage required");
  for (int i = 0; i < config.num_stages; ++i) {
    stages_.emplace_back("stage" + std::to_string(i + 1), d, classes, config, params, rng);
  }
}

std::vector<StageOutput> QueryReasoning::run_decoder(const InitialPrediction& init,
                                                     const ag::Var& scene,
                                                     const ag::Var& part) const {
  return run_stages(init.queries, init.masks(), scene, part, 0, config_.num_stages);
}

std::vector<StageOutput> QueryReasoning::run_stages(const QuerySet& q, const MaskSet& m,
                                                    const ag::Var& scene, const ag::Var& part,
                                                    int first, int count) const {
  if (first < 0 || count < 0 || first + count > static_cast<int>(stages_.size())) {
    throw std::out_of_range("run_stages: stage range");
  }
  std::vector<StageOutput> outputs;
  QuerySet cur_q = q;
  MaskSet cur_m = m;
  for (int i = first; i < first + count; ++i) {
    outputs.push_back(stages_[i].forward(cur_q, cur_m, scene, part));
    cur_q = outputs.back().queries;
    cur_m = outputs.back().masks;
  }
  return outputs;
}

}  // namespace ppf
