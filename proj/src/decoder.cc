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

#include "ppf/decoder.h"

#include <stdexcept>
#include <string>

namespace ppf {

Tensor coordinate_grid(int height, int width, double shift) {
  Tensor g({2, height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      g.at(0, y, x) = (width > 1 ? 2.0 * x / (width - 1) - 1.0 : 0.0) + shift;
      g.at(1, y, x) = (height > 1 ? 2.0 * y / (height - 1) - 1.0 : 0.0) + shift;
    }
  }
  return g;
}

MaskSet InitialPrediction::masks() const {
  const std::array<ag::Var, 3> parts{thing_masks, stuff_masks, part_masks};
  return {ag::concat_rows(parts), queries.blocks};
}

ag::Var flow_warp(const ag::Var& low, const ag::Var& reference, const nn::Conv2d& flow_head) {
  if (low.value().rank() != 3 || reference.value().rank() != 3) {
    throw std::invalid_argument("flow_warp expects C x H x W features");
  }
  const int h = reference.dim(1), w = reference.dim(2);
  if (h < low.dim(1) || w < low.dim(2)) {
    throw std::invalid_argument("flow_warp target must not be smaller than the source");
  }
  const ag::Var up = ag::resize_bilinear(low, h, w);
  const std::array<ag::Var, 2> both{up, reference};
  const ag::Var flow = flow_head(ag::concat_channels(both));
  return ag::warp(up, flow);
}

FpnBranch::FpnBranch(const std::string& name, int neck_channels, const DecoderConfig& config,
                     bool aligned, nn::ParameterSet& params, Rng& rng)
    : config_(config), aligned_(aligned) {
  const int d = config.channels;
  for (int l = 0; l < 4; ++l) {
    const std::string lname = name + ".level" + std::to_string(l);
    refine_[l] = nn::ConvNormAct::create(params, lname + ".refine", neck_channels, d, 1,
                                         config.channels_per_group, rng);
    if (config.positional_encoding) {
      position_proj_.push_back(
          nn::Conv2d::create(params, lname + ".position", d + 2, d, 1, 1, true, rng));
    }
    if (aligned && l > 0) {
      flow_heads_.push_back(nn::Conv2d::create_zero(params, lname + ".flow", 2 * d, 2, 3, 1));
    }
  }
}

ag::Var FpnBranch::decode(const MultiScaleFeatures& ms, double grid_shift) const {
  std::array<ag::Var, 4> level;
  for (int l = 0; l < 4; ++l) {
    ag::Var f = refine_[l](ms.levels[l]);
    if (config_.positional_encoding) {
      const ag::Var grid = ag::constant(coordinate_grid(f.dim(1), f.dim(2), grid_shift));
      const std::array<ag::Var, 2> parts{f, grid};
      f = position_proj_[l](ag::concat_channels(parts));
    }
    level[l] = f;
  }
  const int h = level[0].dim(1), w = level[0].dim(2);
  std::vector<ag::Var> terms{level[0]};
  for (int l = 1; l < 4; ++l) {
    terms.push_back(aligned_ ? flow_warp(level[l], level[0], flow_heads_[l - 1])
                             : ag::resize_bilinear(level[l], h, w));
  }
  return ag::add_n(terms);
}

DecoupledDecoder::DecoupledDecoder(int neck_channels, const DecoderConfig& config,
                                   nn::ParameterSet& params, Rng& rng)
    : config_(config), scene_("decoder.scene", neck_channels, config, false, params, rng) {
  if (config.decoupled) {
    part_.emplace("decoder.part", neck_channels, config, config.aligned_part_decoder, params, rng);
  }
}

ag::Var DecoupledDecoder::decode_scene_features(const MultiScaleFeatures& ms,
                                                double grid_shift) const {
  return scene_.decode(ms, grid_shift);
}

ag::Var DecoupledDecoder::decode_part_features(const MultiScaleFeatures& ms,
                                               double grid_shift) const {
  return part_ ? part_->decode(ms, grid_shift) : scene_.decode(ms, grid_shift);
}

DecoupledFeatures DecoupledDecoder::decode(const MultiScaleFeatures& ms) const {
  DecoupledFeatures f;
  f.scene = decode_scene_features(ms);
  f.part = part_ ? part_->decode(ms) : f.scene;
  return f;
}

InitialHeads::InitialHeads(int channels, BlockSizes blocks, nn::ParameterSet& params, Rng& rng)
    : blocks_(blocks), channels_(channels) {
  thing_ = nn::Conv2d::create(params, "initial.thing", channels, blocks.thing, 1, 1, true, rng);
  stuff_ = nn::Conv2d::create(params, "initial.stuff", channels, blocks.stuff, 1, 1, true, rng);
  part_ = nn::Conv2d::create(params, "initial.part", channels, blocks.part, 1, 1, true, rng);
}

InitialPrediction InitialHeads::initial_predict(const ag::Var& scene, const ag::Var& part) const {
  if (scene.shape() != part.shape() || scene.dim(0) != channels_) {
    throw std::invalid_argument("initial_predict: feature shapes disagree");
  }
  InitialPrediction p;
  p.thing_masks = thing_(scene);
  p.stuff_masks = stuff_(scene);
  p.part_masks = part_(part);
  const std::array<ag::Var, 3> rows{ag::reshape(thing_.weight, {blocks_.thing, channels_}),
                                    ag::reshape(stuff_.weight, {blocks_.stuff, channels_}),
                                    ag::reshape(part_.weight, {blocks_.part, channels_})};
  p.queries = {ag::concat_rows(rows), blocks_};
  return p;
}

}  // namespace ppf
