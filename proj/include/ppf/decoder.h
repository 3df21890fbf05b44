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

#ifndef PPF_DECODER_H_
#define PPF_DECODER_H_

// Decoupled scene/part decoder and the initial mask heads.
//
// Both branches are semantic-FPN style: every pyramid level is refined to
// `channels` (d), optionally tagged with a normalised coordinate grid, brought
// to stride 4 and summed. The part branch replaces plain bilinear
// upsampling with a learned flow warp.

#include <array>
#include <optional>

#include "ppf/autograd.h"
#include "ppf/encoder.h"
#include "ppf/nn.h"

namespace ppf {

struct DecoderConfig {
  int channels = 32;
  bool decoupled = true;
  bool aligned_part_decoder = true;
  bool positional_encoding = true;
  int channels_per_group = 8;
};

// Scene features drive thing and stuff masks, part features drive part
// masks. Both are d x H/4 x W/4.
struct DecoupledFeatures {
  ag::Var scene;
  ag::Var part;
};

struct BlockSizes {
  int thing = 0;
  int stuff = 0;
  int part = 0;
  int total() const { return thing + stuff + part; }
  bool operator==(const BlockSizes&) const = default;
};

// Unified queries: rows [0, thing) things, then stuff, then parts.
struct QuerySet {
  ag::Var rows;  // total x d
  BlockSizes blocks;
};

// Unified mask logits with the same row layout as QuerySet.
struct MaskSet {
  ag::Var logits;  // total x h x w
  BlockSizes blocks;
};

struct InitialPrediction {
  ag::Var thing_masks;  // N_th x h x w
  ag::Var stuff_masks;
  ag::Var part_masks;
  QuerySet queries;

  MaskSet masks() const;
};

// 2 x h x w grid: channel 0 is x, channel 1 is y, both spanning [-1, 1],
// each offset by `shift`.
Tensor coordinate_grid(int height, int width, double shift = 0.0);

// Bilinearly upsamples `low` to the reference size, predicts a 2-channel
// (dy, dx) flow from [upsampled, reference] with `flow_head`, and samples
// the upsampled map at the displaced positions.
ag::Var flow_warp(const ag::Var& low, const ag::Var& reference, const nn::Conv2d& flow_head);

class FpnBranch {
 public:
  FpnBranch(const std::string& name, int neck_channels, const DecoderConfig& config,
            bool aligned, nn::ParameterSet& params, Rng& rng);

  // `grid_shift` translates the positional grid (used to probe the
  // positional-encoding toggle).
  ag::Var decode(const MultiScaleFeatures& ms, double grid_shift = 0.0) const;

  bool aligned() const { return aligned_; }
  // Flow heads for levels 1..3 (empty when not aligned).
  const std::vector<nn::Conv2d>& flow_heads() const { return flow_heads_; }

 private:
  DecoderConfig config_;
  bool aligned_;
  std::array<nn::ConvNormAct, 4> refine_;
  std::vector<nn::Conv2d> position_proj_;
  std::vector<nn::Conv2d> flow_heads_;
};

class DecoupledDecoder {
 public:
  DecoupledDecoder(int neck_channels, const DecoderConfig& config, nn::ParameterSet& params,
                   Rng& rng);

  ag::Var decode_scene_features(const MultiScaleFeatures& ms, double grid_shift = 0.0) const;
  // Equals the scene features when the decoder is not decoupled.
  ag::Var decode_part_features(const MultiScaleFeatures& ms, double grid_shift = 0.0) const;
  DecoupledFeatures decode(const MultiScaleFeatures& ms) const;

  const DecoderConfig& config() const { return config_; }
  const FpnBranch& scene_branch() const { return scene_; }
  const FpnBranch* part_branch() const { return part_ ? &*part_ : nullptr; }

 private:
  DecoderConfig config_;
  FpnBranch scene_;
  std::optional<FpnBranch> part_;
};

// Three 1x1 convolutions producing the initial thing/stuff/part masks. Row k
// of each head's weight matrix is the initial query k of that block.
class InitialHeads {
 public:
  InitialHeads(int channels, BlockSizes blocks, nn::ParameterSet& params, Rng& rng);

  InitialPrediction initial_predict(const ag::Var& scene, const ag::Var& part) const;

  nn::Conv2d& thing_head() { return thing_; }
  nn::Conv2d& stuff_head() { return stuff_; }
  nn::Conv2d& part_head() { return part_; }
  BlockSizes blocks() const { return blocks_; }

 private:
  BlockSizes blocks_;
  int channels_;
  nn::Conv2d thing_;
  nn::Conv2d stuff_;
  nn::Conv2d part_;
};

}  // namespace ppf

#endif  // PPF_DECODER_H_
