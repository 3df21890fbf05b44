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

#ifndef PPF_MODEL_H_
#define PPF_MODEL_H_

// The full network: encoder, decoupled decoder, initial heads and the
// cascaded reasoning stages, plus full-resolution inference.

#include <cstdint>
#include <memory>
#include <vector>

#include "ppf/decoder.h"
#include "ppf/encoder.h"
#include "ppf/merger.h"
#include "ppf/reasoning.h"

namespace ppf {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  StageConfig stages;
  int num_thing_queries = 8;
};

struct ModelOutput {
  DecoupledFeatures features;
  InitialPrediction initial;
  std::vector<StageOutput> stages;
};

struct Prediction {
  PanopticPartMap map;
  LabelRaster dense_parts;  // unrestricted part winner per pixel, void without parts
};

class PartFormer {
 public:
  PartFormer(const ModelConfig& config, const TaxonomyConfig& taxonomy, std::uint64_t seed);

  ModelOutput forward(const ag::Var& image) const;
  ModelOutput forward(const RgbImage& image) const;

  // Final-stage logits upsampled to height x width.
  MergeInput merge_input(const StageOutput& stage, int height, int width) const;
  Prediction predict(const RgbImage& image, const MergeThresholds& thresholds) const;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const ModelConfig& config() const { return config_; }
  const TaxonomyConfig& taxonomy() const { return taxonomy_; }
  BlockSizes blocks() const { return blocks_; }

  const Encoder& encoder() const { return *encoder_; }
  const DecoupledDecoder& decoder() const { return *decoder_; }
  const InitialHeads& initial_heads() const { return *initial_; }
  const QueryReasoning& reasoning() const { return *reasoning_; }

 private:
  ModelConfig config_;
  TaxonomyConfig taxonomy_;
  BlockSizes blocks_;
  nn::ParameterSet params_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<DecoupledDecoder> decoder_;
  std::unique_ptr<InitialHeads> initial_;
  std::unique_ptr<QueryReasoning> reasoning_;
};

}  // namespace ppf

#endif  // PPF_MODEL_H_
