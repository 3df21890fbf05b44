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

#include "ppf/model.h"

#include <stdexcept>

#include "ppf/errors.h"

namespace ppf {

PartFormer::PartFormer(const ModelConfig& config, const TaxonomyConfig& taxonomy,
                       std::uint64_t seed)
    : config_(config), taxonomy_(taxonomy) {
  if (config.num_thing_queries < 1) throw ConfigError("num_thing_queries must be >= 1");
  if (config.encoder.neck_channels % config.encoder.channels_per_group != 0 ||
      config.decoder.channels % config.decoder.channels_per_group != 0) {
    throw ConfigError("channel widths must be multiples of the group size");
  }
  blocks_ = {config.num_thing_queries, static_cast<int>(taxonomy.stuff_classes.size()),
             static_cast<int>(taxonomy.part_classes.size())};
  const ClassCounts classes{static_cast<int>(taxonomy.thing_classes.size()),
                            static_cast<int>(taxonomy.stuff_classes.size()),
                            static_cast<int>(taxonomy.part_classes.size())};
  Rng rng(seed);
  encoder_ = std::make_unique<Encoder>(config.encoder, params_, rng);
  decoder_ = std::make_unique<DecoupledDecoder>(config.encoder.neck_channels, config.decoder,
                                                params_, rng);
  initial_ = std::make_unique<InitialHeads>(config.decoder.channels, blocks_, params_, rng);
  reasoning_ = std::make_unique<QueryReasoning>(config.decoder.channels, classes, config.stages,
                                                params_, rng);
}

ModelOutput PartFormer::forward(const ag::Var& image) const {
  ModelOutput out;
  const MultiScaleFeatures ms = encoder_->extract_features(image);
  out.features = decoder_->decode(ms);
  out.initial = initial_->initial_predict(out.features.scene, out.features.part);
  out.stages = reasoning_->run_decoder(out.initial, out.features.scene, out.features.part);
  return out;
}

ModelOutput PartFormer::forward(const RgbImage& image) const {
  return forward(ag::constant(image_to_tensor(image)));
}

MergeInput PartFormer::merge_input(const StageOutput& stage, int height, int width) const {
  ag::NoGradGuard no_grad;
  const ag::Var full = stage.masks.logits.dim(1) == height && stage.masks.logits.dim(2) == width
                           ? stage.masks.logits
                           : ag::resize_bilinear(stage.masks.logits, height, width);
  const BlockSizes& b = stage.masks.blocks;
  MergeInput in;
  in.thing_masks = ag::slice_rows(full, 0, b.thing).value();
  in.stuff_masks = ag::slice_rows(full, b.thing, b.thing + b.stuff).value();
  in.part_masks = ag::slice_rows(full, b.thing + b.stuff, b.total()).value();
  in.thing_logits = stage.thing_logits.value();
  return in;
}

Prediction PartFormer::predict(const RgbImage& image, const MergeThresholds& thresholds) const {
  ag::NoGradGuard no_grad;
  const ModelOutput out = forward(image);
  const MergeInput in = merge_input(out.stages.back(), image.height, image.width);
  Prediction p;
  p.map = merge(in, taxonomy_, thresholds);
  const LabelRaster arg = part_argmax(in.part_masks, image.height, image.width);
  p.dense_parts = LabelRaster(image.height, image.width, kVoidId);
  for (std::size_t i = 0; i < arg.size(); ++i) {
    if (arg[i] >= 0) p.dense_parts[i] = taxonomy_.part_classes[arg[i]];
  }
  return p;
}

}  // namespace ppf
