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

#ifndef PPF_MERGER_H_
#define PPF_MERGER_H_

// Turns per-query predictions into a panoptic-part map: score-ordered thing
// pasting, stuff fill, then a part overlay with the compatibility void rule.

#include <vector>

#include "ppf/raster.h"
#include "ppf/tensor.h"

namespace ppf {

struct MergeThresholds {
  double score = 0.3;
  double mask = 0.5;
  double overlap_keep = 0.5;
  int min_stuff_area = 16;
};

// Logits at the output resolution.
struct MergeInput {
  Tensor thing_masks;   // N_th x H x W
  Tensor thing_logits;  // N_th x (thing classes + 1)
  Tensor stuff_masks;   // N_st x H x W
  Tensor part_masks;    // N_pt x H x W
};

struct PastedSegment {
  int query = 0;
  int scene_class = 0;
  int instance_id = 0;
  double score = 0.0;
};

struct PanopticResult {
  LabelRaster scene_class;
  LabelRaster instance_id;
  std::vector<PastedSegment> segments;
};

// Class and score of one thing row: best real class by sigmoid, times the
// mean foreground probability over the binarized mask (0 for empty masks).
struct ThingScore {
  int class_index = 0;
  double score = 0.0;
};
ThingScore score_thing(const MergeInput& in, int row, double mask_threshold);

PanopticResult merge_panoptic(const MergeInput& in, const TaxonomyConfig& taxonomy,
                              const MergeThresholds& thresholds);

// Unrestricted part argmax per pixel of every part-bearing segment; winners
// not allowed for the segment's class become void.
PanopticPartMap merge_parts(const PanopticResult& panoptic, const Tensor& part_masks,
                            const TaxonomyConfig& taxonomy);

// Index of the maximum part logit at every pixel (-1 without part rows).
LabelRaster part_argmax(const Tensor& part_masks, int height, int width);

PanopticPartMap merge(const MergeInput& in, const TaxonomyConfig& taxonomy,
                      const MergeThresholds& thresholds);

}  // namespace ppf

#endif  // PPF_MERGER_H_
