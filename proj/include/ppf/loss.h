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

#ifndef PPF_LOSS_H_
#define PPF_LOSS_H_

// Ground-truth assignment and the deep-supervised training loss.
//
// Thing rows are free proposals matched with the Hungarian algorithm. Stuff
// and part rows are tied to one class each. Mask terms are sigmoid focal
// plus dice, evaluated at the annotation resolution on bilinearly upsampled
// logits.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ppf/raster.h"
#include "ppf/reasoning.h"

namespace ppf {

using BinaryMask = std::vector<std::uint8_t>;

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

inline constexpr double kProbabilityEpsilon = 1e-6;
inline constexpr double kDiceEpsilon = 1e-6;

// Elementwise focal loss with p clamped to [eps, 1 - eps].
double focal_loss(double p, int y, const FocalParams& params = {});
// d focal / d p; zero where the clamp is active.
double focal_loss_grad(double p, int y, const FocalParams& params = {});
// Squared-denominator dice over matching spans.
double dice_loss(std::span<const double> p, std::span<const std::uint8_t> g);

// Minimum-cost assignment of every column to a distinct row. Requires
// rows >= cols and finite entries. result[j] is the row given to column j.
std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost);
double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& assignment);

struct LossWeights {
  double part = 1.0;
  double thing = 1.0;
  double stuff = 1.0;
  double cls = 1.0;
};

struct LossConfig {
  LossWeights weights;
  FocalParams focal;
  double no_object_weight = 0.1;
  bool supervise_initial = true;
};

struct ThingSegment {
  int class_index = 0;  // position in thing_classes
  int instance_id = 0;
  BinaryMask mask;
};

struct GroundTruth {
  int height = 0;
  int width = 0;
  BinaryMask valid;                // 0 on void pixels
  std::vector<ThingSegment> things;
  std::vector<BinaryMask> stuff;   // per stuff class; empty when absent
  std::vector<BinaryMask> parts;   // per part class; empty when absent
};

GroundTruth build_ground_truth(const PanopticPartMap& map, const TaxonomyConfig& taxonomy);

// (prediction row, ground-truth index) pairs within one block.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched_rows;
};

struct MaskPair {
  int row = 0;
  const BinaryMask* mask = nullptr;
};

// Mean over pairs of (pixel-mean focal + dice). The pair masks must outlive
// the backward pass. `logits` is n x H x W at the ground-truth resolution;
// void pixels are ignored.
ag::Var mask_pair_loss(const ag::Var& logits, std::span<const MaskPair> pairs,
                       const BinaryMask& valid, const FocalParams& focal);

// Sigmoid focal over all slots of each row; `targets[r]` is the positive slot
// (the last slot means no object). No-object rows are scaled by
// `no_object_weight`; the sum is divided by max(1, #object rows).
ag::Var class_focal_loss(const ag::Var& logits, std::span<const int> targets,
                         double no_object_weight, const FocalParams& focal);

// cost(k, j) for thing row k (the first `thing_rows` rows of `mask_logits`,
// H x W each) against ground-truth thing j. A null `class_logits` gives a
// mask-only cost.
std::vector<std::vector<double>> matching_cost(const Tensor& mask_logits, int thing_rows,
                                               const Tensor* class_logits,
                                               const GroundTruth& gt, const LossConfig& config);

struct LossBreakdown {
  double thing = 0.0;
  double stuff = 0.0;
  double part = 0.0;
  double cls = 0.0;
  double initial = 0.0;
  double total = 0.0;
};

struct LossResult {
  ag::Var total;
  LossBreakdown breakdown;
  std::vector<Assignment> thing_assignments;  // initial first, then stages
};

// Bilinear upsampling of mask logits to h x w (no-op when already there).
ag::Var upsample_logits(const ag::Var& logits, int height, int width);

LossResult total_loss(const std::vector<StageOutput>& stages, const InitialPrediction& initial,
                      const GroundTruth& gt, const LossConfig& config);

}  // namespace ppf

#endif  // PPF_LOSS_H_
