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

#ifndef PPF_METRICS_H_
#define PPF_METRICS_H_

// PQ and PartPQ evaluation with per-class breakdowns.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ppf/raster.h"

namespace ppf {

struct Segment {
  int scene_class = 0;
  int instance_id = 0;  // 0 for stuff
  std::vector<int> pixels;
};

// Things split per (class, instance), stuff per class; void pixels skipped.
// Ordered by first pixel in raster order.
std::vector<Segment> extract_segments(const PanopticPartMap& map, const TaxonomyConfig& taxonomy);

struct ClassTally {
  std::vector<double> iou;    // instance IoU of each true positive
  std::vector<double> iou_p;  // part-aware IoU of each true positive
  int fp = 0;
  int fn = 0;

  int tp() const { return static_cast<int>(iou.size()); }
};

// Associative, commutative accumulation across images.
struct MetricTally {
  std::map<int, ClassTally> classes;

  MetricTally& operator+=(const MetricTally& other);
};
MetricTally operator+(MetricTally a, const MetricTally& b);

// Instance IoU with ground-truth void pixels removed from the union.
double segment_iou(const Segment& pred, const Segment& gt, const PanopticPartMap& gt_map);

// Mean per-part IoU over the part classes seen in either segment for
// part-bearing classes, instance IoU otherwise. Ground-truth pixels whose
// part label is void are ignored.
double compute_iou_p(const Segment& pred, const Segment& gt, const PanopticPartMap& pred_map,
                     const PanopticPartMap& gt_map, const TaxonomyConfig& taxonomy);

MetricTally match_segments(const PanopticPartMap& pred, const PanopticPartMap& gt,
                           const TaxonomyConfig& taxonomy);

struct ClassResult {
  int scene_class = 0;
  std::string name;
  bool has_parts = false;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double pq = 0.0;  // percentages
  double sq = 0.0;
  double rq = 0.0;
  double partpq = 0.0;
};

// Averages over classes seen in either ground truth or predictions; unset
// when no class qualifies.
struct MetricReport {
  std::optional<double> pq, pq_p, pq_np;
  std::optional<double> partpq, partpq_p, partpq_np;
  std::vector<ClassResult> classes;
};

MetricReport compute_report(const MetricTally& tally, const TaxonomyConfig& taxonomy);
std::optional<double> compute_pq(const MetricTally& tally, const TaxonomyConfig& taxonomy);
std::optional<double> compute_partpq(const MetricTally& tally, const TaxonomyConfig& taxonomy);

enum class SwapMode { kPanopticGt, kPartGt, kBoth };
SwapMode parse_swap_mode(const std::string& text);
std::string swap_mode_name(SwapMode mode);

// Replaces the selected planes of `pred` by ground truth and re-applies the
// part void rule. `dense_parts`, when given, holds the prediction's
// unrestricted per-pixel part winner (part ids, void where unknown) and is
// used in place of the predicted part plane.
PanopticPartMap swap_planes(const PanopticPartMap& pred, const PanopticPartMap& gt, SwapMode mode,
                            const TaxonomyConfig& taxonomy,
                            const LabelRaster* dense_parts = nullptr);

MetricTally oracle_swap_tally(const PanopticPartMap& pred, const PanopticPartMap& gt,
                              SwapMode mode, const TaxonomyConfig& taxonomy,
                              const LabelRaster* dense_parts = nullptr);
MetricReport oracle_swap_eval(const PanopticPartMap& pred, const PanopticPartMap& gt,
                              SwapMode mode, const TaxonomyConfig& taxonomy,
                              const LabelRaster* dense_parts = nullptr);

std::string format_report_table(const MetricReport& report);

}  // namespace ppf

#endif  // PPF_METRICS_H_
