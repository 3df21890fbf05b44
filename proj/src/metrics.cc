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

#include "ppf/metrics.h"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "ppf/errors.h"

namespace ppf {
namespace {

void check_dims(const PanopticPartMap& a, const PanopticPartMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("prediction and ground truth differ in size");
  }
}

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

std::vector<Segment> extract_segments(const PanopticPartMap& map, const TaxonomyConfig& taxonomy) {
  std::vector<Segment> segments;
  std::map<std::pair<int, int>, int> index;
  for (std::size_t i = 0; i < map.scene_class.size(); ++i) {
    const int c = map.scene_class[i];
    if (c == kVoidId) continue;
    const int inst = taxonomy.is_thing(c) ? map.instance_id[i] : 0;
    auto [it, inserted] = index.try_emplace({c, inst}, static_cast<int>(segments.size()));
    if (inserted) segments.push_back({c, inst, {}});
    segments[it->second].pixels.push_back(static_cast<int>(i));
  }
  return segments;
}

MetricTally& MetricTally::operator+=(const MetricTally& other) {
  for (const auto& [c, t] : other.classes) {
    ClassTally& mine = classes[c];
    mine.iou.insert(mine.iou.end(), t.iou.begin(), t.iou.end());
    mine.iou_p.insert(mine.iou_p.end(), t.iou_p.begin(), t.iou_p.end());
    mine.fp += t.fp;
    mine.fn += t.fn;
  }
  return *this;
}

MetricTally operator+(MetricTally a, const MetricTally& b) { return a += b; }

double segment_iou(const Segment& pred, const Segment& gt, const PanopticPartMap& gt_map) {
  std::set<int> gt_pixels(gt.pixels.begin(), gt.pixels.end());
  std::size_t inter = 0, pred_void = 0;
  for (int i : pred.pixels) {
    if (gt_pixels.count(i)) ++inter;
    if (gt_map.scene_class[i] == kVoidId) ++pred_void;
  }
  const double uni = static_cast<double>(pred.pixels.size() + gt.pixels.size() - inter - pred_void);
  return ratio(static_cast<double>(inter), uni);
}

double compute_iou_p(const Segment& pred, const Segment& gt, const PanopticPartMap& pred_map,
                     const PanopticPartMap& gt_map, const TaxonomyConfig& taxonomy) {
  if (!taxonomy.has_parts(gt.scene_class)) return segment_iou(pred, gt, gt_map);
  const std::set<int> gt_pixels(gt.pixels.begin(), gt.pixels.end());
  // part id -> (|pred|, |gt|, |intersection|)
  std::map<int, std::array<std::size_t, 3>> counts;
  for (int i : gt.pixels) {
    const int g = gt_map.part_class[i];
    if (g == kVoidId) continue;
    ++counts[g][1];
  }
  for (int i : pred.pixels) {
    if (gt_map.scene_class[i] == kVoidId) continue;
    const bool in_gt = gt_pixels.count(i) > 0;
    if (in_gt && gt_map.part_class[i] == kVoidId) continue;
    const int p = pred_map.part_class[i];
    if (p == kVoidId) continue;
    ++counts[p][0];
    if (in_gt && gt_map.part_class[i] == p) ++counts[p][2];
  }
  if (counts.empty()) return 1.0;
  double sum = 0.0;
  for (const auto& [part, n] : counts) {
    sum += static_cast<double>(n[2]) / static_cast<double>(n[0] + n[1] - n[2]);
  }
  return sum / static_cast<double>(counts.size());
}

MetricTally match_segments(const PanopticPartMap& pred, const PanopticPartMap& gt,
                           const TaxonomyConfig& taxonomy) {
  check_dims(pred, gt);
  const std::vector<Segment> ps = extract_segments(pred, taxonomy);
  const std::vector<Segment> gs = extract_segments(gt, taxonomy);
  // Segment index per pixel, -1 for void.
  std::vector<int> gt_at(gt.scene_class.size(), -1);
  for (std::size_t j = 0; j < gs.size(); ++j) {
    for (int i : gs[j].pixels) gt_at[i] = static_cast<int>(j);
  }
  std::map<std::pair<int, int>, std::size_t> inter;
  std::vector<std::size_t> pred_void(ps.size(), 0);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (int i : ps[k].pixels) {
      if (gt_at[i] >= 0) {
        ++inter[{static_cast<int>(k), gt_at[i]}];
      } else if (gt.scene_class[i] == kVoidId) {
        ++pred_void[k];
      }
    }
  }
  MetricTally tally;
  std::vector<char> pred_matched(ps.size(), 0), gt_matched(gs.size(), 0);
  for (const auto& [key, n] : inter) {
    const auto [k, j] = key;
    if (ps[k].scene_class != gs[j].scene_class) continue;
    const double uni =
        static_cast<double>(ps[k].pixels.size() + gs[j].pixels.size() - n - pred_void[k]);
    const double iou = static_cast<double>(n) / uni;
    if (iou <= 0.5) continue;
    pred_matched[k] = gt_matched[j] = 1;
    ClassTally& t = tally.classes[gs[j].scene_class];
    t.iou.push_back(iou);
    t.iou_p.push_back(compute_iou_p(ps[k], gs[j], pred, gt, taxonomy));
  }
  for (std::size_t j = 0; j < gs.size(); ++j) {
    if (!gt_matched[j]) ++tally.classes[gs[j].scene_class].fn;
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (pred_matched[k]) continue;
    if (static_cast<double>(pred_void[k]) > 0.5 * static_cast<double>(ps[k].pixels.size())) {
      continue;
    }
    ++tally.classes[ps[k].scene_class].fp;
  }
  return tally;
}

MetricReport compute_report(const MetricTally& tally, const TaxonomyConfig& taxonomy) {
  MetricReport r;
  std::vector<double> pq_all, pq_p, pq_np, ppq_all, ppq_p, ppq_np;
  for (const auto& [c, t] : tally.classes) {
    const int tp = t.tp();
    const double den = tp + 0.5 * t.fp + 0.5 * t.fn;
    if (den <= 0.0) continue;
    ClassResult cr;
    cr.scene_class = c;
    cr.name = taxonomy.name_of(c);
    cr.has_parts = taxonomy.has_parts(c);
    cr.tp = tp;
    cr.fp = t.fp;
    cr.fn = t.fn;
    double iou_sum = 0.0, iou_p_sum = 0.0;
    for (double v : t.iou) iou_sum += v;
    for (double v : t.iou_p) iou_p_sum += v;
    cr.pq = 100.0 * iou_sum / den;
    cr.sq = 100.0 * ratio(iou_sum, tp);
    cr.rq = 100.0 * tp / den;
    cr.partpq = 100.0 * iou_p_sum / den;
    pq_all.push_back(cr.pq);
    ppq_all.push_back(cr.partpq);
    (cr.has_parts ? pq_p : pq_np).push_back(cr.pq);
    (cr.has_parts ? ppq_p : ppq_np).push_back(cr.partpq);
    r.classes.push_back(cr);
  }
  r.pq = mean_of(pq_all);
  r.pq_p = mean_of(pq_p);
  r.pq_np = mean_of(pq_np);
  r.partpq = mean_of(ppq_all);
  r.partpq_p = mean_of(ppq_p);
  r.partpq_np = mean_of(ppq_np);
  return r;
}

std::optional<double> compute_pq(const MetricTally& tally, const TaxonomyConfig& taxonomy) {
  return compute_report(tally, taxonomy).pq;
}

std::optional<double> compute_partpq(const MetricTally& tally, const TaxonomyConfig& taxonomy) {
  return compute_report(tally, taxonomy).partpq;
}

SwapMode parse_swap_mode(const std::string& text) {
  if (text == "panoptic_gt") return SwapMode::kPanopticGt;
  if (text == "part_gt") return SwapMode::kPartGt;
  if (text == "both") return SwapMode::kBoth;
  throw ConfigError("unknown swap mode '" + text + "' (panoptic_gt, part_gt, both)");
}

std::string swap_mode_name(SwapMode mode) {
  switch (mode) {
    case SwapMode::kPanopticGt:
      return "panoptic_gt";
    case SwapMode::kPartGt:
      return "part_gt";
    case SwapMode::kBoth:
      return "both";
  }
  return "both";
}

PanopticPartMap swap_planes(const PanopticPartMap& pred, const PanopticPartMap& gt, SwapMode mode,
                            const TaxonomyConfig& taxonomy, const LabelRaster* dense_parts) {
  check_dims(pred, gt);
  if (mode == SwapMode::kBoth) return gt;
  PanopticPartMap out = mode == SwapMode::kPanopticGt ? gt : pred;
  const LabelRaster& source =
      mode == SwapMode::kPartGt ? gt.part_class : (dense_parts ? *dense_parts : pred.part_class);
  if (source.height() != out.height() || source.width() != out.width()) {
    throw std::invalid_argument("dense part plane has the wrong size");
  }
  for (std::size_t i = 0; i < out.part_class.size(); ++i) {
    const int c = out.scene_class[i];
    const int p = source[i];
    out.part_class[i] = taxonomy.has_parts(c) && taxonomy.part_allowed(c, p) ? p : kVoidId;
  }
  return out;
}

MetricTally oracle_swap_tally(const PanopticPartMap& pred, const PanopticPartMap& gt,
                              SwapMode mode, const TaxonomyConfig& taxonomy,
                              const LabelRaster* dense_parts) {
  return match_segments(swap_planes(pred, gt, mode, taxonomy, dense_parts), gt, taxonomy);
}

MetricReport oracle_swap_eval(const PanopticPartMap& pred, const PanopticPartMap& gt,
                              SwapMode mode, const TaxonomyConfig& taxonomy,
                              const LabelRaster* dense_parts) {
  return compute_report(oracle_swap_tally(pred, gt, mode, taxonomy, dense_parts), taxonomy);
}

std::string format_report_table(const MetricReport& report) {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("n/a");
    std::snprintf(buf, sizeof buf, "%.1f", *v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "PQ " << cell(report.pq) << "  PartPQ " << cell(report.partpq) << "  (P "
     << cell(report.partpq_p) << ", NP " << cell(report.partpq_np) << ")\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %5s %4s %4s %4s %7s %7s %7s %7s\n", "class", "parts",
                "TP", "FP", "FN", "PQ", "SQ", "RQ", "PartPQ");
  os << line;
  for (const ClassResult& c : report.classes) {
    std::snprintf(line, sizeof line, "%-12s %5s %4d %4d %4d %7.1f %7.1f %7.1f %7.1f\n",
                  c.name.c_str(), c.has_parts ? "yes" : "no", c.tp, c.fp, c.fn, c.pq, c.sq, c.rq,
                  c.partpq);
    os << line;
  }
  return os.str();
}

}  // namespace ppf
