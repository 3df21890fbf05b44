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

#include "ppf/merger.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ppf {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// NaN logits are treated as the lowest possible evidence.
double sane(double x) { return std::isnan(x) ? -INFINITY : x; }

void check_input(const MergeInput& in, const TaxonomyConfig& taxonomy) {
  auto rows = [](const Tensor& t) { return t.rank() == 0 ? 0 : t.dim(0); };
  if (in.thing_masks.rank() != 3 || in.stuff_masks.rank() != 3 || in.part_masks.rank() != 3) {
    throw std::invalid_argument("merge: mask tensors must be N x H x W");
  }
  if (rows(in.stuff_masks) != static_cast<int>(taxonomy.stuff_classes.size()) ||
      rows(in.part_masks) != static_cast<int>(taxonomy.part_classes.size())) {
    throw std::invalid_argument("merge: stuff/part rows do not match the taxonomy");
  }
  if (in.thing_logits.rank() != 2 || in.thing_logits.dim(0) != rows(in.thing_masks) ||
      in.thing_logits.dim(1) != static_cast<int>(taxonomy.thing_classes.size()) + 1) {
    throw std::invalid_argument("merge: thing class logits have the wrong shape");
  }
  for (const Tensor* t : {&in.stuff_masks, &in.part_masks}) {
    if (t->dim(1) != in.thing_masks.dim(1) || t->dim(2) != in.thing_masks.dim(2)) {
      throw std::invalid_argument("merge: mask resolutions differ");
    }
  }
}

}  // namespace

ThingScore score_thing(const MergeInput& in, int row, double mask_threshold) {
  ThingScore s;
  const int classes = in.thing_logits.dim(1) - 1;
  if (classes <= 0) return s;
  double best = -1.0;
  for (int c = 0; c < classes; ++c) {
    const double p = sigmoid(sane(in.thing_logits.at(row, c)));
    if (p > best) {
      best = p;
      s.class_index = c;
    }
  }
  const std::size_t plane = static_cast<std::size_t>(in.thing_masks.dim(1)) * in.thing_masks.dim(2);
  const double* x = in.thing_masks.data() + row * plane;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double p = sigmoid(sane(x[i]));
    if (p > mask_threshold) {
      sum += p;
      ++count;
    }
  }
  s.score = count == 0 ? 0.0 : best * sum / static_cast<double>(count);
  return s;
}

PanopticResult merge_panoptic(const MergeInput& in, const TaxonomyConfig& taxonomy,
                              const MergeThresholds& th) {
  check_input(in, taxonomy);
  const int h = in.thing_masks.dim(1), w = in.thing_masks.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  PanopticResult out{LabelRaster(h, w, kVoidId), LabelRaster(h, w, 0), {}};

  const int n = in.thing_masks.dim(0);
  std::vector<ThingScore> scores(n);
  for (int k = 0; k < n; ++k) scores[k] = score_thing(in, k, th.mask);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a].score > scores[b].score; });

  std::vector<char> claimed(plane, 0);
  std::vector<std::size_t> pixels;
  for (int k : order) {
    if (!(scores[k].score >= th.score)) continue;
    const double* x = in.thing_masks.data() + k * plane;
    pixels.clear();
    std::size_t mask_area = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (sigmoid(sane(x[i])) > th.mask) {
        ++mask_area;
        if (!claimed[i]) pixels.push_back(i);
      }
    }
    if (pixels.empty() ||
        static_cast<double>(pixels.size()) < th.overlap_keep * static_cast<double>(mask_area)) {
      continue;
    }
    const int id = static_cast<int>(out.segments.size()) + 1;
    const int cls = taxonomy.thing_classes[scores[k].class_index];
    for (std::size_t i : pixels) {
      claimed[i] = 1;
      out.scene_class[i] = cls;
      out.instance_id[i] = id;
    }
    out.segments.push_back({k, cls, id, scores[k].score});
  }

  const int ns = in.stuff_masks.dim(0);
  if (ns == 0) return out;
  std::vector<int> choice(plane, -1);
  std::vector<std::size_t> area(ns, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    if (claimed[i]) continue;
    int best = 0;
    double best_v = sane(in.stuff_masks[i]);
    for (int s = 1; s < ns; ++s) {
      const double v = sane(in.stuff_masks[s * plane + i]);
      if (v > best_v) {
        best_v = v;
        best = s;
      }
    }
    choice[i] = best;
    ++area[best];
  }
  for (std::size_t i = 0; i < plane; ++i) {
    const int s = choice[i];
    if (s >= 0 && area[s] >= static_cast<std::size_t>(std::max(0, th.min_stuff_area))) {
      out.scene_class[i] = taxonomy.stuff_classes[s];
    }
  }
  return out;
}

LabelRaster part_argmax(const Tensor& part_masks, int height, int width) {
  LabelRaster arg(height, width, -1);
  const int np = part_masks.rank() == 3 ? part_masks.dim(0) : 0;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (np == 0) return arg;
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    double best_v = sane(part_masks[i]);
    for (int p = 1; p < np; ++p) {
      const double v = sane(part_masks[p * plane + i]);
      if (v > best_v) {
        best_v = v;
        best = p;
      }
    }
    arg[i] = best;
  }
  return arg;
}

PanopticPartMap merge_parts(const PanopticResult& panoptic, const Tensor& part_masks,
                            const TaxonomyConfig& taxonomy) {
  const int h = panoptic.scene_class.height(), w = panoptic.scene_class.width();
  PanopticPartMap map;
  map.scene_class = panoptic.scene_class;
  map.instance_id = panoptic.instance_id;
  map.part_class = LabelRaster(h, w, kVoidId);
  if (part_masks.rank() == 3 && part_masks.dim(0) > 0 &&
      (part_masks.dim(1) != h || part_masks.dim(2) != w)) {
    throw std::invalid_argument("merge_parts: part masks do not match the panoptic raster");
  }
  const LabelRaster arg = part_argmax(part_masks, h, w);
  for (std::size_t i = 0; i < map.part_class.size(); ++i) {
    const int c = map.scene_class[i];
    if (arg[i] < 0 || !taxonomy.has_parts(c)) continue;
    const int part = taxonomy.part_classes[arg[i]];
    if (taxonomy.part_allowed(c, part)) map.part_class[i] = part;
  }
  return map;
}

PanopticPartMap merge(const MergeInput& in, const TaxonomyConfig& taxonomy,
                      const MergeThresholds& thresholds) {
  return merge_parts(merge_panoptic(in, taxonomy, thresholds), in.part_masks, taxonomy);
}

}  // namespace ppf
