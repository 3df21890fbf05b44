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

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "ppf/merger.h"
#include "ppf/raster.h"
#include "ppf/rng.h"
#include "ppf/taxonomy.h"
#include "support.h"

using namespace ppf;
using testing::random_tensor;

namespace {

// Thing {1, 2}, stuff {3, 4}; class 1 has parts {1, 2}, class 4 has part {3}.
TaxonomyConfig merge_taxonomy() {
  TaxonomyConfig t;
  t.thing_classes = {1, 2};
  t.stuff_classes = {3, 4};
  t.part_classes = {1, 2, 3};
  t.parts_of[1] = {1, 2};
  t.parts_of[4] = {3};
  return validate_taxonomy(t);
}

MergeInput random_input(int things, int h, int w, const TaxonomyConfig& tax, Rng& rng,
                        double scale = 4.0) {
  MergeInput in;
  in.thing_masks = random_tensor({things, h, w}, rng, scale);
  in.thing_logits = random_tensor({things, static_cast<int>(tax.thing_classes.size()) + 1}, rng,
                                  scale);
  in.stuff_masks = random_tensor({static_cast<int>(tax.stuff_classes.size()), h, w}, rng, scale);
  in.part_masks = random_tensor({static_cast<int>(tax.part_classes.size()), h, w}, rng, scale);
  return in;
}

// Either blobs of saturated values or raw noise laced with non-finite values.
MergeInput adversarial_input(const TaxonomyConfig& tax, Rng& rng) {
  const int h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 12);
  MergeInput in = random_input(rng.uniform_int(0, 6), h, w, tax, rng, rng.uniform(0.1, 50.0));
  const double nasty[] = {std::numeric_limits<double>::quiet_NaN(), INFINITY, -INFINITY, 1e300,
                          -1e300, 0.0};
  for (Tensor* t : {&in.thing_masks, &in.thing_logits, &in.stuff_masks, &in.part_masks}) {
    for (double& v : t->storage()) {
      if (rng.uniform() < 0.1) v = nasty[rng.uniform_int(0, 5)];
    }
  }
  return in;
}

}  // namespace

TEST_CASE("one confident thing over one stuff class gives two segments") {
  TaxonomyConfig tax;
  tax.thing_classes = {1};
  tax.stuff_classes = {2};
  tax = validate_taxonomy(tax);
  MergeInput in;
  in.thing_masks = Tensor({1, 6, 6}, -20.0);
  for (int y = 1; y < 4; ++y) {
    for (int x = 1; x < 4; ++x) in.thing_masks.at(0, y, x) = 20.0;
  }
  in.thing_logits = Tensor({1, 2}, std::vector<double>{20.0, -20.0});
  in.stuff_masks = Tensor({1, 6, 6}, 1.0);
  in.part_masks = Tensor({0, 6, 6});
  const PanopticPartMap out = merge(in, tax, MergeThresholds{});
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      const bool inside = y >= 1 && y < 4 && x >= 1 && x < 4;
      CHECK(out.scene_class.at(y, x) == (inside ? 1 : 2));
      CHECK(out.instance_id.at(y, x) == (inside ? 1 : 0));
      CHECK(out.part_class.at(y, x) == kVoidId);
    }
  }
}

TEST_CASE("a duplicate lower-scored mask is dropped") {
  const TaxonomyConfig tax = merge_taxonomy();
  MergeInput in;
  in.thing_masks = Tensor({2, 4, 4}, 20.0);
  in.thing_logits = Tensor({2, 3}, std::vector<double>{1.0, -9.0, -9.0, 3.0, -9.0, -9.0});
  in.stuff_masks = Tensor({2, 4, 4});
  in.part_masks = Tensor({3, 4, 4});
  const PanopticResult r = merge_panoptic(in, tax, MergeThresholds{});
  REQUIRE(r.segments.size() == 1);
  CHECK(r.segments[0].query == 1);
  CHECK(r.segments[0].instance_id == 1);
  for (int v : r.instance_id.storage()) CHECK(v == 1);
}

TEST_CASE("low scores and small stuff regions are removed") {
  const TaxonomyConfig tax = merge_taxonomy();
  MergeInput in;
  in.thing_masks = Tensor({1, 4, 4}, 20.0);
  in.thing_logits = Tensor({1, 3}, std::vector<double>{-3.0, -3.0, 9.0});
  in.stuff_masks = Tensor({2, 4, 4});
  in.stuff_masks.at(1, 0, 0) = 5.0;  // a one-pixel stuff region
  in.part_masks = Tensor({3, 4, 4});
  MergeThresholds th;
  th.min_stuff_area = 2;
  const PanopticPartMap out = merge(in, tax, th);
  CHECK(out.scene_class.at(0, 0) == kVoidId);
  CHECK(out.scene_class.at(2, 2) == 3);
  for (int v : out.instance_id.storage()) CHECK(v == 0);
}

TEST_CASE("panoptic merge matches the per-pixel reference") {
  Rng rng(1);
  const TaxonomyConfig tax = merge_taxonomy();
  for (int trial = 0; trial < 60; ++trial) {
    const MergeInput in = random_input(5, 10, 9, tax, rng);
    MergeThresholds th;
    th.min_stuff_area = rng.uniform_int(0, 20);
    th.overlap_keep = rng.uniform(0.0, 1.0);
    th.score = rng.uniform(0.0, 0.6);
    CHECK(merge(in, tax, th) == oracle::reference_merge(in, tax, th));
  }
}

TEST_CASE("part merging follows the copy and void rules") {
  Rng rng(2);
  const TaxonomyConfig tax = merge_taxonomy();
  for (int trial = 0; trial < 30; ++trial) {
    const MergeInput in = random_input(4, 7, 8, tax, rng);
    const PanopticResult pan = merge_panoptic(in, tax, MergeThresholds{});
    const PanopticPartMap out = merge_parts(pan, in.part_masks, tax);
    CHECK(out.scene_class == pan.scene_class);
    CHECK(out.instance_id == pan.instance_id);
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 8; ++x) {
        const int c = out.scene_class.at(y, x);
        int best = 0;
        for (int p = 1; p < 3; ++p) {
          if (in.part_masks.at(p, y, x) > in.part_masks.at(best, y, x)) best = p;
        }
        const int winner = tax.part_classes[best];
        const int expected = tax.has_parts(c) && tax.part_allowed(c, winner) ? winner : kVoidId;
        CHECK(out.part_class.at(y, x) == expected);
      }
    }
  }
}

TEST_CASE("an incompatible part winner becomes void") {
  const TaxonomyConfig tax = merge_taxonomy();
  PanopticResult pan;
  pan.scene_class = LabelRaster(1, 2, 1);
  pan.instance_id = LabelRaster(1, 2, 1);
  Tensor parts({3, 1, 2});
  parts.at(0, 0, 0) = 2.0;  // part 1 is allowed for class 1
  parts.at(2, 0, 1) = 2.0;  // part 3 is not
  const PanopticPartMap out = merge_parts(pan, parts, tax);
  CHECK(out.part_class.at(0, 0) == 1);
  CHECK(out.part_class.at(0, 1) == kVoidId);
}

TEST_CASE("without part classes the part plane stays void") {
  TaxonomyConfig tax;
  tax.thing_classes = {1};
  tax.stuff_classes = {2};
  tax = validate_taxonomy(tax);
  Rng rng(3);
  const MergeInput in = random_input(3, 5, 5, tax, rng);
  const PanopticResult pan = merge_panoptic(in, tax, MergeThresholds{});
  const PanopticPartMap out = merge_parts(pan, in.part_masks, tax);
  CHECK(out.scene_class == pan.scene_class);
  CHECK(out.instance_id == pan.instance_id);
  for (int v : out.part_class.storage()) CHECK(v == kVoidId);
  const LabelRaster arg = part_argmax(in.part_masks, 5, 5);
  for (int v : arg.storage()) CHECK(v == -1);
}

TEST_CASE("adversarial predictions always merge into valid maps") {
  Rng rng(4);
  const TaxonomyConfig tax = merge_taxonomy();
  for (int trial = 0; trial < 100; ++trial) {
    const MergeInput in = adversarial_input(tax, rng);
    MergeThresholds th;
    th.min_stuff_area = rng.uniform_int(0, 8);
    const PanopticResult pan = merge_panoptic(in, tax, th);
    const PanopticPartMap out = merge_parts(pan, in.part_masks, tax);
    CHECK(map_violations(out, tax).empty());
    CHECK(out.scene_class == pan.scene_class);
    CHECK(out.instance_id == pan.instance_id);
    // Instance ids are contiguous from 1 in paste order.
    std::set<int> ids;
    for (int v : out.instance_id.storage()) {
      if (v > 0) ids.insert(v);
    }
    int expect = 1;
    for (int id : ids) CHECK(id == expect++);
    CHECK(ids.size() == pan.segments.size());
    for (std::size_t i = 0; i < pan.segments.size(); ++i) {
      CHECK(pan.segments[i].instance_id == static_cast<int>(i) + 1);
      CHECK(tax.is_thing(pan.segments[i].scene_class));
    }
    for (std::size_t p = 0; p < out.scene_class.size(); ++p) {
      if (out.instance_id[p] > 0) CHECK(tax.is_thing(out.scene_class[p]));
      if (out.part_class[p] != kVoidId) {
        CHECK(tax.part_allowed(out.scene_class[p], out.part_class[p]));
      }
    }
  }
}

TEST_CASE("thing scores combine class and mask confidence") {
  MergeInput in;
  in.thing_masks = Tensor({2, 1, 2}, std::vector<double>{0.0, 2.0, -5.0, -6.0});
  in.thing_logits = Tensor({2, 3}, std::vector<double>{-1.0, 1.0, 4.0, 0.0, 0.0, 0.0});
  const ThingScore s = score_thing(in, 0, 0.5);
  CHECK(s.class_index == 1);
  const double sig1 = 1.0 / (1.0 + std::exp(-1.0)), sig2 = 1.0 / (1.0 + std::exp(-2.0));
  CHECK(s.score == doctest::Approx(sig1 * sig2));
  CHECK(score_thing(in, 1, 0.5).score == 0.0);
}
