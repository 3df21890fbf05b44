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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "ppf/metrics.h"
#include "ppf/raster.h"
#include "ppf/rng.h"
#include "ppf/taxonomy.h"
#include "support.h"

using namespace ppf;

namespace {

// Overwrites a few rectangles of `map` with fresh segments, keeping every
// map invariant.
PanopticPartMap perturb(const PanopticPartMap& map, const TaxonomyConfig& tax, Rng& rng,
                        int edits) {
  PanopticPartMap out = map;
  const std::vector<int> classes = tax.scene_classes();
  int next_instance = 1;
  for (int v : out.instance_id.storage()) next_instance = std::max(next_instance, v + 1);
  for (int e = 0; e < edits; ++e) {
    const int c = rng.uniform() < 0.15 ? kVoidId
                                        : classes[rng.uniform_int(0, static_cast<int>(classes.size()) - 1)];
    const int inst = tax.is_thing(c) ? next_instance++ : 0;
    const int h = rng.uniform_int(1, 10), w = rng.uniform_int(1, 10);
    const int top = rng.uniform_int(0, map.height() - 1), left = rng.uniform_int(0, map.width() - 1);
    std::vector<int> allowed;
    if (tax.parts_of.count(c)) allowed.assign(tax.parts_of.at(c).begin(), tax.parts_of.at(c).end());
    for (int y = top; y < std::min(map.height(), top + h); ++y) {
      for (int x = left; x < std::min(map.width(), left + w); ++x) {
        out.scene_class.at(y, x) = c;
        out.instance_id.at(y, x) = inst;
        out.part_class.at(y, x) =
            allowed.empty() || rng.uniform() < 0.1
                ? kVoidId
                : allowed[rng.uniform_int(0, static_cast<int>(allowed.size()) - 1)];
      }
    }
  }
  // Relabel part pixels inside surviving segments now and then.
  for (std::size_t i = 0; i < out.part_class.size(); ++i) {
    const int c = out.scene_class[i];
    if (tax.has_parts(c) && rng.uniform() < 0.05) {
      const auto& allowed = tax.parts_of.at(c);
      out.part_class[i] = *std::next(allowed.begin(), rng.uniform_int(0, static_cast<int>(allowed.size()) - 1));
    }
  }
  return out;
}

std::map<int, double> class_partpq(const MetricReport& r) {
  std::map<int, double> out;
  for (const ClassResult& c : r.classes) out[c.scene_class] = c.partpq;
  return out;
}

}  // namespace

TEST_CASE("identical maps give perfect scores") {
  Rng rng(1);
  const TaxonomyConfig tax = testing::small_taxonomy();
  const PanopticPartMap m = testing::random_map(16, 16, tax, rng);
  const MetricTally t = match_segments(m, m, tax);
  for (const auto& [cls, ct] : t.classes) {
    CHECK(ct.fp == 0);
    CHECK(ct.fn == 0);
    for (double v : ct.iou) CHECK(v == 1.0);
  }
  const MetricReport r = compute_report(t, tax);
  CHECK(r.pq == 100.0);
  CHECK(r.partpq == 100.0);
}

TEST_CASE("an IoU of exactly one half is not a match") {
  TaxonomyConfig tax;
  tax.thing_classes = {1};
  tax.stuff_classes = {3};
  tax = validate_taxonomy(tax);
  PanopticPartMap gt(1, 4), pred(1, 4);
  for (int x = 0; x < 4; ++x) {
    gt.scene_class.at(0, x) = 1;
    gt.instance_id.at(0, x) = 1;
    pred.scene_class.at(0, x) = x < 2 ? 1 : 3;
    pred.instance_id.at(0, x) = x < 2 ? 1 : 0;
  }
  const MetricTally t = match_segments(pred, gt, tax);
  const ClassTally& c = t.classes.at(1);
  CHECK(c.tp() == 0);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
}

TEST_CASE("part IoU averages over parts seen in either segment") {
  const TaxonomyConfig tax = testing::small_taxonomy();
  PanopticPartMap gt(2, 4);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) {
      gt.scene_class.at(y, x) = 1;
      gt.instance_id.at(y, x) = 1;
      gt.part_class.at(y, x) = x < 2 ? 1 : 2;
    }
  }
  PanopticPartMap pred = gt;
  for (int& p : pred.part_class.storage()) p = 1;
  const auto ps = extract_segments(pred, tax), gs = extract_segments(gt, tax);
  REQUIRE(ps.size() == 1);
  CHECK(compute_iou_p(ps[0], gs[0], pred, gt, tax) == doctest::Approx(0.25));
  CHECK(compute_iou_p(gs[0], gs[0], gt, gt, tax) == 1.0);
  // No-part classes fall back to instance IoU.
  PanopticPartMap stuff = gt;
  for (int& c : stuff.scene_class.storage()) c = 2;
  for (int& p : stuff.part_class.storage()) p = 0;
  const auto ss = extract_segments(stuff, tax);
  CHECK(compute_iou_p(ss[0], ss[0], stuff, stuff, tax) == 1.0);
}

TEST_CASE("the worked PartPQ example") {
  const TaxonomyConfig tax = testing::small_taxonomy();
  MetricTally t;
  ClassTally& c = t.classes[1];
  c.iou = {0.9};
  c.iou_p = {0.75};
  c.fp = 1;
  c.fn = 1;
  CHECK(compute_partpq(t, tax) == 37.5);
  CHECK(*compute_pq(t, tax) == doctest::Approx(45.0));
  CHECK_FALSE(compute_partpq(MetricTally{}, tax).has_value());
}

TEST_CASE("metrics agree with the brute-force evaluator") {
  Rng rng(2);
  const TaxonomyConfig tax = testing::small_taxonomy();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PanopticPartMap> preds, gts;
    MetricTally tally;
    const int images = rng.uniform_int(1, 3);
    for (int i = 0; i < images; ++i) {
      gts.push_back(testing::random_map(32, 32, tax, rng, 8, 0.03));
      preds.push_back(perturb(gts.back(), tax, rng, rng.uniform_int(0, 5)));
      tally += match_segments(preds.back(), gts.back(), tax);
    }
    const oracle::PqResult expected = oracle::brute_force_pq(preds, gts, tax);
    const MetricReport r = compute_report(tally, tax);
    REQUIRE(r.pq.has_value() == expected.pq.has_value());
    if (expected.pq) {
      CHECK(std::abs(*r.pq - *expected.pq) < 1e-9);
      CHECK(std::abs(*r.partpq - *expected.partpq) < 1e-9);
    }
    for (const ClassResult& c : r.classes) {
      CHECK(std::abs(c.pq - expected.class_pq.at(c.scene_class)) < 1e-9);
      CHECK(std::abs(c.partpq - expected.class_partpq.at(c.scene_class)) < 1e-9);
      CHECK(c.partpq >= 0.0);
      CHECK(c.partpq <= 100.0);
    }
  }
}

TEST_CASE("PartPQ equals PQ when no class has parts") {
  Rng rng(3);
  TaxonomyConfig tax;
  tax.thing_classes = {1, 2};
  tax.stuff_classes = {3, 4};
  tax = validate_taxonomy(tax);
  for (int trial = 0; trial < 30; ++trial) {
    const PanopticPartMap gt = testing::random_map(24, 24, tax, rng);
    const PanopticPartMap pred = perturb(gt, tax, rng, 4);
    const MetricReport r = compute_report(match_segments(pred, gt, tax), tax);
    CHECK(r.partpq == r.pq);
    for (const ClassResult& c : r.classes) CHECK(c.partpq == c.pq);
  }
}

TEST_CASE("metrics ignore how prediction instances are numbered") {
  Rng rng(4);
  const TaxonomyConfig tax = testing::small_taxonomy();
  for (int trial = 0; trial < 20; ++trial) {
    const PanopticPartMap gt = testing::random_map(20, 20, tax, rng);
    const PanopticPartMap pred = perturb(gt, tax, rng, 3);
    std::vector<int> ids(200);
    std::iota(ids.begin(), ids.end(), 1);
    for (int i = 199; i > 0; --i) std::swap(ids[i], ids[rng.uniform_int(0, i)]);
    PanopticPartMap renamed = pred;
    for (int& v : renamed.instance_id.storage()) {
      if (v > 0) v = ids[v - 1];
    }
    const MetricReport a = compute_report(match_segments(pred, gt, tax), tax);
    const MetricReport b = compute_report(match_segments(renamed, gt, tax), tax);
    CHECK(a.pq == b.pq);
    CHECK(a.partpq == b.partpq);
  }
}

TEST_CASE("extra false positives never raise PartPQ") {
  Rng rng(5);
  const TaxonomyConfig tax = testing::small_taxonomy();
  for (int trial = 0; trial < 20; ++trial) {
    const PanopticPartMap gt = testing::random_map(20, 20, tax, rng);
    MetricTally t = match_segments(perturb(gt, tax, rng, 3), gt, tax);
    const auto before = class_partpq(compute_report(t, tax));
    for (auto& [cls, ct] : t.classes) ct.fp += 1;
    const auto after = class_partpq(compute_report(t, tax));
    for (const auto& [cls, v] : before) CHECK(after.at(cls) <= v);
  }
}

TEST_CASE("predictions lying mostly on void are not false positives") {
  const TaxonomyConfig tax = testing::small_taxonomy();
  PanopticPartMap gt(2, 4), pred(2, 4);
  for (int i = 0; i < 8; ++i) {
    gt.scene_class[i] = i < 4 ? 3 : kVoidId;
    pred.scene_class[i] = 3;
  }
  pred.scene_class.at(1, 1) = 2;
  pred.instance_id.at(1, 1) = 1;
  pred.scene_class.at(1, 2) = 2;
  pred.instance_id.at(1, 2) = 1;
  const MetricTally t = match_segments(pred, gt, tax);
  CHECK(t.classes.at(3).tp() == 1);
  CHECK(t.classes.at(3).iou[0] == 1.0);
  CHECK((!t.classes.count(2) || t.classes.at(2).fp == 0));
}

TEST_CASE("tallies form a commutative monoid") {
  Rng rng(6);
  const TaxonomyConfig tax = testing::small_taxonomy();
  std::vector<MetricTally> parts;
  for (int i = 0; i < 3; ++i) {
    const PanopticPartMap gt = testing::random_map(16, 16, tax, rng);
    parts.push_back(match_segments(perturb(gt, tax, rng, 3), gt, tax));
  }
  const MetricReport left = compute_report((parts[0] + parts[1]) + parts[2], tax);
  const MetricReport right = compute_report(parts[0] + (parts[1] + parts[2]), tax);
  const MetricReport swapped = compute_report(parts[2] + parts[0] + parts[1], tax);
  CHECK(*left.partpq == doctest::Approx(*right.partpq).epsilon(1e-12));
  CHECK(*left.pq == doctest::Approx(*swapped.pq).epsilon(1e-12));
  const MetricReport identity = compute_report(parts[0] + MetricTally{}, tax);
  CHECK(identity.pq == compute_report(parts[0], tax).pq);
}

TEST_CASE("swapping in both ground-truth planes is perfect") {
  Rng rng(7);
  const TaxonomyConfig tax = testing::small_taxonomy();
  for (int trial = 0; trial < 10; ++trial) {
    const PanopticPartMap gt = testing::random_map(16, 16, tax, rng);
    const PanopticPartMap pred = perturb(gt, tax, rng, 6);
    CHECK(oracle_swap_eval(pred, gt, SwapMode::kBoth, tax).partpq == 100.0);
  }
}

TEST_CASE("panoptic swap with perfect parts is perfect") {
  Rng rng(8);
  const TaxonomyConfig tax = testing::small_taxonomy();
  const PanopticPartMap gt = testing::random_map(16, 16, tax, rng);
  PanopticPartMap pred = perturb(gt, tax, rng, 6);
  pred.part_class = gt.part_class;
  CHECK(oracle_swap_eval(pred, gt, SwapMode::kPanopticGt, tax).partpq == 100.0);
}

TEST_CASE("part swap equals evaluating the hand-swapped map") {
  Rng rng(9);
  const TaxonomyConfig tax = testing::small_taxonomy();
  const PanopticPartMap gt = testing::random_map(16, 16, tax, rng);
  const PanopticPartMap pred = perturb(gt, tax, rng, 5);
  PanopticPartMap swapped = pred;
  for (std::size_t i = 0; i < swapped.part_class.size(); ++i) {
    const int c = swapped.scene_class[i], p = gt.part_class[i];
    swapped.part_class[i] = tax.part_allowed(c, p) ? p : kVoidId;
  }
  const MetricReport expected = compute_report(match_segments(swapped, gt, tax), tax);
  const MetricReport actual = oracle_swap_eval(pred, gt, SwapMode::kPartGt, tax);
  CHECK(actual.pq == expected.pq);
  CHECK(actual.partpq == expected.partpq);
}

TEST_CASE("swap mode names round-trip") {
  for (SwapMode m : {SwapMode::kPanopticGt, SwapMode::kPartGt, SwapMode::kBoth}) {
    CHECK(parse_swap_mode(swap_mode_name(m)) == m);
  }
  CHECK(swap_mode_name(SwapMode::kPanopticGt) == "panoptic_gt");
  CHECK_THROWS(parse_swap_mode("neither"));
}

TEST_CASE("mismatched dimensions are rejected") {
  const TaxonomyConfig tax = testing::small_taxonomy();
  CHECK_THROWS(match_segments(PanopticPartMap(2, 2), PanopticPartMap(2, 3), tax));
}
