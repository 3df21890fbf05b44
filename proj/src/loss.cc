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

#include "ppf/loss.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "ppf/errors.h"

namespace ppf {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

bool clamped(double p) { return p < kProbabilityEpsilon || p > 1.0 - kProbabilityEpsilon; }

std::size_t count_valid(const BinaryMask& valid) {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

ag::Var zero_scalar() { return ag::constant(Tensor({1}, 0.0)); }

}  // namespace

double focal_loss(double p, int y, const FocalParams& f) {
  p = clamp_probability(p);
  if (y == 1) return -f.alpha * std::pow(1.0 - p, f.gamma) * std::log(p);
  return -(1.0 - f.alpha) * std::pow(p, f.gamma) * std::log(1.0 - p);
}

double focal_loss_grad(double p, int y, const FocalParams& f) {
  if (clamped(p)) return 0.0;
  if (y == 1) {
    const double q = 1.0 - p;
    const double lead = f.gamma == 0.0 ? 0.0 : f.gamma * std::pow(q, f.gamma - 1.0) * std::log(p);
    return f.alpha * (lead - std::pow(q, f.gamma) / p);
  }
  const double lead = f.gamma == 0.0 ? 0.0 : f.gamma * std::pow(p, f.gamma - 1.0) * std::log(1.0 - p);
  return -(1.0 - f.alpha) * (lead - std::pow(p, f.gamma) / (1.0 - p));
}

double dice_loss(std::span<const double> p, std::span<const std::uint8_t> g) {
  if (p.size() != g.size()) throw std::invalid_argument("dice_loss: size mismatch");
  double pg = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    pg += p[i] * g[i];
    pp += p[i] * p[i];
    gg += g[i];
  }
  return 1.0 - (2.0 * pg + kDiceEpsilon) / (pp + gg + kDiceEpsilon);
}

std::vector<int> hungarian_match(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = n == 0 ? 0 : static_cast<int>(cost[0].size());
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != m) throw std::invalid_argument("ragged cost matrix");
    for (double c : row) {
      if (!std::isfinite(c)) throw NumericalError("non-finite matching cost");
    }
  }
  if (m == 0) return {};
  if (n < m) throw std::invalid_argument("fewer rows than columns in matching");
  // Potentials method on the transposed problem: columns are assigned
  // one at a time to rows.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= m; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[j - 1][i0 - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(m, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] != 0) result[p[j] - 1] = j - 1;
  }
  return result;
}

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& assignment) {
  double total = 0.0;
  for (std::size_t j = 0; j < assignment.size(); ++j) total += cost[assignment[j]][j];
  return total;
}

GroundTruth build_ground_truth(const PanopticPartMap& map, const TaxonomyConfig& taxonomy) {
  GroundTruth gt;
  gt.height = map.height();
  gt.width = map.width();
  const std::size_t n = map.scene_class.size();
  gt.valid.assign(n, 0);
  gt.stuff.assign(taxonomy.stuff_classes.size(), {});
  gt.parts.assign(taxonomy.part_classes.size(), {});
  std::map<std::pair<int, int>, int> thing_of;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = map.scene_class[i];
    if (c == kVoidId) continue;
    if (taxonomy.is_thing(c)) {
      const int inst = map.instance_id[i];
      if (inst <= 0) continue;  // unlabelled instance: ignored
      auto [it, inserted] = thing_of.try_emplace({c, inst}, static_cast<int>(gt.things.size()));
      if (inserted) {
        gt.things.push_back({taxonomy.thing_index(c), inst, BinaryMask(n, 0)});
      }
      gt.things[it->second].mask[i] = 1;
    } else if (taxonomy.is_stuff(c)) {
      BinaryMask& m = gt.stuff[taxonomy.stuff_index(c)];
      if (m.empty()) m.assign(n, 0);
      m[i] = 1;
    } else {
      continue;
    }
    gt.valid[i] = 1;
    const int part_index = taxonomy.part_index(map.part_class[i]);
    if (map.part_class[i] != kVoidId && part_index >= 0) {
      BinaryMask& m = gt.parts[part_index];
      if (m.empty()) m.assign(n, 0);
      m[i] = 1;
    }
  }
  return gt;
}

ag::Var mask_pair_loss(const ag::Var& logits, std::span<const MaskPair> pairs,
                       const BinaryMask& valid, const FocalParams& focal) {
  if (pairs.empty()) return zero_scalar();
  if (logits.value().rank() != 3) throw std::invalid_argument("mask_pair_loss: rank 3 logits");
  const std::size_t plane = static_cast<std::size_t>(logits.dim(1)) * logits.dim(2);
  if (valid.size() != plane) throw std::invalid_argument("mask_pair_loss: valid mask size");
  const double valid_count = std::max<double>(1.0, static_cast<double>(count_valid(valid)));
  const double pair_scale = 1.0 / static_cast<double>(pairs.size());
  const std::vector<MaskPair> kept(pairs.begin(), pairs.end());
  double value = 0.0;
  for (const MaskPair& pr : kept) {
    if (pr.row < 0 || pr.row >= logits.dim(0) || pr.mask->size() != plane) {
      throw std::invalid_argument("mask_pair_loss: bad pair");
    }
    const double* x = logits.value().data() + pr.row * plane;
    const BinaryMask& g = *pr.mask;
    double fl = 0.0, pg = 0.0, pp = 0.0, gg = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!valid[i]) continue;
      const double p = sigmoid(x[i]);
      fl += focal_loss(p, g[i], focal);
      pg += p * g[i];
      pp += p * p;
      gg += g[i];
    }
    value += fl / valid_count + 1.0 - (2.0 * pg + kDiceEpsilon) / (pp + gg + kDiceEpsilon);
  }
  Tensor out({1}, value * pair_scale);
  return ag::make_op(std::move(out), {logits},
                     [kept, valid, focal, plane, valid_count, pair_scale](ag::Node& self) {
                       const double up = self.grad[0] * pair_scale;
                       ag::Node& in = *self.inputs[0];
                       Tensor& gx = in.grad_buffer();
                       for (const MaskPair& pr : kept) {
                         const double* x = in.value.data() + pr.row * plane;
                         double* dx = gx.data() + pr.row * plane;
                         const BinaryMask& g = *pr.mask;
                         std::vector<double> p(plane, 0.0);
                         double pg = 0.0, pp = 0.0, gg = 0.0;
                         for (std::size_t i = 0; i < plane; ++i) {
                           if (!valid[i]) continue;
                           p[i] = sigmoid(x[i]);
                           pg += p[i] * g[i];
                           pp += p[i] * p[i];
                           gg += g[i];
                         }
                         const double num = 2.0 * pg + kDiceEpsilon;
                         const double den = pp + gg + kDiceEpsilon;
                         for (std::size_t i = 0; i < plane; ++i) {
                           if (!valid[i]) continue;
                           const double d_dice = -(2.0 * g[i] * den - num * 2.0 * p[i]) / (den * den);
                           const double d_focal = focal_loss_grad(p[i], g[i], focal) / valid_count;
                           dx[i] += up * (d_focal + d_dice) * p[i] * (1.0 - p[i]);
                         }
                       }
                     });
}

ag::Var class_focal_loss(const ag::Var& logits, std::span<const int> targets,
                         double no_object_weight, const FocalParams& focal) {
  if (logits.value().rank() != 2 || static_cast<int>(targets.size()) != logits.dim(0)) {
    throw std::invalid_argument("class_focal_loss: shape mismatch");
  }
  const int n = logits.dim(0), slots = logits.dim(1);
  if (n == 0) return zero_scalar();
  std::vector<double> weight(n);
  int positives = 0;
  for (int r = 0; r < n; ++r) {
    if (targets[r] < 0 || targets[r] >= slots) throw std::invalid_argument("class target range");
    const bool object = targets[r] != slots - 1;
    positives += object;
    weight[r] = object ? 1.0 : no_object_weight;
  }
  const double norm = 1.0 / std::max(1, positives);
  const std::vector<int> t(targets.begin(), targets.end());
  double value = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < slots; ++c) {
      value += weight[r] * focal_loss(sigmoid(logits.value().at(r, c)), c == t[r], focal);
    }
  }
  return ag::make_op(Tensor({1}, value * norm), {logits},
                     [t, weight, norm, n, slots, focal](ag::Node& self) {
                       const double up = self.grad[0] * norm;
                       Tensor& g = self.inputs[0]->grad_buffer();
                       const Tensor& x = self.inputs[0]->value;
                       for (int r = 0; r < n; ++r) {
                         for (int c = 0; c < slots; ++c) {
                           const double p = sigmoid(x.at(r, c));
                           g.at(r, c) += up * weight[r] * focal_loss_grad(p, c == t[r], focal) *
                                         p * (1.0 - p);
                         }
                       }
                     });
}

std::vector<std::vector<double>> matching_cost(const Tensor& mask_logits, int thing_rows,
                                               const Tensor* class_logits, const GroundTruth& gt,
                                               const LossConfig& config) {
  const std::size_t plane = static_cast<std::size_t>(gt.height) * gt.width;
  if (mask_logits.rank() != 3 || mask_logits.dim(0) < thing_rows ||
      static_cast<std::size_t>(mask_logits.dim(1)) * mask_logits.dim(2) != plane) {
    throw std::invalid_argument("matching_cost: logits do not match ground truth");
  }
  const int m = static_cast<int>(gt.things.size());
  const double valid_count = std::max<double>(1.0, static_cast<double>(count_valid(gt.valid)));
  std::vector<double> gsum(m, 0.0);
  for (int j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < plane; ++i) gsum[j] += gt.valid[i] * gt.things[j].mask[i];
  }
  std::vector<std::vector<double>> cost(thing_rows, std::vector<double>(m, 0.0));
  std::vector<double> p(plane), delta(plane);
  for (int k = 0; k < thing_rows; ++k) {
    const double* x = mask_logits.data() + k * plane;
    double negative = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!gt.valid[i]) continue;
      p[i] = sigmoid(x[i]);
      const double f0 = focal_loss(p[i], 0, config.focal);
      delta[i] = focal_loss(p[i], 1, config.focal) - f0;
      negative += f0;
      pp += p[i] * p[i];
    }
    for (int j = 0; j < m; ++j) {
      const BinaryMask& g = gt.things[j].mask;
      double pos = 0.0, pg = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        if (gt.valid[i] && g[i]) {
          pos += delta[i];
          pg += p[i];
        }
      }
      const double focal_term = (negative + pos) / valid_count;
      const double dice = 1.0 - (2.0 * pg + kDiceEpsilon) / (pp + gsum[j] + kDiceEpsilon);
      double c = config.weights.thing * (focal_term + dice);
      if (class_logits != nullptr) {
        const double prob = sigmoid(class_logits->at(k, gt.things[j].class_index));
        c += config.weights.cls * focal_loss(prob, 1, config.focal);
      }
      cost[k][j] = c;
    }
  }
  return cost;
}

ag::Var upsample_logits(const ag::Var& logits, int height, int width) {
  if (logits.dim(1) == height && logits.dim(2) == width) return logits;
  return ag::resize_bilinear(logits, height, width);
}

namespace {

struct BlockTerms {
  ag::Var thing, stuff, part;
  Assignment assignment;
};

// Mask terms of one prediction (initial or stage) against the ground truth.
BlockTerms mask_terms(const MaskSet& masks, const Tensor* thing_class_logits,
                      const GroundTruth& gt, const LossConfig& config) {
  const BlockSizes& b = masks.blocks;
  if (static_cast<int>(gt.things.size()) > b.thing) {
    throw ConfigError("image has " + std::to_string(gt.things.size()) +
                      " things but only " + std::to_string(b.thing) + " thing queries");
  }
  if (static_cast<int>(gt.stuff.size()) != b.stuff || static_cast<int>(gt.parts.size()) != b.part) {
    throw std::invalid_argument("stuff/part rows do not match the taxonomy");
  }
  const ag::Var full = upsample_logits(masks.logits, gt.height, gt.width);
  BlockTerms t;
  const auto cost = matching_cost(full.value(), b.thing, thing_class_logits, gt, config);
  const std::vector<int> match = hungarian_match(cost);
  std::vector<char> used(b.thing, 0);
  std::vector<MaskPair> thing_pairs, stuff_pairs, part_pairs;
  for (std::size_t j = 0; j < match.size(); ++j) {
    t.assignment.pairs.emplace_back(match[j], static_cast<int>(j));
    used[match[j]] = 1;
    thing_pairs.push_back({match[j], &gt.things[j].mask});
  }
  for (int k = 0; k < b.thing; ++k) {
    if (!used[k]) t.assignment.unmatched_rows.push_back(k);
  }
  for (int k = 0; k < b.stuff; ++k) {
    if (!gt.stuff[k].empty()) stuff_pairs.push_back({b.thing + k, &gt.stuff[k]});
  }
  for (int k = 0; k < b.part; ++k) {
    if (!gt.parts[k].empty()) part_pairs.push_back({b.thing + b.stuff + k, &gt.parts[k]});
  }
  t.thing = mask_pair_loss(full, thing_pairs, gt.valid, config.focal);
  t.stuff = mask_pair_loss(full, stuff_pairs, gt.valid, config.focal);
  t.part = mask_pair_loss(full, part_pairs, gt.valid, config.focal);
  return t;
}

std::vector<int> fixed_targets(const std::vector<BinaryMask>& present) {
  const int n = static_cast<int>(present.size());
  std::vector<int> t(n);
  for (int k = 0; k < n; ++k) t[k] = present[k].empty() ? n : k;
  return t;
}

void accumulate(std::vector<ag::Var>& terms, double& slot, double weight, const ag::Var& term) {
  if (weight == 0.0) return;
  const ag::Var w = ag::scale(term, weight);
  slot += w.value()[0];
  terms.push_back(w);
}

}  // namespace

LossResult total_loss(const std::vector<StageOutput>& stages, const InitialPrediction& initial,
                      const GroundTruth& gt, const LossConfig& config) {
  const LossWeights& w = config.weights;
  for (double v : {w.part, w.thing, w.stuff, w.cls}) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
  LossResult result;
  LossBreakdown& br = result.breakdown;
  std::vector<ag::Var> terms;
  if (config.supervise_initial) {
    const BlockTerms t = mask_terms(initial.masks(), nullptr, gt, config);
    accumulate(terms, br.initial, w.thing, t.thing);
    accumulate(terms, br.initial, w.stuff, t.stuff);
    accumulate(terms, br.initial, w.part, t.part);
    result.thing_assignments.push_back(t.assignment);
  }
  for (const StageOutput& s : stages) {
    const BlockTerms t = mask_terms(s.masks, &s.thing_logits.value(), gt, config);
    accumulate(terms, br.thing, w.thing, t.thing);
    accumulate(terms, br.stuff, w.stuff, t.stuff);
    accumulate(terms, br.part, w.part, t.part);
    std::vector<int> thing_targets(s.masks.blocks.thing,
                                   static_cast<int>(s.thing_logits.dim(1)) - 1);
    for (const auto& [row, j] : t.assignment.pairs) thing_targets[row] = gt.things[j].class_index;
    const std::vector<int> stuff_targets = fixed_targets(gt.stuff);
    const std::vector<int> part_targets = fixed_targets(gt.parts);
    const std::array<ag::Var, 3> cls{
        class_focal_loss(s.thing_logits, thing_targets, config.no_object_weight, config.focal),
        class_focal_loss(s.stuff_logits, stuff_targets, config.no_object_weight, config.focal),
        class_focal_loss(s.part_logits, part_targets, config.no_object_weight, config.focal)};
    accumulate(terms, br.cls, w.cls, ag::add_n(cls));
    result.thing_assignments.push_back(t.assignment);
  }
  br.total = br.thing + br.stuff + br.part + br.cls + br.initial;
  result.total = terms.empty() ? zero_scalar() : ag::add_n(terms);
  return result;
}

}  // namespace ppf
