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

#include "support.h"

#include <cmath>
#include <filesystem>

namespace ppf::testing {

Tensor random_tensor(Shape shape, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

ag::Var random_parameter(Shape shape, Rng& rng, double scale) {
  return ag::parameter(random_tensor(std::move(shape), rng, scale));
}

double gradient_error(const std::function<ag::Var()>& loss, std::vector<ag::Var> inputs,
                      double step) {
  for (ag::Var& v : inputs) v.zero_grad();
  ag::backward(loss());
  double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
  for (ag::Var& v : inputs) {
    const Tensor analytic = v.grad();
    Tensor& value = v.mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      double plus, minus;
      {
        ag::NoGradGuard guard;
        value[i] = saved + step;
        plus = loss().value()[0];
        value[i] = saved - step;
        minus = loss().value()[0];
      }
      value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      analytic2 += analytic[i] * analytic[i];
      numeric2 += numeric * numeric;
    }
  }
  const double denom = std::sqrt(analytic2) + std::sqrt(numeric2);
  return denom < 1e-12 ? 0.0 : std::sqrt(diff2) / denom;
}

std::string scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("ppf_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

TaxonomyConfig small_taxonomy() {
  TaxonomyConfig t;
  t.thing_classes = {1, 2};
  t.stuff_classes = {3};
  t.part_classes = {1, 2};
  t.parts_of[1] = {1, 2};
  return validate_taxonomy(t);
}

PanopticPartMap random_map(int height, int width, const TaxonomyConfig& taxonomy, Rng& rng,
                           int segments, double void_fraction) {
  PanopticPartMap m(height, width);
  const std::vector<int> classes = taxonomy.scene_classes();
  if (!taxonomy.stuff_classes.empty()) {
    for (std::size_t i = 0; i < m.scene_class.size(); ++i) {
      m.scene_class[i] = taxonomy.stuff_classes[rng.uniform_int(
          0, static_cast<int>(taxonomy.stuff_classes.size()) - 1)];
    }
  }
  int next_instance = 1;
  for (int s = 0; s < segments; ++s) {
    const int c = classes[rng.uniform_int(0, static_cast<int>(classes.size()) - 1)];
    const int h = rng.uniform_int(2, std::max(2, height / 2));
    const int w = rng.uniform_int(2, std::max(2, width / 2));
    const int top = rng.uniform_int(0, height - 1), left = rng.uniform_int(0, width - 1);
    const int inst = taxonomy.is_thing(c) ? next_instance++ : 0;
    const std::vector<int> allowed = taxonomy.parts_of.count(c)
                                         ? std::vector<int>(taxonomy.parts_of.at(c).begin(),
                                                            taxonomy.parts_of.at(c).end())
                                         : std::vector<int>{};
    for (int y = top; y < std::min(height, top + h); ++y) {
      for (int x = left; x < std::min(width, left + w); ++x) {
        m.scene_class.at(y, x) = c;
        m.instance_id.at(y, x) = inst;
        int part = kVoidId;
        if (!allowed.empty() && rng.uniform() < 0.9) {
          // Parts as horizontal bands with a little noise.
          const int band = (y - top) * static_cast<int>(allowed.size()) / h;
          part = allowed[rng.uniform() < 0.85 ? band : rng.uniform_int(0, static_cast<int>(allowed.size()) - 1)];
        }
        m.part_class.at(y, x) = part;
      }
    }
  }
  for (std::size_t i = 0; i < m.scene_class.size(); ++i) {
    if (rng.uniform() < void_fraction) {
      m.scene_class[i] = kVoidId;
      m.instance_id[i] = 0;
      m.part_class[i] = kVoidId;
    }
  }
  return m;
}

}  // namespace ppf::testing
