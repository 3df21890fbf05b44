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

#ifndef PPF_TESTS_SUPPORT_H_
#define PPF_TESTS_SUPPORT_H_

// Shared helpers for the unit and acceptance tests.

#include <functional>
#include <string>
#include <vector>

#include "ppf/autograd.h"
#include "ppf/raster.h"
#include "ppf/rng.h"
#include "ppf/taxonomy.h"

namespace ppf::testing {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0);
ag::Var random_parameter(Shape shape, Rng& rng, double scale = 1.0);

// Norm-wise relative error between the analytic gradient of `loss` and
// central differences, taken over every entry of every input in `inputs`.
// `loss` must rebuild the graph from the current input values each call.
double gradient_error(const std::function<ag::Var()>& loss, std::vector<ag::Var> inputs,
                      double step = 1e-6);

// Scratch directory unique to the calling test, created empty.
std::string scratch_dir(const std::string& name);

// Small taxonomy: things {1, 2}, stuff {3}; class 1 has parts {1, 2}.
TaxonomyConfig small_taxonomy();

// Random but invariant-respecting map over `taxonomy` built from
// rectangles, roughly `segments` of them.
PanopticPartMap random_map(int height, int width, const TaxonomyConfig& taxonomy, Rng& rng,
                           int segments = 6, double void_fraction = 0.05);

}  // namespace ppf::testing

#endif  // PPF_TESTS_SUPPORT_H_
