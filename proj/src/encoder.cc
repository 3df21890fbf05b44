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

#include "ppf/encoder.h"

#include <stdexcept>
#include <string>

namespace ppf {

Tensor image_to_tensor(const RgbImage& image) {
  Tensor t({3, image.height, image.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) t.at(c, y, x) = image.at(y, x, c) - 0.5;
  return t;
}

Encoder::Encoder(const EncoderConfig& config, nn::ParameterSet& params, Rng& rng)
    : config_(config) {
  int in = 3;
  for (int s = 0; s < 4; ++s) {
    const int out = config.stage_channels[s];
    const std::string name = "encoder.stage" + std::to_string(s + 1);
    stages_[s].first =
        nn::ConvNormAct::create(params, name + ".0", in, out, 2, config.channels_per_group, rng);
    // Stage one reaches stride 4 by downsampling in both blocks.
    stages_[s].second = nn::ConvNormAct::create(params, name + ".1", out, out, s == 0 ? 2 : 1,
                                                config.channels_per_group, rng);
    laterals_[s] = nn::Conv2d::create(params, "encoder.lateral" + std::to_string(s + 1), out,
                                      config.neck_channels, 1, 1, true, rng);
    in = out;
  }
}

void Encoder::check_input_size(int height, int width) {
  if (height <= 0 || width <= 0 || height % 32 != 0 || width % 32 != 0) {
    throw std::invalid_argument("encoder input " + std::to_string(height) + "x" +
                                std::to_string(width) + " is not divisible by 32");
  }
}

MultiScaleFeatures Encoder::extract_features(const ag::Var& image) const {
  if (image.value().rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("encoder expects a 3 x H x W image");
  }
  check_input_size(image.dim(1), image.dim(2));
  std::array<ag::Var, 4> stage_out;
  ag::Var x = image;
  for (int s = 0; s < 4; ++s) {
    x = stages_[s].second(stages_[s].first(x));
    stage_out[s] = x;
  }
  MultiScaleFeatures ms;
  ms.levels[3] = laterals_[3](stage_out[3]);
  for (int s = 2; s >= 0; --s) {
    ms.levels[s] = ag::add(laterals_[s](stage_out[s]), ag::upsample_nearest(ms.levels[s + 1], 2));
  }
  return ms;
}

}  // namespace ppf
