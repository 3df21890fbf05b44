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

#ifndef PPF_ENCODER_H_
#define PPF_ENCODER_H_

// Small convolutional backbone with an FPN-style neck.
//
// Four stages of two (conv3x3 -> group norm -> relu) blocks. Stage one
// downsamples twice and the others once, giving stride-4/8/16/32 outputs
// which the neck projects to a common width and fuses top-down.

#include <array>

#include "ppf/autograd.h"
#include "ppf/nn.h"
#include "ppf/raster.h"

namespace ppf {

struct EncoderConfig {
  std::array<int, 4> stage_channels{16, 32, 64, 128};
  int neck_channels = 32;
  int channels_per_group = 8;
};

inline constexpr std::array<int, 4> kPyramidStrides{4, 8, 16, 32};

struct MultiScaleFeatures {
  // levels[i] is neck_channels x H/stride_i x W/stride_i.
  std::array<ag::Var, 4> levels;
};

// 3 x H x W tensor, centred to [-0.5, 0.5].
Tensor image_to_tensor(const RgbImage& image);

class Encoder {
 public:
  Encoder(const EncoderConfig& config, nn::ParameterSet& params, Rng& rng);

  // Throws std::invalid_argument unless H and W are multiples of 32.
  MultiScaleFeatures extract_features(const ag::Var& image) const;

  static void check_input_size(int height, int width);
  const EncoderConfig& config() const { return config_; }

 private:
  struct Stage {
    nn::ConvNormAct first;
    nn::ConvNormAct second;
  };
  EncoderConfig config_;
  std::array<Stage, 4> stages_;
  std::array<nn::Conv2d, 4> laterals_;
};

}  // namespace ppf

#endif  // PPF_ENCODER_H_
