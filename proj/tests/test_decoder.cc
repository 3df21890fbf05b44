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

#include <string>
#include <vector>

#include "doctest.h"
#include "ppf/decoder.h"
#include "ppf/encoder.h"
#include "ppf/nn.h"
#include "ppf/rng.h"
#include "support.h"

using namespace ppf;
using testing::gradient_error;
using testing::random_tensor;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.stage_channels = {4, 4, 8, 8};
  c.neck_channels = 8;
  c.channels_per_group = 4;
  return c;
}

MultiScaleFeatures random_pyramid(int h, int w, int channels, Rng& rng) {
  MultiScaleFeatures ms;
  for (int l = 0; l < 4; ++l) {
    const int s = kPyramidStrides[l];
    ms.levels[l] = ag::constant(random_tensor({channels, h / s, w / s}, rng));
  }
  return ms;
}

// Copies every parameter of `from` into the entry of `to` with the same
// name after replacing `from_prefix` by `to_prefix`.
void copy_branch(nn::ParameterSet& from, const std::string& from_prefix, nn::ParameterSet& to,
                 const std::string& to_prefix) {
  for (auto& [name, var] : from.entries()) {
    if (name.rfind(from_prefix, 0) != 0) continue;
    to.find(to_prefix + name.substr(from_prefix.size())).mutable_value() = var.value();
  }
}

}  // namespace

TEST_CASE("pyramid shapes follow the strides") {
  Rng rng(1);
  nn::ParameterSet params;
  const Encoder enc(EncoderConfig{}, params, rng);
  const MultiScaleFeatures ms = enc.extract_features(ag::constant(Tensor({3, 64, 64})));
  const int sizes[] = {16, 8, 4, 2};
  for (int l = 0; l < 4; ++l) {
    CHECK(ms.levels[l].shape() == Shape{32, sizes[l], sizes[l]});
  }
  const MultiScaleFeatures small = enc.extract_features(ag::constant(Tensor({3, 32, 32})));
  CHECK(small.levels[0].shape() == Shape{32, 8, 8});
  CHECK(small.levels[3].shape() == Shape{32, 1, 1});
  CHECK_THROWS_AS(enc.extract_features(ag::constant(Tensor({3, 50, 64}))),
                  std::invalid_argument);
}

TEST_CASE("pyramid shapes hold for random valid sizes") {
  Rng rng(2);
  nn::ParameterSet params;
  const Encoder enc(tiny_encoder(), params, rng);
  for (int trial = 0; trial < 6; ++trial) {
    const int h = 32 * rng.uniform_int(1, 3), w = 32 * rng.uniform_int(1, 3);
    const MultiScaleFeatures ms = enc.extract_features(ag::constant(Tensor({3, h, w})));
    for (int l = 0; l < 4; ++l) {
      CHECK(ms.levels[l].shape() == Shape{8, h / kPyramidStrides[l], w / kPyramidStrides[l]});
      if (l > 0) CHECK(ms.levels[l].dim(1) * 2 == ms.levels[l - 1].dim(1));
    }
  }
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(3);
  nn::ParameterSet params;
  const Encoder enc(tiny_encoder(), params, rng);
  const ag::Var image = ag::parameter(random_tensor({3, 32, 32}, rng, 0.5));
  std::vector<Tensor> probes;
  {
    const MultiScaleFeatures ms = enc.extract_features(image);
    for (const ag::Var& l : ms.levels) probes.push_back(random_tensor(l.shape(), rng));
  }
  auto loss = [&] {
    const MultiScaleFeatures ms = enc.extract_features(image);
    std::vector<ag::Var> terms;
    for (int l = 0; l < 4; ++l) {
      terms.push_back(ag::sum(ag::mul(ms.levels[l], ag::constant(probes[l]))));
    }
    return ag::add_n(terms);
  };
  // A stem weight, a deep weight and a lateral bias.
  const auto& entries = params.entries();
  std::vector<ag::Var> sampled{entries.front().second, entries[entries.size() / 2].second,
                               entries.back().second};
  CHECK(gradient_error(loss, sampled) < 1e-4);
}

TEST_CASE("zero flow warp equals plain bilinear upsampling") {
  Rng rng(4);
  nn::ParameterSet params;
  const nn::Conv2d head = nn::Conv2d::create_zero(params, "flow", 6, 2, 3, 1);
  const ag::Var low = ag::constant(random_tensor({3, 4, 4}, rng));
  const ag::Var ref = ag::constant(random_tensor({3, 8, 8}, rng));
  CHECK(flow_warp(low, ref, head).value() == ag::resize_bilinear(low, 8, 8).value());
}

TEST_CASE("warping a constant map returns the constant") {
  Rng rng(5);
  nn::ParameterSet params;
  const nn::Conv2d head = nn::Conv2d::create(params, "flow", 4, 2, 3, 1, true, rng);
  const ag::Var low = ag::constant(Tensor({2, 3, 3}, 0.75));
  const ag::Var ref = ag::constant(random_tensor({2, 6, 6}, rng, 5.0));
  const Tensor out = flow_warp(low, ref, head).value();
  for (double v : out.storage()) {
    CHECK(v == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("a unit downward flow shifts a ramp by one row") {
  nn::ParameterSet params;
  nn::Conv2d head = nn::Conv2d::create_zero(params, "flow", 2, 2, 3, 1);
  head.bias.mutable_value()[0] = 1.0;  // dy
  head.bias.mutable_value()[1] = 0.0;  // dx
  Tensor ramp({1, 4, 4});
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ramp.at(0, y, x) = 4.0 * y + x;
  }
  const ag::Var low = ag::constant(ramp);
  const Tensor out = flow_warp(low, low, head).value();
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(out.at(0, y, x) == doctest::Approx(ramp.at(0, std::min(y + 1, 3), x)));
    }
  }
}

TEST_CASE("flow warp gradients match finite differences") {
  Rng rng(6);
  nn::ParameterSet params;
  nn::Conv2d head = nn::Conv2d::create(params, "flow", 4, 2, 3, 1, true, rng);
  head.weight.mutable_value().scale_inplace(0.5);
  const ag::Var low = ag::parameter(random_tensor({2, 3, 3}, rng));
  const ag::Var ref = ag::parameter(random_tensor({2, 6, 6}, rng));
  const Tensor w = random_tensor({2, 6, 6}, rng);
  auto loss = [&] { return ag::sum(ag::mul(flow_warp(low, ref, head), ag::constant(w))); };
  CHECK(gradient_error(loss, {low, ref, head.weight, head.bias}) < 1e-4);
}

TEST_CASE("decoder features have the stride-4 shape") {
  Rng rng(7);
  nn::ParameterSet params;
  const DecoupledDecoder dec(32, DecoderConfig{}, params, rng);
  const MultiScaleFeatures ms = random_pyramid(64, 64, 32, rng);
  const DecoupledFeatures f = dec.decode(ms);
  CHECK(f.scene.shape() == Shape{32, 16, 16});
  CHECK(f.part.shape() == f.scene.shape());
  CHECK(dec.decode(ms).scene.value() == f.scene.value());
  CHECK(dec.decode(ms).part.value() == f.part.value());
}

TEST_CASE("the positional toggle severs the coordinate branch") {
  Rng rng(8);
  const MultiScaleFeatures ms = random_pyramid(32, 32, 8, rng);
  DecoderConfig off;
  off.channels = 8;
  off.channels_per_group = 4;
  off.positional_encoding = false;
  nn::ParameterSet p_off;
  const DecoupledDecoder dec_off(8, off, p_off, rng);
  CHECK(dec_off.decode_scene_features(ms, 0.0).value() ==
        dec_off.decode_scene_features(ms, 0.37).value());
  CHECK(dec_off.decode_part_features(ms, 0.0).value() ==
        dec_off.decode_part_features(ms, 0.37).value());
  DecoderConfig on = off;
  on.positional_encoding = true;
  nn::ParameterSet p_on;
  const DecoupledDecoder dec_on(8, on, p_on, rng);
  CHECK(max_abs_diff(dec_on.decode_scene_features(ms, 0.0).value(),
                              dec_on.decode_scene_features(ms, 0.37).value()) > 1e-6);
}

TEST_CASE("coordinate grid spans the unit square") {
  const Tensor g = coordinate_grid(3, 5);
  CHECK(g.at(0, 0, 0) == doctest::Approx(-1.0));
  CHECK(g.at(0, 0, 4) == doctest::Approx(1.0));
  CHECK(g.at(1, 0, 2) == doctest::Approx(-1.0));
  CHECK(g.at(1, 2, 2) == doctest::Approx(1.0));
  CHECK(coordinate_grid(3, 5, 0.5).at(0, 1, 2) == doctest::Approx(0.5));
}

TEST_CASE("an unaligned part branch computes the scene path") {
  Rng rng(9);
  DecoderConfig c;
  c.channels = 8;
  c.channels_per_group = 4;
  c.aligned_part_decoder = false;
  nn::ParameterSet params;
  const DecoupledDecoder dec(8, c, params, rng);
  REQUIRE(dec.part_branch() != nullptr);
  CHECK_FALSE(dec.part_branch()->aligned());
  const MultiScaleFeatures ms = random_pyramid(32, 32, 8, rng);
  CHECK(max_abs_diff(dec.decode_part_features(ms).value(),
                              dec.decode_scene_features(ms).value()) > 1e-6);
  copy_branch(params, "decoder.scene", params, "decoder.part");
  CHECK(dec.decode_part_features(ms).value() == dec.decode_scene_features(ms).value());
}

TEST_CASE("zero-initialised flow heads make aligned and plain decoders bit-equal") {
  Rng rng_a(10), rng_b(11), rng_x(12);
  DecoderConfig aligned;
  aligned.channels = 8;
  aligned.channels_per_group = 4;
  DecoderConfig plain = aligned;
  plain.aligned_part_decoder = false;
  nn::ParameterSet pa, pb;
  const DecoupledDecoder dec_a(8, aligned, pa, rng_a);
  const DecoupledDecoder dec_b(8, plain, pb, rng_b);
  CHECK(dec_a.part_branch()->flow_heads().size() == 3);
  copy_branch(pb, "decoder.", pa, "decoder.");
  const MultiScaleFeatures ms = random_pyramid(64, 64, 8, rng_x);
  CHECK(dec_a.decode_part_features(ms).value() == dec_b.decode_part_features(ms).value());
}

TEST_CASE("a shared decoder returns the scene features for parts") {
  Rng rng(13);
  DecoderConfig c;
  c.channels = 8;
  c.channels_per_group = 4;
  c.decoupled = false;
  nn::ParameterSet params;
  const DecoupledDecoder dec(8, c, params, rng);
  CHECK(dec.part_branch() == nullptr);
  const DecoupledFeatures f = dec.decode(random_pyramid(32, 32, 8, rng));
  CHECK(f.part.value() == f.scene.value());
}

TEST_CASE("initial heads are 1x1 convolutions whose weights seed the queries") {
  Rng rng(14);
  nn::ParameterSet params;
  InitialHeads heads(2, BlockSizes{1, 2, 3}, params, rng);
  heads.thing_head().weight.mutable_value().storage() = {0.3, -0.6};
  heads.thing_head().bias.mutable_value().storage() = {0.1};
  const Tensor fs = random_tensor({2, 3, 4}, rng);
  const Tensor fp = random_tensor({2, 3, 4}, rng);
  const InitialPrediction init = heads.initial_predict(ag::constant(fs), ag::constant(fp));
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(init.thing_masks.value().at(0, y, x) ==
            doctest::Approx(0.3 * fs.at(0, y, x) - 0.6 * fs.at(1, y, x) + 0.1));
    }
  }
  CHECK(init.queries.blocks == BlockSizes{1, 2, 3});
  CHECK(init.queries.rows.shape() == Shape{6, 2});
  CHECK(init.queries.rows.value().at(0, 0) == 0.3);
  CHECK(init.queries.rows.value().at(0, 1) == -0.6);
  const Tensor& pw = heads.part_head().weight.value();
  CHECK(init.queries.rows.value().at(5, 1) == pw[2 * 2 + 1]);
  CHECK(init.part_masks.shape() == Shape{3, 3, 4});
  const MaskSet masks = init.masks();
  CHECK(masks.blocks == init.queries.blocks);
  CHECK(masks.logits.shape() == Shape{6, 3, 4});
}

TEST_CASE("zero features give initial masks equal to their biases") {
  Rng rng(15);
  nn::ParameterSet params;
  InitialHeads heads(4, BlockSizes{2, 1, 2}, params, rng);
  heads.stuff_head().bias.mutable_value()[0] = 0.42;
  const ag::Var zero = ag::constant(Tensor({4, 2, 2}));
  const InitialPrediction init = heads.initial_predict(zero, zero);
  for (double v : init.stuff_masks.value().storage()) CHECK(v == doctest::Approx(0.42));
  const Tensor& tb = heads.thing_head().bias.value();
  CHECK(init.thing_masks.value().at(1, 1, 0) == doctest::Approx(tb[1]));
}
