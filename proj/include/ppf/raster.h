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

#ifndef PPF_RASTER_H_
#define PPF_RASTER_H_

// Per-pixel label rasters and RGB images, plus their binary container.
//
// Container layout (all integers little-endian):
//   bytes 0..3   magic: "PPSM" (label map) or "PPSI" (image)
//   byte  4      version (1)
//   bytes 5..8   height, uint32
//   bytes 9..12  width, uint32
//   payload      three row-major planes; uint16 ids (scene, instance, part)
//                for maps, uint8 channels (R, G, B) for images

#include <cstdint>
#include <string>
#include <vector>

#include "ppf/taxonomy.h"

namespace ppf {

inline constexpr std::uint8_t kContainerVersion = 1;

template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using LabelRaster = Raster<int>;

// (scene class, instance id, part class) per pixel.
struct PanopticPartMap {
  LabelRaster scene_class;
  LabelRaster instance_id;
  LabelRaster part_class;

  PanopticPartMap() = default;
  PanopticPartMap(int height, int width)
      : scene_class(height, width), instance_id(height, width), part_class(height, width) {}

  int height() const { return scene_class.height(); }
  int width() const { return scene_class.width(); }
  bool operator==(const PanopticPartMap&) const = default;
};

// H x W x 3, interleaved, values in [0, 1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3) {}
  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const RgbImage&) const = default;
};

struct SceneSample {
  RgbImage image;
  PanopticPartMap annotation;
  std::string sample_id;
};

// Lists every violated PanopticPartMap invariant (empty when valid). Merged
// predictions are held to the same rules as ground truth.
std::vector<std::string> map_violations(const PanopticPartMap& map,
                                        const TaxonomyConfig& taxonomy);

std::string encode_map(const PanopticPartMap& map);
PanopticPartMap decode_map(const std::string& bytes);
void write_map(const PanopticPartMap& map, const std::string& path);
PanopticPartMap read_map(const std::string& path);

// Images are quantised to 8 bits per channel on write.
std::string encode_image(const RgbImage& image);
RgbImage decode_image(const std::string& bytes);
void write_image(const RgbImage& image, const std::string& path);
RgbImage read_image(const std::string& path);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);
// FNV-1a 64-bit, printed as 16 hex digits.
std::string checksum_hex(const std::string& bytes);

}  // namespace ppf

#endif  // PPF_RASTER_H_
