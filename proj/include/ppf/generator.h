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

#ifndef PPF_GENERATOR_H_
#define PPF_GENERATOR_H_

// Deterministic synthetic scenes: things assembled from labelled parts,
// painted over a two-class horizon split of stuff.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ppf/raster.h"
#include "ppf/taxonomy.h"

namespace ppf {

using Rgb = std::array<double, 3>;

struct PartShape {
  enum class Kind { kRect, kDisc };
  int part_class = kVoidId;
  Kind kind = Kind::kRect;
  // Template-box coordinates in pixels at scale 1. Rects span
  // [top, top + height) x [left, left + width); discs are centred at
  // (top, left) with radius `height`.
  double top = 0.0;
  double left = 0.0;
  double height = 0.0;
  double width = 0.0;
  Rgb color{0.5, 0.5, 0.5};
};

struct ThingTemplate {
  std::string name;
  int scene_class = kVoidId;
  double box_height = 0.0;
  double box_width = 0.0;
  // Painted in order; later shapes overwrite earlier ones.
  std::vector<PartShape> shapes;
};

struct GeneratorConfig {
  std::uint64_t seed = 7;
  int height = 64;
  int width = 64;
  int min_instances = 1;
  int max_instances = 4;
  std::vector<ThingTemplate> shape_library;
  // Horizon split: `upper_stuff` above the horizon row, `lower_stuff` below.
  int upper_stuff = kVoidId;
  int lower_stuff = kVoidId;
  double horizon_min = 0.3;
  double horizon_max = 0.6;
  std::vector<std::pair<int, Rgb>> stuff_colors;
  double color_jitter = 0.06;
  double noise_amplitude = 0.02;
  double scale_min = 0.85;
  double scale_max = 1.2;
  bool allow_occlusion = true;
  // Largest fraction of a new instance's box that may lie over earlier boxes.
  double max_box_overlap = 0.3;
  int border_margin = 0;
};

// Built-in templates matching default_taxonomy().
ThingTemplate vehicle_template();
ThingTemplate person_template();
ThingTemplate sign_template();
GeneratorConfig default_generator_config();

// Throws ConfigError when the config disagrees with the taxonomy.
void validate_generator(const GeneratorConfig& config, const TaxonomyConfig& taxonomy);

// Pure function of (config, index).
SceneSample generate_scene(const GeneratorConfig& config, const TaxonomyConfig& taxonomy,
                           std::uint64_t index);

std::string sample_id_for(std::uint64_t index);

struct ManifestRecord {
  std::string sample_id;
  std::string image_path;       // relative to the manifest directory
  std::string annotation_path;  // relative to the manifest directory
  std::string split;
};

// Writes samples first_index .. first_index + n - 1 and out_dir/manifest.txt.
// Returns the manifest path.
std::string generate_manifest(const GeneratorConfig& config, const TaxonomyConfig& taxonomy,
                              int n, const std::string& out_dir, const std::string& split = "train",
                              std::uint64_t first_index = 0);

std::vector<ManifestRecord> read_manifest(const std::string& manifest_path);

// Loads every record of a manifest (optionally only one split).
std::vector<SceneSample> load_manifest_samples(const std::string& manifest_path,
                                               const std::string& split = "");

}  // namespace ppf

#endif  // PPF_GENERATOR_H_
