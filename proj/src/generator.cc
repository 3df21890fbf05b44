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

#include "ppf/generator.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ppf/errors.h"
#include "ppf/kv_config.h"
#include "ppf/rng.h"

namespace ppf {
namespace {

namespace fs = std::filesystem;

struct Placement {
  const ThingTemplate* tmpl = nullptr;
  double top = 0.0;
  double left = 0.0;
  double scale_y = 1.0;
  double scale_x = 1.0;
  Rgb jitter{0.0, 0.0, 0.0};
};

double box_overlap_fraction(const Placement& a, const Placement& b) {
  const double ah = a.tmpl->box_height * a.scale_y, aw = a.tmpl->box_width * a.scale_x;
  const double bh = b.tmpl->box_height * b.scale_y, bw = b.tmpl->box_width * b.scale_x;
  const double iy = std::max(0.0, std::min(a.top + ah, b.top + bh) - std::max(a.top, b.top));
  const double ix = std::max(0.0, std::min(a.left + aw, b.left + bw) - std::max(a.left, b.left));
  return (iy * ix) / (ah * aw);
}

bool inside(const PartShape& s, const Placement& p, double py, double px) {
  if (s.kind == PartShape::Kind::kRect) {
    const double t = p.top + s.top * p.scale_y, l = p.left + s.left * p.scale_x;
    return py >= t && py < t + s.height * p.scale_y && px >= l && px < l + s.width * p.scale_x;
  }
  const double cy = p.top + s.top * p.scale_y, cx = p.left + s.left * p.scale_x;
  const double r = s.height * std::sqrt(p.scale_y * p.scale_x);
  return (py - cy) * (py - cy) + (px - cx) * (px - cx) <= r * r;
}

double quantize(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return std::round(v * 255.0) / 255.0;
}

}  // namespace

ThingTemplate vehicle_template() {
  ThingTemplate t;
  t.name = "vehicle";
  t.scene_class = 1;
  t.box_height = 15;
  t.box_width = 26;
  t.shapes.push_back({1, PartShape::Kind::kRect, 0, 0, 10, 26, {0.85, 0.2, 0.15}});
  t.shapes.push_back({2, PartShape::Kind::kDisc, 10, 6.5, 4.5, 0, {0.1, 0.1, 0.1}});
  t.shapes.push_back({2, PartShape::Kind::kDisc, 10, 19.5, 4.5, 0, {0.1, 0.1, 0.1}});
  return t;
}

ThingTemplate person_template() {
  ThingTemplate t;
  t.name = "person";
  t.scene_class = 2;
  t.box_height = 26;
  t.box_width = 12;
  t.shapes.push_back({3, PartShape::Kind::kDisc, 4.5, 6, 4.5, 0, {0.95, 0.75, 0.55}});
  t.shapes.push_back({4, PartShape::Kind::kRect, 9, 1, 9, 10, {0.15, 0.35, 0.9}});
  t.shapes.push_back({5, PartShape::Kind::kRect, 18, 2, 8, 8, {0.35, 0.2, 0.45}});
  return t;
}

ThingTemplate sign_template() {
  ThingTemplate t;
  t.name = "sign";
  t.scene_class = 3;
  t.box_height = 12;
  t.box_width = 12;
  t.shapes.push_back({kVoidId, PartShape::Kind::kRect, 0, 0, 12, 12, {0.95, 0.85, 0.1}});
  return t;
}

GeneratorConfig default_generator_config() {
  GeneratorConfig c;
  c.shape_library = {vehicle_template(), person_template(), sign_template()};
  c.upper_stuff = 4;
  c.lower_stuff = 5;
  c.stuff_colors = {{4, {0.55, 0.75, 0.95}}, {5, {0.4, 0.55, 0.3}}};
  return c;
}

void validate_generator(const GeneratorConfig& c, const TaxonomyConfig& taxonomy) {
  if (c.height <= 0 || c.width <= 0) throw ConfigError("generator canvas must be non-empty");
  if (c.max_instances < 0 || c.min_instances < 0 || c.min_instances > c.max_instances) {
    throw ConfigError("generator instance counts must satisfy 0 <= min <= max");
  }
  if (c.max_instances > 0 && c.shape_library.empty()) {
    throw ConfigError("generator has instances but an empty shape library");
  }
  if (c.border_margin < 0) throw ConfigError("border_margin must be >= 0");
  if (c.scale_min <= 0.0 || c.scale_max < c.scale_min) throw ConfigError("bad scale range");
  for (int s : {c.upper_stuff, c.lower_stuff}) {
    if (s != kVoidId && !taxonomy.is_stuff(s)) {
      throw ConfigError("generator stuff class " + std::to_string(s) + " is not a stuff class");
    }
  }
  for (const ThingTemplate& t : c.shape_library) {
    if (!taxonomy.is_thing(t.scene_class)) {
      throw ConfigError("template '" + t.name + "' uses non-thing class " +
                        std::to_string(t.scene_class));
    }
    if (t.shapes.empty()) throw ConfigError("template '" + t.name + "' has no shapes");
    const bool needs_parts = taxonomy.has_parts(t.scene_class);
    for (const PartShape& s : t.shapes) {
      if (needs_parts ? !taxonomy.part_allowed(t.scene_class, s.part_class)
                      : s.part_class != kVoidId) {
        throw ConfigError("template '" + t.name + "' references part " +
                          std::to_string(s.part_class) + " not allowed for class " +
                          std::to_string(t.scene_class));
      }
    }
    if (t.box_height > c.height || t.box_width > c.width) {
      throw ConfigError("template '" + t.name + "' does not fit the canvas");
    }
  }
}

std::string sample_id_for(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06llu", static_cast<unsigned long long>(index));
  return buf;
}

SceneSample generate_scene(const GeneratorConfig& c, const TaxonomyConfig& taxonomy,
                           std::uint64_t index) {
  validate_generator(c, taxonomy);
  Rng rng(mix_seed(c.seed, index));
  const int h = c.height, w = c.width;
  SceneSample sample;
  sample.sample_id = sample_id_for(index);
  sample.image = RgbImage(h, w);
  sample.annotation = PanopticPartMap(h, w);
  PanopticPartMap& ann = sample.annotation;

  auto stuff_color = [&](int cls) {
    for (const auto& [id, col] : c.stuff_colors) {
      if (id == cls) return col;
    }
    return Rgb{0.5, 0.5, 0.5};
  };
  const int horizon =
      static_cast<int>(std::lround(rng.uniform(c.horizon_min, c.horizon_max) * h));
  const Rgb upper = stuff_color(c.upper_stuff), lower = stuff_color(c.lower_stuff);
  const Rgb upper_j{rng.uniform(-1, 1) * c.color_jitter, rng.uniform(-1, 1) * c.color_jitter,
                    rng.uniform(-1, 1) * c.color_jitter};
  const Rgb lower_j{rng.uniform(-1, 1) * c.color_jitter, rng.uniform(-1, 1) * c.color_jitter,
                    rng.uniform(-1, 1) * c.color_jitter};
  std::vector<Rgb> color(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const bool top = y < horizon;
    const int cls = top ? c.upper_stuff : c.lower_stuff;
    for (int x = 0; x < w; ++x) {
      ann.scene_class.at(y, x) = cls;
      Rgb col = top ? upper : lower;
      for (int k = 0; k < 3; ++k) col[k] += top ? upper_j[k] : lower_j[k];
      color[static_cast<std::size_t>(y) * w + x] = col;
    }
  }

  // Place instances; draw order is the z-order (later occludes earlier).
  std::vector<Placement> placed;
  const int count = c.max_instances > 0 ? rng.uniform_int(c.min_instances, c.max_instances) : 0;
  const double overlap_cap = c.allow_occlusion ? c.max_box_overlap : 0.0;
  for (int n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      Placement p;
      p.tmpl = &c.shape_library[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(c.shape_library.size()) - 1))];
      const double s = rng.uniform(c.scale_min, c.scale_max);
      p.scale_y = s * rng.uniform(0.95, 1.05);
      p.scale_x = s * rng.uniform(0.95, 1.05);
      const double bh = p.tmpl->box_height * p.scale_y, bw = p.tmpl->box_width * p.scale_x;
      if (bh > h || bw > w) continue;
      p.top = rng.uniform(0.0, h - bh);
      p.left = rng.uniform(0.0, w - bw);
      for (double& j : p.jitter) j = rng.uniform(-1, 1) * c.color_jitter;
      bool ok = true;
      for (const Placement& q : placed) {
        if (box_overlap_fraction(p, q) > overlap_cap || box_overlap_fraction(q, p) > overlap_cap) {
          ok = false;
          break;
        }
      }
      if (ok) {
        placed.push_back(p);
        break;
      }
    }
  }

  for (std::size_t i = 0; i < placed.size(); ++i) {
    const Placement& p = placed[i];
    const int id = static_cast<int>(i) + 1;
    for (const PartShape& s : p.tmpl->shapes) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!inside(s, p, y + 0.5, x + 0.5)) continue;
          ann.scene_class.at(y, x) = p.tmpl->scene_class;
          ann.instance_id.at(y, x) = id;
          ann.part_class.at(y, x) = s.part_class;
          Rgb col = s.color;
          for (int k = 0; k < 3; ++k) col[k] += p.jitter[k];
          color[static_cast<std::size_t>(y) * w + x] = col;
        }
      }
    }
  }

  // Relabel visible instances contiguously in draw order.
  std::vector<int> remap(placed.size() + 1, 0);
  for (int v : ann.instance_id.storage()) {
    if (v > 0) remap[static_cast<std::size_t>(v)] = 1;
  }
  int next = 0;
  for (std::size_t i = 1; i < remap.size(); ++i) remap[i] = remap[i] ? ++next : 0;
  for (int& v : ann.instance_id.storage()) v = remap[static_cast<std::size_t>(v)];

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgb& col = color[static_cast<std::size_t>(y) * w + x];
      for (int k = 0; k < 3; ++k) {
        sample.image.at(y, x, k) = quantize(col[k] + c.noise_amplitude * rng.normal());
      }
      const bool border = y < c.border_margin || x < c.border_margin ||
                          y >= h - c.border_margin || x >= w - c.border_margin;
      if (border) {
        ann.scene_class.at(y, x) = kVoidId;
        ann.instance_id.at(y, x) = 0;
        ann.part_class.at(y, x) = kVoidId;
      }
    }
  }
  return sample;
}

std::string generate_manifest(const GeneratorConfig& config, const TaxonomyConfig& taxonomy,
                              int n, const std::string& out_dir, const std::string& split,
                              std::uint64_t first_index) {
  if (n < 0) throw ConfigError("generate_manifest: n must be >= 0");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw ConfigError("cannot create directory " + out_dir);
  std::ostringstream manifest;
  manifest << "# ppf manifest v1: sample_id image annotation split\n";
  for (int i = 0; i < n; ++i) {
    const std::uint64_t index = first_index + static_cast<std::uint64_t>(i);
    const SceneSample s = generate_scene(config, taxonomy, index);
    const std::string img = s.sample_id + ".img";
    const std::string ann = s.sample_id + ".map";
    write_image(s.image, (fs::path(out_dir) / img).string());
    write_map(s.annotation, (fs::path(out_dir) / ann).string());
    manifest << s.sample_id << "\t" << img << "\t" << ann << "\t" << split << "\n";
  }
  const std::string path = (fs::path(out_dir) / "manifest.txt").string();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << manifest.str();
  if (!out) throw ConfigError("write failed: " + path);
  return path;
}

std::vector<ManifestRecord> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open manifest " + manifest_path);
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ManifestRecord r;
    if (!(is >> r.sample_id >> r.image_path >> r.annotation_path >> r.split)) {
      throw FormatError(manifest_path + ":" + std::to_string(lineno) + ": malformed record");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<SceneSample> load_manifest_samples(const std::string& manifest_path,
                                               const std::string& split) {
  const fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<SceneSample> out;
  for (const ManifestRecord& r : read_manifest(manifest_path)) {
    if (!split.empty() && r.split != split) continue;
    SceneSample s;
    s.sample_id = r.sample_id;
    s.image = read_image((dir / r.image_path).string());
    s.annotation = read_map((dir / r.annotation_path).string());
    if (s.image.height != s.annotation.height() || s.image.width != s.annotation.width()) {
      throw FormatError("sample " + r.sample_id + ": image and annotation sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ppf
