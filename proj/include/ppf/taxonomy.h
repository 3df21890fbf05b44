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

#ifndef PPF_TAXONOMY_H_
#define PPF_TAXONOMY_H_

// The label universe: scene-level thing and stuff classes, part classes and
// which parts each scene class may contain.
//
// Config file (version 1):
//
//   version = 1
//   thing_classes = 1, 2, 3
//   stuff_classes = 4, 5
//   part_classes = 1, 2, 3, 4, 5
//   parts_of.1 = 1, 2
//   parts_of.2 = 3, 4, 5
//   name.1 = vehicle        # optional display names, scene ids only
//
// Scene and part ids live in separate id spaces. Id 0 is void in both.

#include <map>
#include <set>
#include <string>
#include <vector>

namespace ppf {

inline constexpr int kVoidId = 0;
inline constexpr int kMaxLabelId = 65535;

struct TaxonomyConfig {
  std::vector<int> thing_classes;
  std::vector<int> stuff_classes;
  std::vector<int> part_classes;
  std::map<int, std::set<int>> parts_of;
  std::map<int, std::string> names;

  bool is_thing(int scene_class) const;
  bool is_stuff(int scene_class) const;
  // Scene class belongs to L^parts.
  bool has_parts(int scene_class) const;
  bool part_allowed(int scene_class, int part_class) const;

  // Position of an id within its block, -1 if absent.
  int thing_index(int scene_class) const;
  int stuff_index(int scene_class) const;
  int part_index(int part_class) const;

  std::vector<int> scene_classes() const;  // things then stuff
  std::vector<int> classes_with_parts() const;
  std::vector<int> classes_without_parts() const;
  std::string name_of(int scene_class) const;

  bool operator==(const TaxonomyConfig&) const = default;
};

// Checks every invariant and returns the normalised taxonomy (empty
// parts_of entries dropped). Throws ConfigError. Idempotent.
TaxonomyConfig validate_taxonomy(const TaxonomyConfig& raw);

TaxonomyConfig parse_taxonomy(const std::string& text, const std::string& origin = "<string>");
TaxonomyConfig load_taxonomy(const std::string& path);
std::string format_taxonomy(const TaxonomyConfig& taxonomy);

// The built-in desk-scale label set used by the synthetic generator:
// things vehicle(1, parts body/wheel), person(2, parts head/torso/legs),
// sign(3, no parts); stuff sky(4), ground(5).
TaxonomyConfig default_taxonomy();

}  // namespace ppf

#endif  // PPF_TAXONOMY_H_
