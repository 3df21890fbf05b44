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

#include "ppf/taxonomy.h"

#include <algorithm>
#include <sstream>

#include "ppf/errors.h"
#include "ppf/kv_config.h"

namespace ppf {
namespace {

int index_in(const std::vector<int>& v, int id) {
  const auto it = std::find(v.begin(), v.end(), id);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

void check_ids(const std::vector<int>& ids, const std::string& what) {
  std::set<int> seen;
  for (int id : ids) {
    if (id == kVoidId) throw ConfigError(what + ": void id 0 is reserved");
    if (id < 0 || id > kMaxLabelId) {
      throw ConfigError(what + ": id " + std::to_string(id) + " out of range [1, 65535]");
    }
    if (!seen.insert(id).second) {
      throw ConfigError(what + ": duplicate id " + std::to_string(id));
    }
  }
}

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  return os.str();
}

}  // namespace

bool TaxonomyConfig::is_thing(int c) const { return index_in(thing_classes, c) >= 0; }
bool TaxonomyConfig::is_stuff(int c) const { return index_in(stuff_classes, c) >= 0; }

bool TaxonomyConfig::has_parts(int c) const {
  const auto it = parts_of.find(c);
  return it != parts_of.end() && !it->second.empty();
}

bool TaxonomyConfig::part_allowed(int c, int p) const {
  const auto it = parts_of.find(c);
  return it != parts_of.end() && it->second.count(p) > 0;
}

int TaxonomyConfig::thing_index(int c) const { return index_in(thing_classes, c); }
int TaxonomyConfig::stuff_index(int c) const { return index_in(stuff_classes, c); }
int TaxonomyConfig::part_index(int p) const { return index_in(part_classes, p); }

std::vector<int> TaxonomyConfig::scene_classes() const {
  std::vector<int> all = thing_classes;
  all.insert(all.end(), stuff_classes.begin(), stuff_classes.end());
  return all;
}

std::vector<int> TaxonomyConfig::classes_with_parts() const {
  std::vector<int> out;
  for (int c : scene_classes()) {
    if (has_parts(c)) out.push_back(c);
  }
  return out;
}

std::vector<int> TaxonomyConfig::classes_without_parts() const {
  std::vector<int> out;
  for (int c : scene_classes()) {
    if (!has_parts(c)) out.push_back(c);
  }
  return out;
}

std::string TaxonomyConfig::name_of(int c) const {
  const auto it = names.find(c);
  return it == names.end() ? "class_" + std::to_string(c) : it->second;
}

TaxonomyConfig validate_taxonomy(const TaxonomyConfig& raw) {
  check_ids(raw.thing_classes, "thing_classes");
  check_ids(raw.stuff_classes, "stuff_classes");
  check_ids(raw.part_classes, "part_classes");
  for (int t : raw.thing_classes) {
    if (index_in(raw.stuff_classes, t) >= 0) {
      throw ConfigError("overlapping ids: class " + std::to_string(t) +
                        " is both thing and stuff");
    }
  }
  if (raw.thing_classes.empty() && raw.stuff_classes.empty() && raw.part_classes.empty()) {
    throw ConfigError("taxonomy defines no classes");
  }
  TaxonomyConfig out;
  out.thing_classes = raw.thing_classes;
  out.stuff_classes = raw.stuff_classes;
  out.part_classes = raw.part_classes;
  std::set<int> used_parts;
  for (const auto& [scene, parts] : raw.parts_of) {
    if (index_in(raw.thing_classes, scene) < 0 && index_in(raw.stuff_classes, scene) < 0) {
      throw ConfigError("unknown scene class " + std::to_string(scene) + " in parts_of");
    }
    for (int p : parts) {
      if (index_in(raw.part_classes, p) < 0) {
        throw ConfigError("unknown part id " + std::to_string(p) + " in parts_of." +
                          std::to_string(scene));
      }
      used_parts.insert(p);
    }
    if (!parts.empty()) out.parts_of[scene] = parts;
  }
  for (int p : raw.part_classes) {
    if (!used_parts.count(p)) {
      throw ConfigError("part id never used: " + std::to_string(p) +
                        " appears in no parts_of entry");
    }
  }
  for (const auto& [scene, name] : raw.names) {
    if (index_in(raw.thing_classes, scene) < 0 && index_in(raw.stuff_classes, scene) < 0) {
      throw ConfigError("name given for unknown scene class " + std::to_string(scene));
    }
    out.names[scene] = name;
  }
  return out;
}

TaxonomyConfig parse_taxonomy(const std::string& text, const std::string& origin) {
  const KeyValueFile kv = KeyValueFile::parse(text, origin);
  const long version = kv.get_int_or("version", 1);
  if (version != 1) {
    throw ConfigError(origin + ": unsupported taxonomy version " + std::to_string(version));
  }
  auto ints = [&](const std::string& key) {
    std::vector<int> out;
    if (!kv.has(key)) return out;
    for (long v : kv.get_int_list(key)) out.push_back(static_cast<int>(v));
    return out;
  };
  TaxonomyConfig raw;
  raw.thing_classes = ints("thing_classes");
  raw.stuff_classes = ints("stuff_classes");
  raw.part_classes = ints("part_classes");
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("parts_of.", 0) == 0) {
      const int scene = static_cast<int>(parse_int(key.substr(9), key));
      std::set<int> parts;
      for (long p : parse_int_list(value, key)) parts.insert(static_cast<int>(p));
      raw.parts_of[scene] = parts;
    } else if (key.rfind("name.", 0) == 0) {
      raw.names[static_cast<int>(parse_int(key.substr(5), key))] = value;
    } else if (key != "version" && key != "thing_classes" && key != "stuff_classes" &&
               key != "part_classes") {
      throw ConfigError(origin + ": unknown taxonomy key '" + key + "'");
    }
  }
  return validate_taxonomy(raw);
}

TaxonomyConfig load_taxonomy(const std::string& path) {
  const KeyValueFile kv = KeyValueFile::load(path);
  return parse_taxonomy(kv.format(), path);
}

std::string format_taxonomy(const TaxonomyConfig& t) {
  std::ostringstream os;
  os << "version = 1\n";
  os << "thing_classes = " << join(t.thing_classes) << "\n";
  os << "stuff_classes = " << join(t.stuff_classes) << "\n";
  os << "part_classes = " << join(t.part_classes) << "\n";
  for (const auto& [scene, parts] : t.parts_of) {
    os << "parts_of." << scene << " = "
       << join(std::vector<int>(parts.begin(), parts.end())) << "\n";
  }
  for (const auto& [scene, name] : t.names) os << "name." << scene << " = " << name << "\n";
  return os.str();
}

TaxonomyConfig default_taxonomy() {
  TaxonomyConfig t;
  t.thing_classes = {1, 2, 3};
  t.stuff_classes = {4, 5};
  t.part_classes = {1, 2, 3, 4, 5};
  t.parts_of[1] = {1, 2};
  t.parts_of[2] = {3, 4, 5};
  t.names = {{1, "vehicle"}, {2, "person"}, {3, "sign"}, {4, "sky"}, {5, "ground"}};
  return validate_taxonomy(t);
}

}  // namespace ppf
