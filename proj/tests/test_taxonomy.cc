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

#include <filesystem>
#include <string>

#include "doctest.h"
#include "ppf/errors.h"
#include "ppf/generator.h"
#include "ppf/raster.h"
#include "ppf/rng.h"
#include "ppf/taxonomy.h"
#include "support.h"

using namespace ppf;

namespace {

TaxonomyConfig two_things_one_stuff() {
  TaxonomyConfig t;
  t.thing_classes = {1, 2};
  t.stuff_classes = {3};
  t.part_classes = {10, 11};
  t.parts_of[1] = {10, 11};
  return t;
}

}  // namespace

TEST_CASE("valid taxonomy derives the part partitions") {
  const TaxonomyConfig t = validate_taxonomy(two_things_one_stuff());
  CHECK(t.classes_with_parts() == std::vector<int>{1});
  CHECK(t.classes_without_parts() == std::vector<int>{2, 3});
  CHECK(t.has_parts(1));
  CHECK_FALSE(t.has_parts(2));
  CHECK(t.part_allowed(1, 11));
  CHECK_FALSE(t.part_allowed(2, 10));
  CHECK(t.thing_index(2) == 1);
  CHECK(t.stuff_index(3) == 0);
  CHECK(t.part_index(11) == 1);
  CHECK(t.thing_index(3) == -1);
}

TEST_CASE("overlapping thing and stuff ids are rejected") {
  TaxonomyConfig t;
  t.thing_classes = {1};
  t.stuff_classes = {1};
  CHECK_THROWS_WITH_AS(validate_taxonomy(t), doctest::Contains("overlapping ids"), ConfigError);
}

TEST_CASE("parts_of on an unknown class is rejected") {
  TaxonomyConfig t = two_things_one_stuff();
  t.parts_of[5] = {10};
  CHECK_THROWS_WITH_AS(validate_taxonomy(t), doctest::Contains("unknown scene class"),
                       ConfigError);
}

TEST_CASE("other taxonomy violations are rejected") {
  TaxonomyConfig unused = two_things_one_stuff();
  unused.part_classes.push_back(12);
  CHECK_THROWS_WITH_AS(validate_taxonomy(unused), doctest::Contains("never used"), ConfigError);
  TaxonomyConfig void_class = two_things_one_stuff();
  void_class.stuff_classes.push_back(0);
  CHECK_THROWS_AS(validate_taxonomy(void_class), ConfigError);
  CHECK_THROWS_AS(validate_taxonomy(TaxonomyConfig{}), ConfigError);
}

TEST_CASE("validation is idempotent") {
  const TaxonomyConfig once = validate_taxonomy(two_things_one_stuff());
  CHECK(validate_taxonomy(once) == once);
  const TaxonomyConfig def = validate_taxonomy(default_taxonomy());
  CHECK(validate_taxonomy(def) == def);
}

TEST_CASE("taxonomy text format round-trips") {
  const TaxonomyConfig t = default_taxonomy();
  CHECK(parse_taxonomy(format_taxonomy(t)) == t);
  const TaxonomyConfig parsed = parse_taxonomy(
      "version = 1\nthing_classes = 1, 2\nstuff_classes = 3\npart_classes = 10, 11\n"
      "parts_of.1 = 10, 11\n# comment\nname.3 = sky\n");
  CHECK(parsed.name_of(3) == "sky");
  CHECK(parsed.parts_of.at(1) == std::set<int>{10, 11});
  CHECK_THROWS_AS(parse_taxonomy("version = 2\nthing_classes = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_taxonomy("version = 1\nthing_classes = 1\nbogus = 3\n"), ConfigError);
}

TEST_CASE("map container round-trips random maps bit-exactly") {
  Rng rng(21);
  const TaxonomyConfig tax = testing::small_taxonomy();
  const std::string dir = testing::scratch_dir("map_roundtrip");
  for (int trial = 0; trial < 25; ++trial) {
    const int h = 1 + static_cast<int>(rng.uniform_int(0, 40));
    const int w = 1 + static_cast<int>(rng.uniform_int(0, 40));
    const PanopticPartMap m = testing::random_map(h, w, tax, rng);
    CHECK(map_violations(m, tax).empty());
    CHECK(decode_map(encode_map(m)) == m);
    const std::string path = dir + "/m" + std::to_string(trial) + ".map";
    write_map(m, path);
    CHECK(read_map(path) == m);
  }
}

TEST_CASE("generated maps round-trip through files") {
  const TaxonomyConfig tax = default_taxonomy();
  const GeneratorConfig gen = default_generator_config();
  const std::string dir = testing::scratch_dir("gen_roundtrip");
  for (std::uint64_t i = 0; i < 4; ++i) {
    const SceneSample s = generate_scene(gen, tax, i);
    write_map(s.annotation, dir + "/a.map");
    CHECK(read_map(dir + "/a.map") == s.annotation);
  }
}

TEST_CASE("a 1x1 void map round-trips") {
  const PanopticPartMap m(1, 1);
  CHECK(decode_map(encode_map(m)) == m);
}

TEST_CASE("malformed containers are rejected") {
  const PanopticPartMap m(3, 2);
  std::string bytes = encode_map(m);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_map(bad_magic), doctest::Contains("magic"), FormatError);
  CHECK_THROWS_AS(decode_map(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_map(bytes.substr(0, 6)), FormatError);
  CHECK_THROWS_AS(decode_map(bytes + "x"), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_map(bad_version), FormatError);
  CHECK_THROWS_AS(decode_image(bytes), FormatError);
}

TEST_CASE("writing a map with mismatched planes fails") {
  PanopticPartMap m(2, 2);
  m.part_class = LabelRaster(3, 2);
  CHECK_THROWS(encode_map(m));
}

TEST_CASE("image container quantises to 8 bits") {
  RgbImage img(2, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = (i * 37 % 256) / 255.0;
  CHECK(decode_image(encode_image(img)) == img);
}

TEST_CASE("map invariant checker flags each violation") {
  const TaxonomyConfig tax = testing::small_taxonomy();
  PanopticPartMap m(2, 2);
  m.scene_class.storage() = {1, 1, 3, 3};
  m.instance_id.storage() = {1, 1, 0, 0};
  m.part_class.storage() = {1, 2, 0, 0};
  CHECK(map_violations(m, tax).empty());
  PanopticPartMap stuff_instance = m;
  stuff_instance.instance_id.at(1, 0) = 4;
  CHECK_FALSE(map_violations(stuff_instance, tax).empty());
  PanopticPartMap bad_part = m;
  bad_part.part_class.at(1, 1) = 1;
  CHECK_FALSE(map_violations(bad_part, tax).empty());
  PanopticPartMap unknown = m;
  unknown.scene_class.at(0, 0) = 9;
  CHECK_FALSE(map_violations(unknown, tax).empty());
}

TEST_CASE("checksums are stable and sensitive") {
  CHECK(checksum_hex("") == "cbf29ce484222325");
  CHECK(checksum_hex("a") != checksum_hex("b"));
  CHECK(checksum_hex("abc").size() == 16);
}
