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

#include "ppf/raster.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppf/errors.h"

namespace ppf {
namespace {

constexpr char kMapMagic[4] = {'P', 'P', 'S', 'M'};
constexpr char kImageMagic[4] = {'P', 'P', 'S', 'I'};
constexpr std::size_t kHeaderBytes = 13;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string header(const char (&magic)[4], int h, int w) {
  std::string out(magic, 4);
  out.push_back(static_cast<char>(kContainerVersion));
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
  return out;
}

// Returns (h, w) after validating magic, version and payload length.
std::pair<int, int> parse_header(const std::string& bytes, const char (&magic)[4],
                                 std::size_t bytes_per_pixel) {
  if (bytes.size() < kHeaderBytes) throw FormatError("container truncated: header incomplete");
  if (bytes.compare(0, 4, std::string(magic, 4)) != 0) {
    throw FormatError("bad magic bytes: expected '" + std::string(magic, 4) + "'");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kContainerVersion) {
    throw FormatError("unsupported container version " +
                      std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  const std::uint32_t h = get_u32(bytes, 5);
  const std::uint32_t w = get_u32(bytes, 9);
  if (h == 0 || w == 0 || h > 1u << 15 || w > 1u << 15) {
    throw FormatError("malformed header: dimensions " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t expected = kHeaderBytes + static_cast<std::size_t>(h) * w * bytes_per_pixel;
  if (bytes.size() < expected) throw FormatError("container truncated: payload incomplete");
  if (bytes.size() > expected) throw FormatError("container has trailing bytes");
  return {static_cast<int>(h), static_cast<int>(w)};
}

}  // namespace

std::vector<std::string> map_violations(const PanopticPartMap& map,
                                        const TaxonomyConfig& taxonomy) {
  std::vector<std::string> out;
  const int h = map.height(), w = map.width();
  if (map.instance_id.height() != h || map.instance_id.width() != w ||
      map.part_class.height() != h || map.part_class.width() != w) {
    out.push_back("planes have different dimensions");
    return out;
  }
  auto where = [](int y, int x) {
    return " at (" + std::to_string(y) + ", " + std::to_string(x) + ")";
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int s = map.scene_class.at(y, x);
      const int inst = map.instance_id.at(y, x);
      const int p = map.part_class.at(y, x);
      if (s != kVoidId && !taxonomy.is_thing(s) && !taxonomy.is_stuff(s)) {
        out.push_back("unknown scene class " + std::to_string(s) + where(y, x));
      }
      if (inst < 0) out.push_back("negative instance id" + where(y, x));
      if (inst > 0 && !taxonomy.is_thing(s)) {
        out.push_back("instance id on non-thing pixel" + where(y, x));
      }
      if (p != kVoidId && !taxonomy.part_allowed(s, p)) {
        out.push_back("part " + std::to_string(p) + " not allowed for class " +
                      std::to_string(s) + where(y, x));
      }
    }
  }
  return out;
}

std::string encode_map(const PanopticPartMap& map) {
  const int h = map.height(), w = map.width();
  if (map.instance_id.height() != h || map.instance_id.width() != w ||
      map.part_class.height() != h || map.part_class.width() != w) {
    throw std::invalid_argument("write_map: dimension mismatch between planes");
  }
  if (h <= 0 || w <= 0) throw std::invalid_argument("write_map: empty map");
  std::string out = header(kMapMagic, h, w);
  out.reserve(kHeaderBytes + static_cast<std::size_t>(h) * w * 6);
  for (const LabelRaster* plane : {&map.scene_class, &map.instance_id, &map.part_class}) {
    for (int v : plane->storage()) {
      if (v < 0 || v > kMaxLabelId) {
        throw std::invalid_argument("write_map: id " + std::to_string(v) + " outside uint16");
      }
      out.push_back(static_cast<char>(v & 0xff));
      out.push_back(static_cast<char>((v >> 8) & 0xff));
    }
  }
  return out;
}

PanopticPartMap decode_map(const std::string& bytes) {
  const auto [h, w] = parse_header(bytes, kMapMagic, 6);
  PanopticPartMap map(h, w);
  std::size_t at = kHeaderBytes;
  for (LabelRaster* plane : {&map.scene_class, &map.instance_id, &map.part_class}) {
    for (int& v : plane->storage()) {
      v = static_cast<unsigned char>(bytes[at]) | (static_cast<unsigned char>(bytes[at + 1]) << 8);
      at += 2;
    }
  }
  return map;
}

std::string encode_image(const RgbImage& image) {
  if (image.height <= 0 || image.width <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3) {
    throw std::invalid_argument("write_image: malformed image");
  }
  std::string out = header(kImageMagic, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        double v = image.at(y, x, c);
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
      }
    }
  }
  return out;
}

RgbImage decode_image(const std::string& bytes) {
  const auto [h, w] = parse_header(bytes, kImageMagic, 3);
  RgbImage image(h, w);
  std::size_t at = kHeaderBytes;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        image.at(y, x, c) = static_cast<unsigned char>(bytes[at++]) / 255.0;
      }
    }
  }
  return image;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed: " + path);
}

void write_map(const PanopticPartMap& map, const std::string& path) {
  write_file_bytes(path, encode_map(map));
}

PanopticPartMap read_map(const std::string& path) { return decode_map(read_file_bytes(path)); }

void write_image(const RgbImage& image, const std::string& path) {
  write_file_bytes(path, encode_image(image));
}

RgbImage read_image(const std::string& path) { return decode_image(read_file_bytes(path)); }

std::string checksum_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ppf
