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

#include "ppf/harness.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "json.hpp"

#include "ppf/errors.h"
#include "ppf/rng.h"

namespace ppf {
namespace fs = std::filesystem;
namespace {

// --- configuration fields ----------------------------------------------------

struct Field {
  std::string key;
  bool model = false;  // participates in the config hash
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

template <typename Access>
Field int_field(const std::string& key, Access access, bool model = false) {
  return {key, model,
          [access, key](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(access(c))>;
            access(c) = static_cast<T>(parse_int(v, key));
          },
          [access](const RunConfig& c) { return std::to_string(access(c)); }};
}

template <typename Access>
Field double_field(const std::string& key, Access access, bool model = false) {
  return {key, model, [access, key](RunConfig& c, const std::string& v) {
            access(c) = parse_double(v, key);
          },
          [access](const RunConfig& c) { return format_double(access(c)); }};
}

template <typename Access>
Field bool_field(const std::string& key, Access access, bool model = false) {
  return {key, model, [access, key](RunConfig& c, const std::string& v) {
            access(c) = parse_bool(v, key);
          },
          [access](const RunConfig& c) { return format_bool(access(c)); }};
}

template <typename Access>
Field string_field(const std::string& key, Access access) {
  return {key, false, [access](RunConfig& c, const std::string& v) { access(c) = v; },
          [access](const RunConfig& c) { return access(c); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(string_field("taxonomy", [](auto& c) -> auto& { return c.taxonomy_path; }));
    v.push_back(int_field("seed", [](auto& c) -> auto& { return c.seed; }));
    v.push_back(string_field("output_dir", [](auto& c) -> auto& { return c.output_dir; }));
    v.push_back(int_field("log_every", [](auto& c) -> auto& { return c.log_every; }));
    v.push_back(int_field("checkpoint_every", [](auto& c) -> auto& { return c.checkpoint_every; }));

    v.push_back(int_field("generator.seed", [](auto& c) -> auto& { return c.generator.seed; }));
    v.push_back(int_field("generator.height", [](auto& c) -> auto& { return c.generator.height; }));
    v.push_back(int_field("generator.width", [](auto& c) -> auto& { return c.generator.width; }));
    v.push_back(int_field("generator.min_instances",
                          [](auto& c) -> auto& { return c.generator.min_instances; }));
    v.push_back(int_field("generator.max_instances",
                          [](auto& c) -> auto& { return c.generator.max_instances; }));
    v.push_back(double_field("generator.horizon_min",
                             [](auto& c) -> auto& { return c.generator.horizon_min; }));
    v.push_back(double_field("generator.horizon_max",
                             [](auto& c) -> auto& { return c.generator.horizon_max; }));
    v.push_back(double_field("generator.color_jitter",
                             [](auto& c) -> auto& { return c.generator.color_jitter; }));
    v.push_back(double_field("generator.noise_amplitude",
                             [](auto& c) -> auto& { return c.generator.noise_amplitude; }));
    v.push_back(double_field("generator.scale_min",
                             [](auto& c) -> auto& { return c.generator.scale_min; }));
    v.push_back(double_field("generator.scale_max",
                             [](auto& c) -> auto& { return c.generator.scale_max; }));
    v.push_back(bool_field("generator.allow_occlusion",
                           [](auto& c) -> auto& { return c.generator.allow_occlusion; }));
    v.push_back(double_field("generator.max_box_overlap",
                             [](auto& c) -> auto& { return c.generator.max_box_overlap; }));
    v.push_back(int_field("generator.border_margin",
                          [](auto& c) -> auto& { return c.generator.border_margin; }));

    v.push_back(int_field("train_samples", [](auto& c) -> auto& { return c.data.train_samples; }));
    v.push_back(
        int_field("heldout_samples", [](auto& c) -> auto& { return c.data.heldout_samples; }));
    v.push_back(int_field("heldout_first_index",
                          [](auto& c) -> auto& { return c.data.heldout_first_index; }));
    v.push_back(string_field("manifest", [](auto& c) -> auto& { return c.data.manifest; }));
    v.push_back(bool_field("flip_augment", [](auto& c) -> auto& { return c.data.flip_augment; }));

    v.push_back({"encoder_channels", true,
                 [](RunConfig& c, const std::string& s) {
                   const std::vector<long> w = parse_int_list(s, "encoder_channels");
                   if (w.size() != 4) throw ConfigError("encoder_channels needs 4 widths");
                   for (int i = 0; i < 4; ++i) c.model.encoder.stage_channels[i] = static_cast<int>(w[i]);
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (int i = 0; i < 4; ++i) {
                     s += (i ? "," : "") + std::to_string(c.model.encoder.stage_channels[i]);
                   }
                   return s;
                 }});
    v.push_back(int_field("neck_channels",
                          [](auto& c) -> auto& { return c.model.encoder.neck_channels; }, true));
    v.push_back(
        int_field("channels", [](auto& c) -> auto& { return c.model.decoder.channels; }, true));
    v.push_back({"channels_per_group", true,
                 [](RunConfig& c, const std::string& s) {
                   const int g = static_cast<int>(parse_int(s, "channels_per_group"));
                   c.model.encoder.channels_per_group = g;
                   c.model.decoder.channels_per_group = g;
                 },
                 [](const RunConfig& c) {
                   return std::to_string(c.model.encoder.channels_per_group);
                 }});
    v.push_back(int_field("num_thing_queries",
                          [](auto& c) -> auto& { return c.model.num_thing_queries; }, true));
    v.push_back(
        int_field("stages", [](auto& c) -> auto& { return c.model.stages.num_stages; }, true));
    v.push_back(bool_field("use_dynamic_conv",
                           [](auto& c) -> auto& { return c.model.stages.use_dynamic_conv; }, true));
    v.push_back(bool_field("use_self_attention",
                           [](auto& c) -> auto& { return c.model.stages.use_self_attention; },
                           true));
    v.push_back(
        int_field("attention_heads", [](auto& c) -> auto& { return c.model.stages.heads; }, true));
    v.push_back({"reasoning", true,
                 [](RunConfig&, const std::string& s) {
                   if (s != "joint") {
                     throw ConfigError("reasoning='" + s + "' is not supported (only 'joint')");
                   }
                 },
                 [](const RunConfig&) { return std::string("joint"); }});
    v.push_back(
        bool_field("decoupled", [](auto& c) -> auto& { return c.model.decoder.decoupled; }, true));
    v.push_back(bool_field("aligned_part_decoder",
                           [](auto& c) -> auto& { return c.model.decoder.aligned_part_decoder; },
                           true));
    v.push_back(bool_field("positional_encoding",
                           [](auto& c) -> auto& { return c.model.decoder.positional_encoding; },
                           true));

    v.push_back(double_field("learning_rate",
                             [](auto& c) -> auto& { return c.optimizer.learning_rate; }));
    v.push_back(
        double_field("weight_decay", [](auto& c) -> auto& { return c.optimizer.weight_decay; }));
    v.push_back(double_field("beta1", [](auto& c) -> auto& { return c.optimizer.beta1; }));
    v.push_back(double_field("beta2", [](auto& c) -> auto& { return c.optimizer.beta2; }));
    v.push_back(double_field("adam_epsilon", [](auto& c) -> auto& { return c.optimizer.epsilon; }));
    v.push_back(int_field("steps", [](auto& c) -> auto& { return c.optimizer.steps; }));
    v.push_back(int_field("batch_size", [](auto& c) -> auto& { return c.optimizer.batch_size; }));
    v.push_back(string_field("lr_schedule", [](auto& c) -> auto& { return c.optimizer.schedule; }));
    v.push_back(double_field("grad_clip", [](auto& c) -> auto& { return c.optimizer.grad_clip; }));

    v.push_back(
        double_field("lambda_part", [](auto& c) -> auto& { return c.loss.weights.part; }));
    v.push_back(
        double_field("lambda_thing", [](auto& c) -> auto& { return c.loss.weights.thing; }));
    v.push_back(
        double_field("lambda_stuff", [](auto& c) -> auto& { return c.loss.weights.stuff; }));
    v.push_back(double_field("lambda_cls", [](auto& c) -> auto& { return c.loss.weights.cls; }));
    v.push_back(double_field("focal_alpha", [](auto& c) -> auto& { return c.loss.focal.alpha; }));
    v.push_back(double_field("focal_gamma", [](auto& c) -> auto& { return c.loss.focal.gamma; }));
    v.push_back(double_field("no_object_weight",
                             [](auto& c) -> auto& { return c.loss.no_object_weight; }));
    v.push_back(bool_field("supervise_initial",
                           [](auto& c) -> auto& { return c.loss.supervise_initial; }));

    v.push_back(double_field("score_thresh", [](auto& c) -> auto& { return c.merge.score; }));
    v.push_back(double_field("mask_thresh", [](auto& c) -> auto& { return c.merge.mask; }));
    v.push_back(
        double_field("overlap_keep", [](auto& c) -> auto& { return c.merge.overlap_keep; }));
    v.push_back(
        int_field("min_stuff_area", [](auto& c) -> auto& { return c.merge.min_stuff_area; }));
    return v;
  }();
  return f;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// --- binary helpers ------------------------------------------------------------

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const char* p = reinterpret_cast<const char*>(&v);
    bytes_.append(p, sizeof v);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes_ += s;
  }
  void put_tensor(const Tensor& t) {
    put(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put(static_cast<std::uint32_t>(d));
    bytes_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor get_tensor() {
    const auto rank = get<std::uint32_t>();
    if (rank > 8) throw FormatError(origin_ + ": implausible tensor rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get<std::uint32_t>()));
    Tensor t(shape);
    need(t.size() * sizeof(double));
    std::memcpy(t.data(), bytes_.data() + pos_, t.size() * sizeof(double));
    pos_ += t.size() * sizeof(double);
    return t;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(origin_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

constexpr char kCheckpointMagic[4] = {'P', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

bool all_finite(const LossBreakdown& b) {
  for (double v : {b.thing, b.stuff, b.part, b.cls, b.initial, b.total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void dump_failure(const fs::path& dir, int step, const std::vector<const SceneSample*>& batch,
                  const std::string& what) {
  nlohmann::json j;
  j["step"] = step;
  j["error"] = what;
  for (const SceneSample* s : batch) {
    j["samples"].push_back(s->sample_id);
    write_image(s->image, (dir / ("failure_" + s->sample_id + ".img")).string());
    write_map(s->annotation, (dir / ("failure_" + s->sample_id + ".map")).string());
  }
  write_text(dir / "failure.json", j.dump(2) + "\n");
}

}  // namespace

// --- configuration -------------------------------------------------------------

RunConfig default_run_config() {
  RunConfig c;
  c.taxonomy = default_taxonomy();
  c.generator = default_generator_config();
  return c;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ConfigError("unknown setting '" + key + "'");
  f->set(config, trim(value));
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' lacks '='");
  apply_setting(config, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig parse_run_config(const KeyValueFile& file) {
  RunConfig c = default_run_config();
  for (const auto& [k, v] : file.entries()) apply_setting(c, k, v);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c = parse_run_config(KeyValueFile::load(path));
  // Relative taxonomy paths are taken relative to the config file.
  if (!c.taxonomy_path.empty() && fs::path(c.taxonomy_path).is_relative()) {
    c.taxonomy_path = (fs::path(path).parent_path() / c.taxonomy_path).string();
  }
  if (!c.data.manifest.empty() && fs::path(c.data.manifest).is_relative() &&
      !fs::exists(c.data.manifest)) {
    c.data.manifest = (fs::path(path).parent_path() / c.data.manifest).string();
  }
  return c;
}

KeyValueFile run_config_entries(const RunConfig& config) {
  KeyValueFile f;
  for (const Field& field : fields()) f.set(field.key, field.get(config));
  return f;
}

void finalize_run_config(RunConfig& c) {
  c.taxonomy = c.taxonomy_path.empty() ? default_taxonomy() : load_taxonomy(c.taxonomy_path);
  validate_taxonomy(c.taxonomy);
  const OptimizerConfig& o = c.optimizer;
  if (o.steps < 0) throw ConfigError("steps must be >= 0");
  if (o.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(o.learning_rate > 0.0) || !(o.weight_decay >= 0.0)) {
    throw ConfigError("learning_rate must be > 0 and weight_decay >= 0");
  }
  if (o.schedule != "constant" && o.schedule != "cosine") {
    throw ConfigError("lr_schedule must be constant or cosine");
  }
  if (c.model.stages.num_stages < 1) throw ConfigError("stages must be >= 1");
  if (c.model.decoder.channels % c.model.stages.heads != 0) {
    throw ConfigError("attention_heads must divide channels");
  }
  if (c.data.train_samples < 1 || c.data.heldout_samples < 0) {
    throw ConfigError("train_samples must be >= 1 and heldout_samples >= 0");
  }
  if (c.log_every < 0 || c.checkpoint_every < 0) {
    throw ConfigError("log_every and checkpoint_every must be >= 0");
  }
  if (c.data.manifest.empty()) {
    if (c.generator.max_instances > c.model.num_thing_queries) {
      throw ConfigError("generator.max_instances exceeds num_thing_queries");
    }
    Encoder::check_input_size(c.generator.height, c.generator.width);
    validate_generator(c.generator, c.taxonomy);
  }
}

std::uint64_t config_hash(const RunConfig& config) {
  std::string text;
  for (const Field& f : fields()) {
    if (f.model) text += f.key + "=" + f.get(config) + "\n";
  }
  text += format_taxonomy(config.taxonomy);
  return fnv1a(text);
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string resolve_output_path(const std::string& path) {
  const char* root = std::getenv("PPS_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0' || fs::path(path).is_absolute()) return path;
  return (fs::path(root) / path).string();
}

// --- data ------------------------------------------------------------------------

std::vector<SceneSample> load_split(const RunConfig& config, const std::string& split) {
  if (!config.data.manifest.empty()) {
    std::vector<SceneSample> s = load_manifest_samples(config.data.manifest, split);
    if (s.empty()) throw ConfigError("manifest has no '" + split + "' samples");
    return s;
  }
  std::uint64_t first = 0;
  int n = 0;
  if (split == "train") {
    n = config.data.train_samples;
  } else if (split == "heldout") {
    first = config.data.heldout_first_index;
    n = config.data.heldout_samples;
  } else {
    throw ConfigError("unknown split '" + split + "' (train, heldout)");
  }
  std::vector<SceneSample> samples;
  for (int i = 0; i < n; ++i) {
    samples.push_back(generate_scene(config.generator, config.taxonomy, first + i));
  }
  return samples;
}

SceneSample flip_horizontal(const SceneSample& s) {
  SceneSample out = s;
  const int h = s.image.height, w = s.image.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = s.image.at(y, w - 1 - x, c);
      out.annotation.scene_class.at(y, x) = s.annotation.scene_class.at(y, w - 1 - x);
      out.annotation.instance_id.at(y, x) = s.annotation.instance_id.at(y, w - 1 - x);
      out.annotation.part_class.at(y, x) = s.annotation.part_class.at(y, w - 1 - x);
    }
  }
  return out;
}

int batch_sample(const RunConfig& config, int step, int slot, int num_samples) {
  const std::int64_t pos = static_cast<std::int64_t>(step) * config.optimizer.batch_size + slot;
  const std::int64_t epoch = pos / num_samples;
  std::vector<int> perm(num_samples);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
  for (int i = num_samples - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  return perm[pos % num_samples];
}

// --- optimizer -------------------------------------------------------------------

void AdamW::restore(std::int64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamW::step(nn::ParameterSet& params, double lr) {
  auto& entries = params.entries();
  if (m_.empty()) {
    for (auto& [name, p] : entries) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != entries.size()) throw std::logic_error("optimizer state does not match");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ag::Var& p = entries[k].second;
    Tensor& value = p.mutable_value();
    const Tensor& grad = p.node()->grad;
    const bool has_grad = grad.size() == value.size();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * g;
      v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * g * g;
      const double update = (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + config_.epsilon);
      value[i] -= lr * (update + config_.weight_decay * value[i]);
    }
  }
}

double scheduled_learning_rate(const OptimizerConfig& config, int step) {
  if (config.schedule != "cosine" || config.steps <= 1) return config.learning_rate;
  const double t = std::min(1.0, static_cast<double>(step) / (config.steps - 1));
  return config.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(M_PI * t)));
}

// --- checkpoints -----------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ByteWriter w;
  for (char c : kCheckpointMagic) w.put(c);
  w.put(kCheckpointVersion);
  w.put(ckpt.config_hash);
  w.put(ckpt.step);
  w.put(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.put_string(name);
    w.put_tensor(t);
  }
  const bool moments = !ckpt.first_moments.empty();
  w.put(static_cast<std::uint8_t>(moments));
  if (moments) {
    for (const Tensor& t : ckpt.first_moments) w.put_tensor(t);
    for (const Tensor& t : ckpt.second_moments) w.put_tensor(t);
  }
  const std::string tmp = path + ".tmp";
  write_file_bytes(tmp, w.bytes());
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint " + path + " does not exist");
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, path);
  for (char c : kCheckpointMagic) {
    if (r.get<char>() != c) throw FormatError(path + ": not a checkpoint");
  }
  if (r.get<std::uint32_t>() != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ckpt.config_hash = r.get<std::uint64_t>();
  ckpt.step = r.get<std::int64_t>();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.get_string();
    ckpt.params.emplace_back(std::move(name), r.get_tensor());
  }
  if (r.get<std::uint8_t>() != 0) {
    for (std::uint32_t i = 0; i < n; ++i) ckpt.first_moments.push_back(r.get_tensor());
    for (std::uint32_t i = 0; i < n; ++i) ckpt.second_moments.push_back(r.get_tensor());
  }
  if (!r.done()) throw FormatError(path + ": trailing bytes");
  return ckpt;
}

Checkpoint make_checkpoint(const PartFormer& model, AdamW& optimizer, std::uint64_t hash,
                           std::int64_t step) {
  Checkpoint c;
  c.config_hash = hash;
  c.step = step;
  for (const auto& [name, p] : model.params().entries()) c.params.emplace_back(name, p.value());
  c.first_moments = optimizer.first_moments();
  c.second_moments = optimizer.second_moments();
  return c;
}

void restore_parameters(const Checkpoint& ckpt, PartFormer& model, std::uint64_t expected_hash) {
  if (ckpt.config_hash != expected_hash) {
    throw ConfigError("checkpoint config hash " + hash_hex(ckpt.config_hash) +
                      " does not match configuration " + hash_hex(expected_hash));
  }
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.params.size()) throw ConfigError("checkpoint parameter count differs");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != ckpt.params[i].first ||
        entries[i].second.shape() != ckpt.params[i].second.shape()) {
      throw ConfigError("checkpoint parameter '" + ckpt.params[i].first + "' does not fit");
    }
    entries[i].second.mutable_value() = ckpt.params[i].second;
  }
}

// --- training --------------------------------------------------------------------

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  const fs::path dir = resolve_output_path(config.output_dir);
  fs::create_directories(dir);
  write_text(dir / "config.txt", run_config_entries(config).format());

  const std::vector<SceneSample> samples = load_split(config, "train");
  const int n = static_cast<int>(samples.size());
  PartFormer model(config.model, config.taxonomy, config.seed);
  AdamW optimizer(config.optimizer);
  const std::uint64_t hash = config_hash(config);
  const fs::path ckpt_path = dir / "checkpoint.bin";

  int start = 0;
  if (options.resume && fs::exists(ckpt_path)) {
    Checkpoint ckpt = load_checkpoint(ckpt_path.string());
    restore_parameters(ckpt, model, hash);
    if (!ckpt.first_moments.empty()) {
      optimizer.restore(ckpt.step, std::move(ckpt.first_moments), std::move(ckpt.second_moments));
    }
    start = static_cast<int>(ckpt.step);
  }
  std::ofstream log(dir / "train_log.csv", start > 0 ? std::ios::app : std::ios::trunc);
  if (start == 0) log << "step,total,thing,stuff,part,cls,initial,learning_rate,seconds\n";

  TrainResult result;
  result.checkpoint_path = ckpt_path.string();
  const int batch = config.optimizer.batch_size;
  const double inv_batch = 1.0 / batch;
  for (int step = start; step < config.optimizer.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    model.params().zero_grad();
    StepRecord rec;
    rec.step = step;
    std::vector<SceneSample> flipped;
    flipped.reserve(batch);
    std::vector<const SceneSample*> members;
    for (int b = 0; b < batch; ++b) {
      const SceneSample* s = &samples[batch_sample(config, step, b, n)];
      if (config.data.flip_augment &&
          (mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(step)), b) & 1)) {
        flipped.push_back(flip_horizontal(*s));
        s = &flipped.back();
      }
      members.push_back(s);
    }
    try {
      for (const SceneSample* s : members) {
        const GroundTruth gt = build_ground_truth(s->annotation, config.taxonomy);
        const ModelOutput out = model.forward(s->image);
        const LossResult loss = total_loss(out.stages, out.initial, gt, config.loss);
        if (!all_finite(loss.breakdown)) {
          throw NumericalError("non-finite loss on sample " + s->sample_id);
        }
        ag::backward(ag::scale(loss.total, inv_batch));
        LossBreakdown& m = rec.loss;
        m.thing += loss.breakdown.thing * inv_batch;
        m.stuff += loss.breakdown.stuff * inv_batch;
        m.part += loss.breakdown.part * inv_batch;
        m.cls += loss.breakdown.cls * inv_batch;
        m.initial += loss.breakdown.initial * inv_batch;
        m.total += loss.breakdown.total * inv_batch;
      }
      double norm2 = 0.0;
      for (auto& [name, p] : model.params().entries()) {
        for (double g : p.node()->grad.values()) norm2 += g * g;
      }
      if (!std::isfinite(norm2)) throw NumericalError("non-finite gradient");
      const double norm = std::sqrt(norm2);
      if (config.optimizer.grad_clip > 0.0 && norm > config.optimizer.grad_clip) {
        const double s = config.optimizer.grad_clip / norm;
        for (auto& [name, p] : model.params().entries()) p.node()->grad.scale_inplace(s);
      }
    } catch (const NumericalError& e) {
      dump_failure(dir, step, members, e.what());
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step) +
                           "; diagnostics in " + (dir / "failure.json").string());
    }
    const double lr = scheduled_learning_rate(config.optimizer, step);
    optimizer.step(model.params(), lr);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.trace.push_back(rec);
    result.steps_done = step + 1;
    log << step << ',' << format_double(rec.loss.total) << ',' << format_double(rec.loss.thing)
        << ',' << format_double(rec.loss.stuff) << ',' << format_double(rec.loss.part) << ','
        << format_double(rec.loss.cls) << ',' << format_double(rec.loss.initial) << ','
        << format_double(lr) << ',' << format_double(rec.seconds) << '\n';
    if (!options.quiet && config.log_every > 0 && (step % config.log_every == 0)) {
      std::fprintf(stderr, "step %5d  loss %.4f  (thing %.3f stuff %.3f part %.3f cls %.3f init %.3f)  %.2fs\n",
                   step, rec.loss.total, rec.loss.thing, rec.loss.stuff, rec.loss.part,
                   rec.loss.cls, rec.loss.initial, rec.seconds);
    }
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      save_checkpoint(make_checkpoint(model, optimizer, hash, step + 1), ckpt_path.string());
    }
    if (options.on_step && !options.on_step(rec, model)) break;
  }
  log.flush();
  if (result.steps_done == 0) result.steps_done = start;
  save_checkpoint(make_checkpoint(model, optimizer, hash, result.steps_done), ckpt_path.string());
  return result;
}

// --- evaluation ------------------------------------------------------------------

EvalResult evaluate_model(const PartFormer& model, const std::vector<SceneSample>& samples,
                          const MergeThresholds& thresholds) {
  const int n = static_cast<int>(samples.size());
  std::vector<MetricTally> plain(n), pan(n), part(n);
  const TaxonomyConfig& tax = model.taxonomy();
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const Prediction p = model.predict(samples[i].image, thresholds);
    const PanopticPartMap& gt = samples[i].annotation;
    plain[i] = match_segments(p.map, gt, tax);
    pan[i] = oracle_swap_tally(p.map, gt, SwapMode::kPanopticGt, tax, &p.dense_parts);
    part[i] = oracle_swap_tally(p.map, gt, SwapMode::kPartGt, tax);
  }
  EvalResult r;
  MetricTally pan_sum, part_sum;
  for (int i = 0; i < n; ++i) {
    r.tally += plain[i];
    pan_sum += pan[i];
    part_sum += part[i];
  }
  r.report = compute_report(r.tally, tax);
  r.panoptic_gt = compute_report(pan_sum, tax);
  r.part_gt = compute_report(part_sum, tax);
  return r;
}

EvalResult evaluate_maps(const std::vector<PanopticPartMap>& preds,
                         const std::vector<PanopticPartMap>& gts, const TaxonomyConfig& tax) {
  if (preds.size() != gts.size()) throw std::invalid_argument("prediction/ground truth count");
  EvalResult r;
  MetricTally pan_sum, part_sum;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    r.tally += match_segments(preds[i], gts[i], tax);
    pan_sum += oracle_swap_tally(preds[i], gts[i], SwapMode::kPanopticGt, tax);
    part_sum += oracle_swap_tally(preds[i], gts[i], SwapMode::kPartGt, tax);
  }
  r.report = compute_report(r.tally, tax);
  r.panoptic_gt = compute_report(pan_sum, tax);
  r.part_gt = compute_report(part_sum, tax);
  return r;
}

namespace {

PartFormer load_model(const RunConfig& config, const std::string& checkpoint_path) {
  PartFormer model(config.model, config.taxonomy, config.seed);
  restore_parameters(load_checkpoint(checkpoint_path), model, config_hash(config));
  return model;
}

std::string default_checkpoint(const RunConfig& config, const std::string& path) {
  return path.empty() ? (fs::path(resolve_output_path(config.output_dir)) / "checkpoint.bin").string()
                      : path;
}

}  // namespace

EvalResult evaluate(const RunConfig& config, const std::string& checkpoint_path,
                    const std::string& split) {
  const PartFormer model = load_model(config, default_checkpoint(config, checkpoint_path));
  EvalResult r = evaluate_model(model, load_split(config, split), config.merge);
  const fs::path dir = resolve_output_path(config.output_dir);
  fs::create_directories(dir);
  write_text(dir / ("metrics_" + split + ".json"), eval_json(r) + "\n");
  write_text(dir / ("metrics_" + split + ".txt"), format_report_table(r.report));
  return r;
}

std::string report_json(const MetricReport& report) {
  nlohmann::json j;
  j["pq"] = optional_json(report.pq);
  j["pq_p"] = optional_json(report.pq_p);
  j["pq_np"] = optional_json(report.pq_np);
  j["partpq"] = optional_json(report.partpq);
  j["partpq_p"] = optional_json(report.partpq_p);
  j["partpq_np"] = optional_json(report.partpq_np);
  j["classes"] = nlohmann::json::array();
  for (const ClassResult& c : report.classes) {
    j["classes"].push_back({{"id", c.scene_class},
                            {"name", c.name},
                            {"has_parts", c.has_parts},
                            {"tp", c.tp},
                            {"fp", c.fp},
                            {"fn", c.fn},
                            {"pq", c.pq},
                            {"sq", c.sq},
                            {"rq", c.rq},
                            {"partpq", c.partpq}});
  }
  return j.dump(2);
}

std::string eval_json(const EvalResult& r) {
  nlohmann::json j;
  j["metrics"] = nlohmann::json::parse(report_json(r.report));
  j["swap"]["panoptic_gt"] = nlohmann::json::parse(report_json(r.panoptic_gt));
  j["swap"]["part_gt"] = nlohmann::json::parse(report_json(r.part_gt));
  return j.dump(2);
}

// --- prediction ------------------------------------------------------------------

std::string render_ppm(const PanopticPartMap& map, const TaxonomyConfig& taxonomy) {
  const int h = map.height(), w = map.width();
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  auto hue = [](std::uint64_t key, int channel) {
    return static_cast<int>(64 + (mix_seed(key, channel) % 160));
  };
  for (std::size_t i = 0; i < map.scene_class.size(); ++i) {
    const int c = map.scene_class[i];
    for (int ch = 0; ch < 3; ++ch) {
      int v = 0;
      if (c != kVoidId) {
        v = hue(static_cast<std::uint64_t>(c), ch);
        if (taxonomy.is_thing(c)) v = std::min(255, v + 12 * (map.instance_id[i] % 4));
        if (map.part_class[i] != kVoidId) {
          v = (v + hue(1000 + static_cast<std::uint64_t>(map.part_class[i]), ch)) / 2;
        }
      }
      out.push_back(static_cast<char>(v));
    }
  }
  return out;
}

std::vector<std::string> predict(const RunConfig& config, const std::string& checkpoint_path,
                                 const std::vector<SceneSample>& samples,
                                 const std::string& out_dir, bool render) {
  const PartFormer model = load_model(config, default_checkpoint(config, checkpoint_path));
  const fs::path dir = resolve_output_path(out_dir);
  fs::create_directories(dir);
  std::vector<std::string> paths;
  for (const SceneSample& s : samples) {
    const Prediction p = model.predict(s.image, config.merge);
    const fs::path path = dir / (s.sample_id + ".map");
    write_map(p.map, path.string());
    if (render) {
      write_file_bytes((dir / (s.sample_id + ".ppm")).string(), render_ppm(p.map, config.taxonomy));
    }
    paths.push_back(path.string());
  }
  return paths;
}

// --- ablation --------------------------------------------------------------------

std::vector<GridAxis> parse_grid(const std::string& text) {
  std::vector<GridAxis> grid;
  for (const std::string& axis : split_list(text, ';')) {
    if (trim(axis).empty()) continue;
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw ConfigError("grid axis '" + axis + "' lacks '='");
    GridAxis a{trim(axis.substr(0, eq)), {}};
    if (find_field(a.key) == nullptr) throw ConfigError("unknown grid key '" + a.key + "'");
    for (const std::string& v : split_list(axis.substr(eq + 1), ',')) a.values.push_back(trim(v));
    if (a.values.empty()) throw ConfigError("grid axis '" + a.key + "' has no values");
    grid.push_back(std::move(a));
  }
  return grid;
}

std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<GridAxis>& grid,
                                std::optional<int> steps, bool quiet) {
  std::size_t combos = 1;
  for (const GridAxis& a : grid) combos *= a.values.size();
  std::vector<AblationRow> rows;
  const fs::path root = fs::path(resolve_output_path(base.output_dir)) / "ablate";
  for (std::size_t k = 0; k < combos; ++k) {
    RunConfig cfg = base;
    AblationRow row;
    std::string name;
    std::size_t rest = k;
    for (const GridAxis& a : grid) {
      const std::string& v = a.values[rest % a.values.size()];
      rest /= a.values.size();
      apply_setting(cfg, a.key, v);
      row.settings.emplace_back(a.key, v);
      name += (name.empty() ? "" : "_") + a.key + "-" + v;
    }
    if (name.empty()) name = "base";
    if (steps) cfg.optimizer.steps = *steps;
    cfg.output_dir = (root / name).string();
    finalize_run_config(cfg);
    if (!quiet) std::fprintf(stderr, "ablate: %s\n", name.c_str());
    const auto t0 = std::chrono::steady_clock::now();
    TrainOptions opts;
    opts.resume = false;
    opts.quiet = quiet;
    const TrainResult tr = train(cfg, opts);
    row.final_loss = tr.trace.empty() ? 0.0 : tr.trace.back().loss.total;
    const EvalResult train_eval = evaluate(cfg, tr.checkpoint_path, "train");
    row.train_pq = train_eval.report.pq;
    row.train_partpq = train_eval.report.partpq;
    if (cfg.data.heldout_samples > 0 || !cfg.data.manifest.empty()) {
      const EvalResult held = evaluate(cfg, tr.checkpoint_path, "heldout");
      row.heldout_pq = held.report.pq;
      row.heldout_partpq = held.report.partpq;
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  fs::create_directories(root);
  write_text(root / "ablation.txt", format_ablation_table(rows));
  KeyValueFile kv;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string p = "row" + std::to_string(i) + ".";
    for (const auto& [k, v] : rows[i].settings) kv.set(p + k, v);
    kv.set(p + "final_loss", format_double(rows[i].final_loss));
    kv.set(p + "train_pq", cell(rows[i].train_pq));
    kv.set(p + "train_partpq", cell(rows[i].train_partpq));
    kv.set(p + "heldout_pq", cell(rows[i].heldout_pq));
    kv.set(p + "heldout_partpq", cell(rows[i].heldout_partpq));
    kv.set(p + "seconds", format_double(rows[i].seconds));
  }
  kv.save((root / "ablation.kv").string());
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  if (rows.empty()) return "(no runs)\n";
  for (const auto& [k, v] : rows[0].settings) os << k << '\t';
  os << "final_loss\ttrain_PQ\ttrain_PartPQ\theldout_PQ\theldout_PartPQ\tseconds\n";
  for (const AblationRow& r : rows) {
    for (const auto& [k, v] : r.settings) os << v << '\t';
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4f", r.final_loss);
    os << buf << '\t' << cell(r.train_pq) << '\t' << cell(r.train_partpq) << '\t'
       << cell(r.heldout_pq) << '\t' << cell(r.heldout_partpq) << '\t';
    std::snprintf(buf, sizeof buf, "%.1f", r.seconds);
    os << buf << '\n';
  }
  return os.str();
}

// --- reports ---------------------------------------------------------------------

std::string run_report(const std::string& run_dir) {
  const fs::path dir = resolve_output_path(run_dir);
  if (!fs::exists(dir)) throw ConfigError("run directory " + dir.string() + " does not exist");
  std::ostringstream os;
  os << "run " << dir.string() << "\n";
  if (fs::exists(dir / "config.txt")) {
    RunConfig c = parse_run_config(KeyValueFile::load((dir / "config.txt").string()));
    os << "  stages " << c.model.stages.num_stages << ", decoupled "
       << format_bool(c.model.decoder.decoupled) << ", positional_encoding "
       << format_bool(c.model.decoder.positional_encoding) << ", steps " << c.optimizer.steps
       << "\n";
  }
  std::vector<std::pair<int, double>> curve;
  if (fs::exists(dir / "train_log.csv")) {
    std::istringstream in(read_text(dir / "train_log.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const std::vector<std::string> cols = split_list(line, ',');
      if (cols.size() < 2) continue;
      curve.emplace_back(static_cast<int>(parse_int(cols[0], "step")),
                         parse_double(cols[1], "loss"));
    }
  }
  if (!curve.empty()) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  loss %.4f (step %d) -> %.4f (step %d)\n",
                  curve.front().second, curve.front().first, curve.back().second,
                  curve.back().first);
    os << buf;
    double hi = 0.0;
    for (const auto& [s, l] : curve) hi = std::max(hi, l);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"320\">\n"
        << "<rect width=\"640\" height=\"320\" fill=\"white\"/>\n<polyline fill=\"none\" "
           "stroke=\"black\" points=\"";
    const double span = std::max(1, curve.back().first - curve.front().first);
    for (const auto& [s, l] : curve) {
      svg << 20.0 + 600.0 * (s - curve.front().first) / span << ','
          << 300.0 - 280.0 * (hi > 0 ? l / hi : 0.0) << ' ';
    }
    svg << "\"/>\n</svg>\n";
    write_text(dir / "loss_curve.svg", svg.str());
    os << "  loss curve: " << (dir / "loss_curve.svg").string() << "\n";
  }
  for (const std::string split : {"train", "heldout"}) {
    const fs::path p = dir / ("metrics_" + split + ".json");
    if (!fs::exists(p)) continue;
    const nlohmann::json j = nlohmann::json::parse(read_text(p));
    auto value = [](const nlohmann::json& v) {
      return v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()};
    };
    const auto& m = j["metrics"];
    os << "  " << split << ": PQ " << cell(value(m["pq"])) << "  PartPQ "
       << cell(value(m["partpq"])) << "  (P " << cell(value(m["partpq_p"])) << ", NP "
       << cell(value(m["partpq_np"])) << ")";
    if (j.contains("swap")) {
      os << "  | GT panoptic: PartPQ " << cell(value(j["swap"]["panoptic_gt"]["partpq"]))
         << "  GT parts: PartPQ " << cell(value(j["swap"]["part_gt"]["partpq"]));
    }
    os << "\n";
  }
  if (fs::exists(dir / "ablate" / "ablation.txt")) {
    os << "ablation\n" << read_text(dir / "ablate" / "ablation.txt");
  }
  return os.str();
}

}  // namespace ppf
