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

#ifndef PPF_HARNESS_H_
#define PPF_HARNESS_H_

// Run configuration, training, checkpoints, evaluation, prediction, ablation
// sweeps and reports.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ppf/generator.h"
#include "ppf/kv_config.h"
#include "ppf/loss.h"
#include "ppf/merger.h"
#include "ppf/metrics.h"
#include "ppf/model.h"

namespace ppf {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int steps = 2000;
  int batch_size = 4;
  // "constant" or "cosine" (decays to 5% of the base rate).
  std::string schedule = "constant";
  // Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
};

struct DataConfig {
  int train_samples = 8;
  int heldout_samples = 32;
  std::uint64_t heldout_first_index = 100000;
  // When set, samples come from this manifest instead of the generator.
  std::string manifest;
  bool flip_augment = false;
};

struct RunConfig {
  std::string taxonomy_path;  // empty: built-in taxonomy
  TaxonomyConfig taxonomy;
  GeneratorConfig generator;
  DataConfig data;
  ModelConfig model;
  OptimizerConfig optimizer;
  LossConfig loss;
  MergeThresholds merge;
  std::uint64_t seed = 1;
  std::string output_dir = "run";
  int log_every = 10;
  int checkpoint_every = 0;  // 0: only at the end
};

RunConfig default_run_config();
// Applies one `key = value` setting. Unknown keys are a ConfigError.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);
// "key=value" form, as accepted on the command line.
void apply_override(RunConfig& config, const std::string& assignment);
RunConfig parse_run_config(const KeyValueFile& file);
RunConfig load_run_config(const std::string& path);
KeyValueFile run_config_entries(const RunConfig& config);
// Checks cross-field consistency and loads the taxonomy file if named.
void finalize_run_config(RunConfig& config);

// Hash of everything that determines the parameter layout and meaning.
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t hash);

// Resolves `path` against $PPS_OUTPUT_ROOT when it is relative and the
// variable is set.
std::string resolve_output_path(const std::string& path);

std::vector<SceneSample> load_split(const RunConfig& config, const std::string& split);
SceneSample flip_horizontal(const SceneSample& sample);

class AdamW {
 public:
  explicit AdamW(const OptimizerConfig& config) : config_(config) {}

  void step(nn::ParameterSet& params, double learning_rate);
  std::int64_t steps_taken() const { return t_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void restore(std::int64_t t, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  OptimizerConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

double scheduled_learning_rate(const OptimizerConfig& config, int step);

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::int64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<Tensor> first_moments;
  std::vector<Tensor> second_moments;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
Checkpoint make_checkpoint(const PartFormer& model, AdamW& optimizer, std::uint64_t hash,
                           std::int64_t step);
// Copies parameters into `model`; throws ConfigError on hash or layout
// mismatch.
void restore_parameters(const Checkpoint& ckpt, PartFormer& model, std::uint64_t expected_hash);

// Training-set sample index used at (step, slot) of the batch stream.
int batch_sample(const RunConfig& config, int step, int slot, int num_samples);

struct StepRecord {
  int step = 0;
  LossBreakdown loss;  // batch means
  double seconds = 0.0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::vector<StepRecord> trace;
  int steps_done = 0;
};

struct TrainOptions {
  bool resume = true;
  bool quiet = false;
  // Called after every step; returning false stops training early.
  std::function<bool(const StepRecord&, const PartFormer&)> on_step;
};

TrainResult train(const RunConfig& config, const TrainOptions& options = {});

struct EvalResult {
  MetricTally tally;
  MetricReport report;
  MetricReport panoptic_gt;  // prediction parts on ground-truth panoptic
  MetricReport part_gt;      // ground-truth parts on predicted panoptic
};

EvalResult evaluate_model(const PartFormer& model, const std::vector<SceneSample>& samples,
                          const MergeThresholds& thresholds);
EvalResult evaluate(const RunConfig& config, const std::string& checkpoint_path,
                    const std::string& split);
EvalResult evaluate_maps(const std::vector<PanopticPartMap>& preds,
                         const std::vector<PanopticPartMap>& gts, const TaxonomyConfig& taxonomy);

std::string report_json(const MetricReport& report);
std::string eval_json(const EvalResult& result);

// Writes `<id>.map` (and `<id>.ppm` when `render`) for every sample.
std::vector<std::string> predict(const RunConfig& config, const std::string& checkpoint_path,
                                 const std::vector<SceneSample>& samples,
                                 const std::string& out_dir, bool render);
std::string render_ppm(const PanopticPartMap& map, const TaxonomyConfig& taxonomy);

// Cartesian grid: each axis is a setting key with candidate values.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};
std::vector<GridAxis> parse_grid(const std::string& text);

struct AblationRow {
  std::vector<std::pair<std::string, std::string>> settings;
  double final_loss = 0.0;
  std::optional<double> train_pq, train_partpq, heldout_pq, heldout_partpq;
  double seconds = 0.0;
};

std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<GridAxis>& grid,
                                std::optional<int> steps, bool quiet = false);
std::string format_ablation_table(const std::vector<AblationRow>& rows);

// Summary table for a finished run directory.
std::string run_report(const std::string& run_dir);

}  // namespace ppf

#endif  // PPF_HARNESS_H_
