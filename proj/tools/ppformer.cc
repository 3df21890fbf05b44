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

// Command-line front end: generate, train, evaluate, predict, ablate,
// report and eval.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ppf/errors.h"
#include "ppf/harness.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-c,--config", f.config_path, "run configuration (key = value file)");
  cmd->add_option("-s,--set", f.overrides, "override a setting, key=value (repeatable)");
  cmd->add_option("-o,--output", f.output_dir, "run directory");
}

ppf::RunConfig build_config(const CommonFlags& f) {
  ppf::RunConfig c =
      f.config_path.empty() ? ppf::default_run_config() : ppf::load_run_config(f.config_path);
  for (const std::string& o : f.overrides) ppf::apply_override(c, o);
  if (!f.output_dir.empty()) c.output_dir = f.output_dir;
  ppf::finalize_run_config(c);
  return c;
}

void print_eval(const ppf::EvalResult& r, const std::string& title) {
  std::printf("%s\n%s", title.c_str(), ppf::format_report_table(r.report).c_str());
}

std::vector<fs::path> map_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ppf::ConfigError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".map") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ppformer: panoptic-part segmentation trainer and evaluator"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, pred_flags, ablate_flags;

  auto* gen = app.add_subcommand("generate", "write synthetic scenes and a manifest");
  add_common(gen, gen_flags);
  std::string gen_out, gen_split = "train";
  int gen_count = 8;
  std::uint64_t gen_first = 0;
  gen->add_option("--out", gen_out, "destination directory")->required();
  gen->add_option("--split", gen_split, "split name recorded in the manifest");
  gen->add_option("-n,--count", gen_count, "number of scenes");
  gen->add_option("--first-index", gen_first, "index of the first scene");

  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr, train_flags);
  bool fresh = false;
  tr->add_flag("--fresh", fresh, "ignore an existing checkpoint in the run directory");

  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  add_common(ev, eval_flags);
  std::string ev_ckpt, ev_split = "heldout";
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint (default: <run>/checkpoint.bin)");
  ev->add_option("--split", ev_split, "train or heldout (or a manifest split)");

  auto* pr = app.add_subcommand("predict", "write predicted panoptic-part maps");
  add_common(pr, pred_flags);
  std::string pr_ckpt, pr_split = "heldout", pr_out, pr_manifest;
  bool pr_render = false;
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint (default: <run>/checkpoint.bin)");
  pr->add_option("--split", pr_split, "split to predict");
  pr->add_option("--manifest", pr_manifest, "predict the images of this manifest instead");
  pr->add_option("--out", pr_out, "destination directory")->required();
  pr->add_flag("--render", pr_render, "also write .ppm renderings");

  auto* ab = app.add_subcommand("ablate", "train and evaluate a grid of settings");
  add_common(ab, ablate_flags);
  std::string ab_grid = "stages=1,3;decoupled=true,false;positional_encoding=true,false";
  int ab_steps = 300;
  ab->add_option("--grid", ab_grid, "axes as key=v1,v2;key2=...");
  ab->add_option("--steps", ab_steps, "training steps per run");

  auto* rep = app.add_subcommand("report", "summarise a run directory");
  std::string rep_dir;
  rep->add_option("run", rep_dir, "run directory")->required();

  auto* cmp = app.add_subcommand("eval", "score a directory of predicted maps");
  std::string cmp_pred, cmp_gt, cmp_tax, cmp_swap, cmp_json;
  cmp->add_option("--pred", cmp_pred, "directory of predicted .map files")->required();
  cmp->add_option("--gt", cmp_gt, "directory of ground-truth .map files")->required();
  cmp->add_option("--taxonomy", cmp_tax, "taxonomy file (default: built-in)");
  cmp->add_option("--swap", cmp_swap, "replace planes by ground truth: panoptic_gt, part_gt, both");
  cmp->add_option("--json", cmp_json, "write the machine-readable report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const ppf::RunConfig c = build_config(gen_flags);
      const std::string path = ppf::generate_manifest(c.generator, c.taxonomy, gen_count,
                                                      ppf::resolve_output_path(gen_out), gen_split,
                                                      gen_first);
      std::printf("wrote %s\n", path.c_str());
    } else if (*tr) {
      const ppf::RunConfig c = build_config(train_flags);
      ppf::TrainOptions opts;
      opts.resume = !fresh;
      const ppf::TrainResult r = ppf::train(c, opts);
      std::printf("trained %d steps; checkpoint %s\n", r.steps_done, r.checkpoint_path.c_str());
      if (!r.trace.empty()) std::printf("final loss %.6f\n", r.trace.back().loss.total);
    } else if (*ev) {
      const ppf::RunConfig c = build_config(eval_flags);
      const ppf::EvalResult r = ppf::evaluate(c, ev_ckpt, ev_split);
      print_eval(r, "split " + ev_split);
      std::printf("with ground-truth panoptic: PartPQ %s\nwith ground-truth parts:    PartPQ %s\n",
                  r.panoptic_gt.partpq ? std::to_string(*r.panoptic_gt.partpq).c_str() : "n/a",
                  r.part_gt.partpq ? std::to_string(*r.part_gt.partpq).c_str() : "n/a");
    } else if (*pr) {
      const ppf::RunConfig c = build_config(pred_flags);
      const std::vector<ppf::SceneSample> samples =
          pr_manifest.empty() ? ppf::load_split(c, pr_split)
                              : ppf::load_manifest_samples(pr_manifest);
      const auto paths = ppf::predict(c, pr_ckpt, samples, pr_out, pr_render);
      std::printf("wrote %zu maps to %s\n", paths.size(), ppf::resolve_output_path(pr_out).c_str());
    } else if (*ab) {
      const ppf::RunConfig c = build_config(ablate_flags);
      const auto rows = ppf::ablate(c, ppf::parse_grid(ab_grid), ab_steps);
      std::printf("%s", ppf::format_ablation_table(rows).c_str());
    } else if (*rep) {
      std::printf("%s", ppf::run_report(rep_dir).c_str());
    } else if (*cmp) {
      const ppf::TaxonomyConfig tax =
          cmp_tax.empty() ? ppf::default_taxonomy() : ppf::load_taxonomy(cmp_tax);
      std::vector<ppf::PanopticPartMap> preds, gts;
      for (const fs::path& p : map_files(cmp_pred)) {
        const fs::path g = fs::path(cmp_gt) / p.filename();
        if (!fs::exists(g)) throw ppf::ConfigError("no ground truth for " + p.filename().string());
        ppf::PanopticPartMap pm = ppf::read_map(p.string());
        const ppf::PanopticPartMap gm = ppf::read_map(g.string());
        if (!cmp_swap.empty()) {
          pm = ppf::swap_planes(pm, gm, ppf::parse_swap_mode(cmp_swap), tax);
        }
        preds.push_back(std::move(pm));
        gts.push_back(gm);
      }
      if (preds.empty()) throw ppf::ConfigError("no .map files in " + cmp_pred);
      const ppf::EvalResult r = ppf::evaluate_maps(preds, gts, tax);
      print_eval(r, std::to_string(preds.size()) + " maps");
      if (!cmp_json.empty()) {
        ppf::write_file_bytes(cmp_json, ppf::eval_json(r) + "\n");
      }
    }
  } catch (const ppf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ppf::FormatError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitConfig;
  } catch (const ppf::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
