/*
 * Copyright 2026 The finecf Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// finecf command-line tool: train-toy | mine | explain | evaluate | ablate.

#include <cstdlib>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "finecf/cli_reporter.h"
#include "finecf/errors.h"

namespace {

void AddRunFlags(CLI::App* cmd, finecf::RunConfig* run, std::string* score_mode) {
  cmd->add_option("--sigma", run->sigma, "Gaussian kernel scale")->capture_default_str();
  cmd->add_option("--u-size", run->u_size, "reference set size")->capture_default_str();
  cmd->add_option("--max-iters", run->max_iters, "counterfactual iteration cap")
      ->capture_default_str();
  cmd->add_option("--top-m", run->top_m, "candidates kept per reference")->capture_default_str();
  cmd->add_option("--step-fraction", run->step_fraction, "curve step as a fraction of pixels")
      ->capture_default_str();
  cmd->add_option("--sim-weight", run->sim_weight, "weight of the similarity term")
      ->capture_default_str();
  cmd->add_option("--seed", run->seed, "recorded run seed")->capture_default_str();
  cmd->add_option("--score-mode", *score_mode, "probability or logit")
      ->check(CLI::IsMember({"probability", "logit"}))
      ->capture_default_str();
  cmd->add_option("--chunk", run->chunk_size, "head evaluations per chunk")->capture_default_str();
  cmd->add_option("--curve-map", run->curve_map, "map ordering the curves: inv or dom")
      ->check(CLI::IsMember({"inv", "dom"}))
      ->capture_default_str();
  cmd->add_option("--blur-kernel", run->blur.kernel_size, "curve blur kernel size")
      ->capture_default_str();
  cmd->add_option("--blur-sigma", run->blur.sigma, "curve blur sigma")->capture_default_str();
  cmd->add_option("--workers", run->workers, "parallel samples")->capture_default_str();
  cmd->add_option("--out-dir", run->out_dir, "output directory")->capture_default_str();
}

void AddSampleFlags(CLI::App* cmd, finecf::ExplainOptions* options) {
  cmd->add_option("--model", options->model, "toy run directory or backbone descriptor")
      ->required();
  cmd->add_option("--data", options->data, "dataset root")->required();
  cmd->add_option("--sample", options->sample_ids, "sample id (repeatable)");
  cmd->add_option("--index", options->index_file, "index file written by mine");
  cmd->add_option("--limit", options->limit, "explain at most this many samples");
  cmd->add_option("--cache-dir", options->cache_dir, "candidate pool cache root");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual saliency explanations for image classifiers"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  finecf::TrainToyOptions train;
  auto* train_cmd = app.add_subcommand("train-toy", "train the toy model on synthetic shapes");
  train_cmd->add_option("--out", train.out_dir, "run directory")->required();
  train_cmd->add_option("--classes", train.data.class_count)->capture_default_str();
  train_cmd->add_option("--train-per-class", train.data.train_per_class)->capture_default_str();
  train_cmd->add_option("--val-per-class", train.data.val_per_class)->capture_default_str();
  train_cmd->add_option("--data-seed", train.data_seed)->capture_default_str();
  train_cmd->add_option("--epochs", train.train.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train.train.learning_rate)->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed)->capture_default_str();

  finecf::MineOptions mine;
  std::string mine_split = "val";
  auto* mine_cmd = app.add_subcommand("mine", "list misclassified samples");
  mine_cmd->add_option("--model", mine.model)->required();
  mine_cmd->add_option("--data", mine.data)->required();
  mine_cmd->add_option("--split", mine_split)->capture_default_str();
  mine_cmd->add_option("--out", mine.out, "index file")->required();

  finecf::ExplainOptions explain;
  std::string explain_mode = "probability";
  auto* explain_cmd = app.add_subcommand("explain", "explain misclassified samples");
  AddSampleFlags(explain_cmd, &explain);
  AddRunFlags(explain_cmd, &explain.run, &explain_mode);

  finecf::EvaluateOptions evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score explanation records");
  evaluate_cmd->add_option("--model", evaluate.model)->required();
  evaluate_cmd->add_option("--data", evaluate.data)->required();
  evaluate_cmd->add_option("--records", evaluate.records_dir)->required();
  evaluate_cmd->add_option("--out-dir", evaluate.out_dir, "defaults to the records directory");
  evaluate_cmd->add_option("--step-fraction", evaluate.step_fraction)->capture_default_str();
  evaluate_cmd->add_option("--blur-kernel", evaluate.blur.kernel_size)->capture_default_str();
  evaluate_cmd->add_option("--blur-sigma", evaluate.blur.sigma)->capture_default_str();

  finecf::AblateOptions ablate;
  std::string ablate_mode = "probability";
  std::vector<std::string> sp_toggles;
  auto* ablate_cmd = app.add_subcommand("ablate", "compare pipeline variants");
  AddSampleFlags(ablate_cmd, &ablate.base);
  AddRunFlags(ablate_cmd, &ablate.base.run, &ablate_mode);
  ablate_cmd->add_option("--sp", sp_toggles, "saliency partition: on, off")
      ->check(CLI::IsMember({"on", "off"}))
      ->delimiter(',');
  ablate_cmd->add_option("--topm", ablate.top_m, "Top-m values")->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  try {
    if (*train_cmd) return finecf::CmdTrainToy(train);
    if (*mine_cmd) {
      mine.split = finecf::ParseSplit(mine_split);
      return finecf::CmdMine(mine);
    }
    if (*explain_cmd) {
      explain.run.score_mode = finecf::ParseScoreMode(explain_mode);
      return finecf::CmdExplain(explain);
    }
    if (*evaluate_cmd) return finecf::CmdEvaluate(evaluate);
    if (*ablate_cmd) {
      ablate.base.run.score_mode = finecf::ParseScoreMode(ablate_mode);
      for (const std::string& t : sp_toggles) ablate.sp.push_back(t == "on");
      return finecf::CmdAblate(ablate);
    }
  } catch (const finecf::Error& e) {
    spdlog::error("{}", e.what());
  }
  return finecf::kExitError;
}
