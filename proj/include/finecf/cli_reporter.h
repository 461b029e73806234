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

// Pipeline orchestration behind the command-line tool: run configuration,
// explanation records, and the train-toy / mine / explain / evaluate /
// ablate commands.

#ifndef FINECF_CLI_REPORTER_H_
#define FINECF_CLI_REPORTER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "finecf/contrastive_explainer.h"
#include "finecf/counterfactual_engine.h"
#include "finecf/data_hub.h"
#include "finecf/evaluation.h"
#include "finecf/model_gateway.h"
#include "finecf/saliency_partition.h"
#include "finecf/toy_trainer.h"
#include "json.hpp"

namespace finecf {

inline constexpr const char* kRecordSchemaVersion = "1.0";

enum ExitCode { kExitOk = 0, kExitError = 1, kExitCounterfactualFailure = 2 };

struct RunConfig {
  double sigma = kDefaultSigma;
  int u_size = kDefaultReferenceSize;
  int max_iters = kDefaultMaxIters;
  int top_m = kDefaultTopM;
  double step_fraction = kDefaultStepFraction;
  double sim_weight = kDefaultSimWeight;
  uint64_t seed = 7;
  ScoreMode score_mode = ScoreMode::kProbability;
  PartitionMethod method = PartitionMethod::kGaussian;
  int chunk_size = kDefaultShapleyChunk;
  // Map whose pixel order drives the curves: "inv" scores the original
  // prediction, "dom" the true class.
  std::string curve_map = "inv";
  BlurSpec blur;
  int workers = 1;
  std::filesystem::path out_dir = "finecf_out";

  // Throws ConfigError on out-of-range values.
  void Validate() const;
  nlohmann::json ToJson() const;
  static RunConfig FromJson(const nlohmann::json& j);
  ShapleySettings Shapley() const;
};

// A toy run directory (metadata.json + weights.bin) or a backbone descriptor
// JSON file.
ModelBundle LoadModel(const std::filesystem::path& path);

// Everything produced for one sample.
struct Explanation {
  std::string sample_id;
  // The sample at the model's input size, and its scaled keypoints.
  Image image;
  std::vector<Keypoint> keypoints;
  CounterfactualResult counterfactual;
  ContrastiveMaps maps;
  CompactScore compact;
  FineGrainedStats fine_grained;
  std::optional<CurveResult> deletion;
  std::optional<CurveResult> insertion;
  // Reference sample ids, indexed by candidate k.
  std::vector<std::string> reference_ids;
  // Counterfactual search plus map construction.
  double method_seconds = 0.0;
};

// Builds reference sets and candidate pools on demand (one per true class,
// optionally persisted in an ArrayCache) and explains samples. Explain is
// safe to call concurrently once the needed pools exist.
class Explainer {
 public:
  Explainer(const ModelBundle& bundle, const DatasetHandle& dataset, RunConfig config,
            std::optional<ArrayCache> cache = std::nullopt);

  struct PoolBundle {
    std::vector<std::string> reference_ids;
    CandidatePool pool;
  };
  const PoolBundle& PoolFor(int true_class);

  Explanation Explain(const SampleRef& sample, bool with_curves = true);

  const RunConfig& config() const { return config_; }
  const ShapleyEstimator& estimator() const { return estimator_; }

 private:
  std::optional<PoolBundle> LoadCachedPool(int true_class) const;
  void StorePool(int true_class, const PoolBundle& pool) const;
  std::string PoolKind() const;

  const ModelBundle& bundle_;
  const DatasetHandle& dataset_;
  RunConfig config_;
  std::optional<ArrayCache> cache_;
  ShapleyEstimator estimator_;
  std::mutex mutex_;
  std::map<int, std::unique_ptr<PoolBundle>> pools_;
};

// File stem used for a sample's outputs.
std::string SampleFileStem(const std::string& sample_id);

nlohmann::json BuildRecord(const ModelBundle& bundle, const DatasetHandle& dataset,
                           const RunConfig& config, const Explanation& explanation);

// Writes <stem>.json, <stem>_inv.png, <stem>_dom.png and, when present,
// <stem>_deletion.csv / <stem>_insertion.csv under dir; returns the record.
nlohmann::json WriteExplanation(const ModelBundle& bundle, const DatasetHandle& dataset,
                                const RunConfig& config, const Explanation& explanation,
                                const std::filesystem::path& dir);

// The published record schema (JSON Schema draft-04 text).
const std::string& RecordSchema();
// Empty when the record conforms to RecordSchema(); otherwise a description
// of the first violation.
std::string ValidateRecord(const nlohmann::json& record);

void WriteCurveCsv(const std::filesystem::path& path, const CurveResult& curve);

// ------------------------------------------------------------- commands

struct TrainToyOptions {
  std::filesystem::path out_dir;
  SyntheticConfig data;
  uint64_t data_seed = 7;
  ToyTrainConfig train;
};

struct MineOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  Split split = Split::kVal;
  std::filesystem::path out;
};

struct ExplainOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::vector<std::string> sample_ids;
  std::filesystem::path index_file;
  // 0 = every listed sample.
  int limit = 0;
  RunConfig run;
  // Empty disables pool caching; FINECF_CACHE_DIR overrides.
  std::filesystem::path cache_dir;
};

struct EvaluateOptions {
  std::filesystem::path model;
  std::filesystem::path data;
  std::filesystem::path records_dir;
  std::filesystem::path out_dir;
  double step_fraction = kDefaultStepFraction;
  BlurSpec blur;
};

struct AblateOptions {
  ExplainOptions base;
  // Saliency partition on (Gaussian) / off (single-point occlusion).
  std::vector<bool> sp;
  std::vector<int> top_m;
};

// Each returns an ExitCode; errors are logged and mapped to kExitError.
int CmdTrainToy(const TrainToyOptions& options);
int CmdMine(const MineOptions& options);
int CmdExplain(const ExplainOptions& options);
int CmdEvaluate(const EvaluateOptions& options);
int CmdAblate(const AblateOptions& options);

}  // namespace finecf

#endif  // FINECF_CLI_REPORTER_H_
