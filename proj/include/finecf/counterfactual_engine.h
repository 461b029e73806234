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

// Greedy feature-column replacement that turns a misclassified sample's
// feature map into one the model assigns to the true class.

#ifndef FINECF_COUNTERFACTUAL_ENGINE_H_
#define FINECF_COUNTERFACTUAL_ENGINE_H_

#include <set>
#include <string>
#include <vector>

#include "finecf/data_hub.h"
#include "finecf/model_gateway.h"
#include "finecf/saliency_partition.h"
#include "finecf/tensor.h"

namespace finecf {

inline constexpr int kDefaultReferenceSize = 20;
inline constexpr int kDefaultTopM = 10;
inline constexpr int kDefaultMaxIters = 100;
inline constexpr double kDefaultSimWeight = 1.0;

struct ReferenceEntry {
  std::string sample_id;
  FeatureMap features;
  int label = 0;
};

// Correctly classified samples of one class.
struct ReferenceSet {
  int target_class = 0;
  std::vector<ReferenceEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
};

// The first `size` samples of `split` labelled and predicted as
// `target_class`, in dataset order. size < 1 -> ValidationError; fewer
// matches than `size` -> DataError with the available count.
ReferenceSet BuildReferenceSet(const ModelBundle& bundle, const DatasetHandle& dataset,
                               int target_class, int size, Split split = Split::kTrain);

struct Candidate {
  int k = 0;  // reference index
  GridCoord at;
  double shapley = 0.0;
  std::vector<double> vector;

  bool operator==(const Candidate&) const = default;
};

struct CandidatePool {
  int m = 0;
  int class_index = 0;
  std::vector<Candidate> candidates;

  std::size_t size() const { return candidates.size(); }
  bool empty() const { return candidates.empty(); }
  bool operator==(const CandidatePool&) const = default;
};

// Per reference, the min(m, n^2) locations with the largest Shapley values
// w.r.t. the reference class (ties row-major), with their columns copied.
// Entries are ordered by reference, then by descending Shapley value.
CandidatePool BuildCandidatePool(const ModelBundle& bundle, const ReferenceSet& refset, int m,
                                 const ShapleyEstimator& estimator);

// Flat (count, 4 + C) array: k, row, col, shapley, column. Used for caching.
ArrayPayload PoolToPayload(const CandidatePool& pool);
CandidatePool PoolFromPayload(const ArrayPayload& payload, int m, int class_index);

// Argmax of s over locations not in `replaced`; ties row-major. Throws
// ExhaustionError when every location is replaced.
GridCoord SelectTarget(const ShapleyMap& s, const std::set<GridCoord>& replaced);

// Cosine similarity; 0 when either vector has zero norm.
double CosineSimilarity(std::span<const double> a, std::span<const double> b);

struct CandidateScore {
  double l_sim = 0.0;
  double l_cls = 0.0;
  double l_tot = 0.0;
  // Prediction on the modified map.
  ClassScores scores;
};

// Scores writing candidate.vector at `target` without mutating h:
// l_sim = cos(h[:, target], vector), l_cls = log p_a(modified map),
// l_tot = sim_weight * l_sim + l_cls.
CandidateScore ScoreCandidate(const ModelBundle& bundle, const FeatureMap& h, GridCoord target,
                              const Candidate& candidate, int class_a,
                              double sim_weight = kDefaultSimWeight);

struct BestCandidateResult {
  std::size_t index = 0;
  CandidateScore score;
};

// Exhaustive argmax of l_tot over the pool; equal l_tot goes to the smaller
// (k, row, col). Empty pool -> ConfigError.
BestCandidateResult BestCandidate(const ModelBundle& bundle, const FeatureMap& h,
                                  GridCoord target, const CandidatePool& pool, int class_a,
                                  double sim_weight = kDefaultSimWeight);

struct ReplacementStep {
  int t = 0;
  GridCoord target;
  std::size_t candidate_index = 0;
  int source_k = 0;
  GridCoord source_at;
  double l_sim = 0.0;
  double l_cls = 0.0;
  double l_tot = 0.0;
  ClassScores scores_after;
};

struct CounterfactualConfig {
  int max_iters = kDefaultMaxIters;
  double sim_weight = kDefaultSimWeight;
};

enum class CounterfactualStatus { kSuccess, kFailure };

std::string StatusName(CounterfactualStatus status);

struct CounterfactualResult {
  CounterfactualStatus status = CounterfactualStatus::kFailure;
  // "" on success, otherwise "max_iters" or "exhausted".
  std::string failure_reason;
  int original_class = 0;
  int true_class = 0;
  FeatureMap h0;
  FeatureMap h_star;
  std::vector<ReplacementStep> trace;
  // Equals trace.size().
  int iterations = 0;
  // s0: h0 w.r.t. the original prediction. s_star: h_star w.r.t. the true
  // class.
  ShapleyMap s0;
  ShapleyMap s_star;
  ClassScores final_scores;
};

// At each step the Shapley map is taken w.r.t. the current prediction, the
// highest unreplaced location is overwritten with the best pool column, and
// the map is re-predicted. Stops on reaching true_class, after max_iters
// steps, or once every location has been replaced.
CounterfactualResult GenerateCounterfactual(const ModelBundle& bundle, const FeatureMap& h0,
                                            int true_class, const CandidatePool& pool,
                                            const ShapleyEstimator& estimator,
                                            const CounterfactualConfig& config = {});

// Re-applies a trace's writes to h0.
FeatureMap ReplayTrace(const FeatureMap& h0, const std::vector<ReplacementStep>& trace,
                       const CandidatePool& pool);

}  // namespace finecf

#endif  // FINECF_COUNTERFACTUAL_ENGINE_H_
