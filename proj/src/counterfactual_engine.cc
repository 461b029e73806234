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

#include "finecf/counterfactual_engine.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "finecf/errors.h"

namespace finecf {

ReferenceSet BuildReferenceSet(const ModelBundle& bundle, const DatasetHandle& dataset,
                               int target_class, int size, Split split) {
  if (size < 1) throw ValidationError("reference set size must be >= 1, got " + std::to_string(size));
  if (target_class < 0 || target_class >= bundle.class_count()) {
    throw ValidationError("reference class out of range: " + std::to_string(target_class));
  }
  ReferenceSet refset;
  refset.target_class = target_class;
  for (const SampleRef& sample : dataset.split(split)) {
    if (sample.label != target_class) continue;
    const LoadedSample loaded = LoadSample(dataset, sample);
    FeatureMap h = bundle.ExtractFeatures(loaded.image, sample.sample_id);
    if (PredictFromFeatures(bundle, h).predicted_class != target_class) continue;
    refset.entries.push_back({sample.sample_id, std::move(h), sample.label});
    if (refset.size() == size) return refset;
  }
  throw DataError("class " + std::to_string(target_class) + " has only " +
                  std::to_string(refset.size()) + " correctly classified " + SplitName(split) +
                  " samples, " + std::to_string(size) + " requested");
}

CandidatePool BuildCandidatePool(const ModelBundle& bundle, const ReferenceSet& refset, int m,
                                 const ShapleyEstimator& estimator) {
  if (m < 1) throw ValidationError("top-m must be >= 1, got " + std::to_string(m));
  CandidatePool pool;
  pool.m = m;
  pool.class_index = refset.target_class;
  for (int k = 0; k < refset.size(); ++k) {
    const FeatureMap& h = refset.entries[k].features;
    const ShapleyMap s = estimator.Compute(bundle, h, refset.target_class);
    const int n = s.side();
    std::vector<int> order(static_cast<std::size_t>(n) * n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return s.s.data()[a] > s.s.data()[b]; });
    const int keep = std::min<int>(m, static_cast<int>(order.size()));
    for (int r = 0; r < keep; ++r) {
      const GridCoord at = CenterCoord(order[r], n);
      pool.candidates.push_back({k, at, s.s(at.row, at.col), h.Column(at)});
    }
  }
  return pool;
}

ArrayPayload PoolToPayload(const CandidatePool& pool) {
  const std::size_t width = pool.empty() ? 4 : 4 + pool.candidates.front().vector.size();
  ArrayPayload payload;
  payload.shape = {static_cast<int64_t>(pool.size()), static_cast<int64_t>(width)};
  payload.values.reserve(pool.size() * width);
  for (const Candidate& c : pool.candidates) {
    payload.values.insert(payload.values.end(),
                          {static_cast<double>(c.k), static_cast<double>(c.at.row),
                           static_cast<double>(c.at.col), c.shapley});
    payload.values.insert(payload.values.end(), c.vector.begin(), c.vector.end());
  }
  return payload;
}

CandidatePool PoolFromPayload(const ArrayPayload& payload, int m, int class_index) {
  if (payload.shape.size() != 2 || payload.shape[1] < 4 ||
      payload.values.size() != static_cast<std::size_t>(payload.shape[0] * payload.shape[1])) {
    throw ValidationError("candidate pool payload has an invalid shape");
  }
  CandidatePool pool;
  pool.m = m;
  pool.class_index = class_index;
  const std::size_t width = static_cast<std::size_t>(payload.shape[1]);
  for (int64_t r = 0; r < payload.shape[0]; ++r) {
    const double* row = payload.values.data() + r * width;
    Candidate c;
    c.k = static_cast<int>(row[0]);
    c.at = {static_cast<int>(row[1]), static_cast<int>(row[2])};
    c.shapley = row[3];
    c.vector.assign(row + 4, row + width);
    pool.candidates.push_back(std::move(c));
  }
  return pool;
}

GridCoord SelectTarget(const ShapleyMap& s, const std::set<GridCoord>& replaced) {
  const int n = s.side();
  bool found = false;
  GridCoord best;
  double best_value = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (replaced.contains({i, j})) continue;
      if (!found || s.s(i, j) > best_value) {
        found = true;
        best = {i, j};
        best_value = s.s(i, j);
      }
    }
  }
  if (!found) throw ExhaustionError("every grid location has been replaced");
  return best;
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine similarity of unequal lengths");
  const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (na * nb), -1.0,
                    1.0);
}

CandidateScore ScoreCandidate(const ModelBundle& bundle, const FeatureMap& h, GridCoord target,
                              const Candidate& candidate, int class_a, double sim_weight) {
  if (static_cast<int>(candidate.vector.size()) != h.channels()) {
    throw ValidationError("candidate length " + std::to_string(candidate.vector.size()) +
                          " does not match channel count " + std::to_string(h.channels()));
  }
  if (class_a < 0 || class_a >= bundle.class_count()) {
    throw ValidationError("class index out of range: " + std::to_string(class_a));
  }
  CandidateScore score;
  score.l_sim = CosineSimilarity(h.Column(target), candidate.vector);
  FeatureMap modified = h;
  modified.SetColumn(target, candidate.vector);
  score.scores = PredictFromFeatures(bundle, modified);
  score.l_cls = score.scores.LogProbability(class_a);
  score.l_tot = sim_weight * score.l_sim + score.l_cls;
  return score;
}

BestCandidateResult BestCandidate(const ModelBundle& bundle, const FeatureMap& h,
                                  GridCoord target, const CandidatePool& pool, int class_a,
                                  double sim_weight) {
  if (pool.empty()) throw ConfigError("candidate pool is empty");
  BestCandidateResult best;
  auto key = [&](std::size_t i) {
    const Candidate& c = pool.candidates[i];
    return std::tuple(c.k, c.at.row, c.at.col);
  };
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CandidateScore score =
        ScoreCandidate(bundle, h, target, pool.candidates[i], class_a, sim_weight);
    const bool better = i == 0 || score.l_tot > best.score.l_tot ||
                        (score.l_tot == best.score.l_tot && key(i) < key(best.index));
    if (better) {
      best.index = i;
      best.score = std::move(score);
    }
  }
  return best;
}

std::string StatusName(CounterfactualStatus status) {
  return status == CounterfactualStatus::kSuccess ? "success" : "failure";
}

CounterfactualResult GenerateCounterfactual(const ModelBundle& bundle, const FeatureMap& h0,
                                            int true_class, const CandidatePool& pool,
                                            const ShapleyEstimator& estimator,
                                            const CounterfactualConfig& config) {
  if (config.max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (true_class < 0 || true_class >= bundle.class_count()) {
    throw ValidationError("true class out of range: " + std::to_string(true_class));
  }
  CounterfactualResult result;
  result.h0 = h0;
  result.h_star = h0;
  result.true_class = true_class;
  ClassScores scores = PredictFromFeatures(bundle, h0);
  result.original_class = scores.predicted_class;
  result.s0 = estimator.Compute(bundle, h0, result.original_class, 0);

  std::set<GridCoord> replaced;
  FeatureMap& h = result.h_star;
  while (scores.predicted_class != true_class) {
    const int t = static_cast<int>(result.trace.size());
    if (t == config.max_iters) {
      result.failure_reason = "max_iters";
      break;
    }
    const ShapleyMap s = t == 0 ? result.s0 : estimator.Compute(bundle, h, scores.predicted_class, t);
    GridCoord target;
    try {
      target = SelectTarget(s, replaced);
    } catch (const ExhaustionError&) {
      result.failure_reason = "exhausted";
      break;
    }
    BestCandidateResult best =
        BestCandidate(bundle, h, target, pool, true_class, config.sim_weight);
    const Candidate& chosen = pool.candidates[best.index];
    h.SetColumn(target, chosen.vector);
    replaced.insert(target);
    scores = best.score.scores;
    result.trace.push_back({t, target, best.index, chosen.k, chosen.at, best.score.l_sim,
                            best.score.l_cls, best.score.l_tot, std::move(best.score.scores)});
  }
  result.iterations = static_cast<int>(result.trace.size());
  result.final_scores = PredictFromFeatures(bundle, h);
  result.status = result.final_scores.predicted_class == true_class
                      ? CounterfactualStatus::kSuccess
                      : CounterfactualStatus::kFailure;
  result.s_star = estimator.Compute(bundle, h, true_class, result.iterations);
  return result;
}

FeatureMap ReplayTrace(const FeatureMap& h0, const std::vector<ReplacementStep>& trace,
                       const CandidatePool& pool) {
  FeatureMap h = h0;
  for (const ReplacementStep& step : trace) {
    if (step.candidate_index >= pool.size()) {
      throw ValidationError("trace refers to candidate " + std::to_string(step.candidate_index) +
                            " outside the pool");
    }
    h.SetColumn(step.target, pool.candidates[step.candidate_index].vector);
  }
  return h;
}

}  // namespace finecf
