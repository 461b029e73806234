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
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "finecf/errors.h"
#include "test_support.h"

namespace finecf {
namespace {

ShapleyMap MapOf(const Grid& values) {
  ShapleyMap s;
  s.s = values;
  return s;
}

const ReferenceSet& ToyReferences(int cls) {
  static std::map<int, ReferenceSet> cache;
  if (!cache.contains(cls)) {
    const auto& world = testing::SharedToyWorld();
    cache[cls] = BuildReferenceSet(*world.bundle, world.dataset, cls, kDefaultReferenceSize);
  }
  return cache.at(cls);
}

const CandidatePool& ToyPool(int cls) {
  static std::map<int, CandidatePool> cache;
  if (!cache.contains(cls)) {
    const ShapleyEstimator estimator(8, ShapleySettings{});
    cache[cls] = BuildCandidatePool(*testing::SharedToyWorld().bundle, ToyReferences(cls),
                                    kDefaultTopM, estimator);
  }
  return cache.at(cls);
}

// Two channels, identity weights: logit c is the spatial mean of channel c.
ModelBundle TwoClassBundle(int side) {
  return testing::LinearHeadBundle(2, side, {1.0, 0.0, 0.0, 1.0});
}

FeatureMap UniformMap(int side, std::vector<double> column) {
  FeatureMap h(Tensor3({static_cast<int>(column.size()), side, side}));
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) h.SetColumn({i, j}, column);
  }
  return h;
}

TEST(ReferenceSetTest, FirstTwentyCorrectSamplesInDatasetOrder) {
  const auto& world = testing::SharedToyWorld();
  const int cls = 3;
  const ReferenceSet& refs = ToyReferences(cls);
  ASSERT_EQ(refs.size(), 20);
  EXPECT_EQ(refs.target_class, cls);
  std::vector<std::string> expected;
  for (const SampleRef& s : world.dataset.train) {
    if (s.label != cls) continue;
    if (PredictFromImage(*world.bundle, LoadSample(world.dataset, s).image).predicted_class != cls) {
      continue;
    }
    expected.push_back(s.sample_id);
    if (expected.size() == 20) break;
  }
  ASSERT_EQ(expected.size(), 20u);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(refs.entries[i].sample_id, expected[i]);
    EXPECT_EQ(refs.entries[i].label, cls);
    EXPECT_EQ(PredictFromFeatures(*world.bundle, refs.entries[i].features).predicted_class, cls);
  }
}

TEST(ReferenceSetTest, RejectsSizeZeroAndReportsShortfall) {
  const auto& world = testing::SharedToyWorld();
  EXPECT_THROW(BuildReferenceSet(*world.bundle, world.dataset, 0, 0), ValidationError);
  // All-zero weights tie every logit, so every sample is predicted as class 0.
  Architecture arch = BuildToyArchitecture(8, true);
  BundleInfo info = world.bundle->info();
  info.model_id = "zero";
  const ModelBundle zero(info, arch.extractor, arch.head);
  try {
    BuildReferenceSet(zero, world.dataset, 3, 20);
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("only 0"), std::string::npos) << e.what();
  }
  try {
    BuildReferenceSet(zero, world.dataset, 0, 150);
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("only 100"), std::string::npos) << e.what();
  }
}

TEST(CandidatePoolTest, TopMPerReferenceMatchesFullSort) {
  const auto& world = testing::SharedToyWorld();
  const ReferenceSet& refs = ToyReferences(3);
  const ShapleyEstimator estimator(8, ShapleySettings{});
  const CandidatePool& pool = ToyPool(3);
  ASSERT_EQ(pool.size(), 200u);
  EXPECT_EQ(pool.class_index, 3);
  for (int k = 0; k < 20; ++k) {
    const ShapleyMap s = estimator.Compute(*world.bundle, refs.entries[k].features, 3);
    std::vector<double> all(s.s.data(), s.s.data() + 64);
    std::sort(all.begin(), all.end(), std::greater<>());
    std::vector<double> got;
    for (const Candidate& c : pool.candidates) {
      if (c.k != k) continue;
      got.push_back(c.shapley);
      EXPECT_EQ(c.shapley, s.s(c.at.row, c.at.col));
      EXPECT_EQ(c.vector, refs.entries[k].features.Column(c.at));
    }
    ASSERT_EQ(got.size(), 10u);
    std::sort(got.begin(), got.end(), std::greater<>());
    EXPECT_EQ(got, std::vector<double>(all.begin(), all.begin() + 10));
  }
}

TEST(CandidatePoolTest, SaturatesAtEveryLocation) {
  const auto& world = testing::SharedToyWorld();
  const ShapleyEstimator estimator(8, ShapleySettings{});
  for (int m : {64, 100}) {
    const CandidatePool pool = BuildCandidatePool(*world.bundle, ToyReferences(3), m, estimator);
    ASSERT_EQ(pool.size(), 20u * 64u);
    std::set<std::tuple<int, int, int>> seen;
    for (const Candidate& c : pool.candidates) seen.insert({c.k, c.at.row, c.at.col});
    EXPECT_EQ(seen.size(), 20u * 64u);
  }
  EXPECT_THROW(BuildCandidatePool(*world.bundle, ToyReferences(3), 0, estimator), ValidationError);
}

TEST(CandidatePoolTest, PayloadRoundTrip) {
  const CandidatePool& pool = ToyPool(3);
  EXPECT_EQ(PoolFromPayload(PoolToPayload(pool), pool.m, pool.class_index), pool);
  EXPECT_THROW(PoolFromPayload({{3}, {1, 2, 3}}, 1, 0), ValidationError);
}

TEST(SelectTargetTest, ArgmaxExcludingReplacedWithRowMajorTies) {
  Grid g = Grid::Zero(8, 8);
  g(2, 5) = 3.0;
  g(6, 1) = 2.0;
  g(0, 7) = 1.0;
  EXPECT_EQ(SelectTarget(MapOf(g), {}), (GridCoord{2, 5}));
  EXPECT_EQ(SelectTarget(MapOf(g), {{2, 5}}), (GridCoord{6, 1}));
  EXPECT_EQ(SelectTarget(MapOf(Grid::Constant(8, 8, 0.25)), {}), (GridCoord{0, 0}));
  EXPECT_EQ(SelectTarget(MapOf(Grid::Constant(8, 8, 0.25)), {{0, 0}, {0, 1}}), (GridCoord{0, 2}));
  const std::set<GridCoord> all = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  EXPECT_THROW(SelectTarget(MapOf(Grid::Zero(2, 2)), all), ExhaustionError);
}

TEST(SelectTargetTest, MatchesSortOracleOnRandomMaps) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Grid g(8, 8);
    for (Eigen::Index e = 0; e < g.size(); ++e) g.data()[e] = u(rng);
    std::vector<int> order(64);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return g.data()[a] > g.data()[b]; });
    std::set<GridCoord> replaced;
    for (int r = 0; r < 64; ++r) {
      const GridCoord t = SelectTarget(MapOf(g), replaced);
      EXPECT_EQ(t, CenterCoord(order[r], 8));
      replaced.insert(t);
    }
  }
}

TEST(ScoreCandidateTest, SimilarityCases) {
  const auto& world = testing::SharedToyWorld();
  const FeatureMap h = testing::RandomFeatureMap({32, 8, 8}, 21);
  const GridCoord target{4, 2};
  const Candidate same{0, {0, 0}, 0.0, h.Column(target)};
  EXPECT_NEAR(ScoreCandidate(*world.bundle, h, target, same, 1).l_sim, 1.0, 1e-12);

  FeatureMap sparse(Tensor3({32, 8, 8}));
  std::vector<double> e0(32, 0.0), e1(32, 0.0);
  e0[0] = 2.0;
  e1[1] = 5.0;
  sparse.SetColumn(target, e0);
  const Candidate orthogonal{0, {0, 0}, 0.0, e1};
  EXPECT_EQ(ScoreCandidate(*world.bundle, sparse, target, orthogonal, 1).l_sim, 0.0);
  // Zero-norm target column.
  EXPECT_EQ(ScoreCandidate(*world.bundle, sparse, {0, 0}, orthogonal, 1).l_sim, 0.0);
  EXPECT_EQ(CosineSimilarity(std::vector<double>(4, 0.0), std::vector<double>{1, 2, 3, 4}), 0.0);
  const Candidate short_vector{0, {0, 0}, 0.0, std::vector<double>(31, 1.0)};
  EXPECT_THROW(ScoreCandidate(*world.bundle, h, target, short_vector, 1), ValidationError);
}

TEST(ScoreCandidateTest, ClassTermMatchesMaterializedMap) {
  const auto& world = testing::SharedToyWorld();
  const CandidatePool& pool = ToyPool(3);
  const FeatureMap h = world.bundle->ExtractFeatures(
      LoadSample(world.dataset, world.dataset.Find(world.mined.front().sample_id)).image);
  const FeatureMap before = h;
  for (std::size_t i = 0; i < pool.size(); i += 17) {
    const GridCoord target{static_cast<int>(i % 8), static_cast<int>((i / 8) % 8)};
    const CandidateScore score = ScoreCandidate(*world.bundle, h, target, pool.candidates[i], 3);
    FeatureMap modified = h;
    modified.SetColumn(target, pool.candidates[i].vector);
    const double oracle = std::log(PredictFromFeatures(*world.bundle, modified).probabilities[3]);
    EXPECT_NEAR(score.l_cls, oracle, 1e-6);
    EXPECT_LE(score.l_cls, 0.0);
    EXPECT_GE(score.l_sim, -1.0);
    EXPECT_LE(score.l_sim, 1.0);
    EXPECT_EQ(score.l_tot, score.l_sim + score.l_cls);
    const CandidateScore weighted =
        ScoreCandidate(*world.bundle, h, target, pool.candidates[i], 3, 0.25);
    EXPECT_DOUBLE_EQ(weighted.l_tot, 0.25 * weighted.l_sim + weighted.l_cls);
  }
  EXPECT_EQ(h.values(), before.values());
}

TEST(BestCandidateTest, SingleEntryAndExhaustiveRecheck) {
  const auto& world = testing::SharedToyWorld();
  const CandidatePool& pool = ToyPool(3);
  const FeatureMap h = testing::RandomFeatureMap({32, 8, 8}, 5);
  CandidatePool one;
  one.candidates = {pool.candidates[7]};
  EXPECT_EQ(BestCandidate(*world.bundle, h, {1, 1}, one, 3).index, 0u);

  const BestCandidateResult best = BestCandidate(*world.bundle, h, {2, 3}, pool, 3);
  for (const Candidate& c : pool.candidates) {
    EXPECT_GE(best.score.l_tot, ScoreCandidate(*world.bundle, h, {2, 3}, c, 3).l_tot);
  }
  EXPECT_THROW(BestCandidate(*world.bundle, h, {2, 3}, CandidatePool{}, 3), ConfigError);
}

TEST(BestCandidateTest, EqualScoresGoToSmallestKIJ) {
  const auto& world = testing::SharedToyWorld();
  const FeatureMap h = testing::RandomFeatureMap({32, 8, 8}, 6);
  const std::vector<double> v = ToyPool(3).candidates[0].vector;
  CandidatePool pool;
  pool.candidates = {{4, {1, 1}, 0.0, v}, {2, {5, 0}, 0.0, v}, {2, {3, 7}, 0.0, v},
                     {2, {3, 6}, 0.0, v}, {9, {0, 0}, 0.0, v}};
  const BestCandidateResult best = BestCandidate(*world.bundle, h, {0, 0}, pool, 3);
  EXPECT_EQ(best.index, 3u);
}

TEST(GenerateCounterfactualTest, AlreadyCorrectIsImmediateSuccess) {
  const ModelBundle bundle = TwoClassBundle(2);
  const FeatureMap h0 = UniformMap(2, {1.0, 0.2});
  CandidatePool pool;
  pool.candidates = {{0, {0, 0}, 0.0, {0.0, 1.0}}};
  const ShapleyEstimator estimator(2, ShapleySettings{});
  const CounterfactualResult r = GenerateCounterfactual(bundle, h0, 0, pool, estimator);
  EXPECT_EQ(r.status, CounterfactualStatus::kSuccess);
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.h_star.values(), h0.values());
  EXPECT_EQ(r.original_class, 0);
}

TEST(GenerateCounterfactualTest, HandBuiltSwapFlipsInOneIteration) {
  // Logits are channel means: (1, 0.8) -> class 0. Writing (0, 2) into any
  // cell of the 2x2 grid gives (0.75, 1.1) -> class 1.
  const ModelBundle bundle = TwoClassBundle(2);
  const FeatureMap h0 = UniformMap(2, {1.0, 0.8});
  ASSERT_EQ(PredictFromFeatures(bundle, h0).predicted_class, 0);
  CandidatePool pool;
  pool.candidates = {{0, {1, 1}, 0.5, {0.0, 2.0}}};
  const ShapleyEstimator estimator(2, ShapleySettings{});
  const CounterfactualResult r = GenerateCounterfactual(bundle, h0, 1, pool, estimator);
  EXPECT_EQ(r.status, CounterfactualStatus::kSuccess);
  EXPECT_EQ(r.iterations, 1);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].scores_after.predicted_class, 1);
  EXPECT_EQ(PredictFromFeatures(bundle, r.h_star).predicted_class, 1);
  EXPECT_EQ(r.s0.class_index, 0);
  EXPECT_EQ(r.s_star.class_index, 1);
}

TEST(GenerateCounterfactualTest, ZeroEffectPoolFails) {
  // Every column equals the pool vector, so each write is a no-op.
  const ModelBundle bundle = TwoClassBundle(2);
  const FeatureMap h0 = UniformMap(2, {1.0, 0.8});
  CandidatePool pool;
  pool.candidates = {{0, {0, 0}, 0.0, {1.0, 0.8}}, {1, {0, 1}, 0.0, {1.0, 0.8}}};
  const ShapleyEstimator estimator(2, ShapleySettings{});

  CounterfactualConfig config;
  config.max_iters = 3;
  const CounterfactualResult capped = GenerateCounterfactual(bundle, h0, 1, pool, estimator, config);
  EXPECT_EQ(capped.status, CounterfactualStatus::kFailure);
  EXPECT_EQ(capped.failure_reason, "max_iters");
  EXPECT_EQ(capped.iterations, 3);

  const CounterfactualResult exhausted = GenerateCounterfactual(bundle, h0, 1, pool, estimator);
  EXPECT_EQ(exhausted.status, CounterfactualStatus::kFailure);
  EXPECT_EQ(exhausted.failure_reason, "exhausted");
  EXPECT_EQ(exhausted.iterations, 4);
  for (const ReplacementStep& step : exhausted.trace) {
    EXPECT_NE(step.scores_after.predicted_class, 1);
  }
  EXPECT_EQ(exhausted.h_star.values(), h0.values());
}

// Invariants of the loop on real mined misclassifications.
TEST(GenerateCounterfactualTest, MinedSamplesSatisfyLoopInvariants) {
  const auto& world = testing::SharedToyWorld();
  const ShapleyEstimator estimator(8, ShapleySettings{});
  ASSERT_GE(world.mined.size(), 10u);
  for (std::size_t s = 0; s < 10; ++s) {
    const MisclassifiedSample& m = world.mined[s];
    const CandidatePool& pool = ToyPool(m.true_class);
    const CandidatePool pool_before = pool;
    const FeatureMap h0 = world.bundle->ExtractFeatures(
        LoadSample(world.dataset, world.dataset.Find(m.sample_id)).image);
    const CounterfactualResult r =
        GenerateCounterfactual(*world.bundle, h0, m.true_class, pool, estimator);
    EXPECT_EQ(pool, pool_before);
    EXPECT_EQ(r.original_class, m.predicted_class);
    EXPECT_EQ(r.iterations, static_cast<int>(r.trace.size()));

    FeatureMap h = h0;
    std::set<GridCoord> targets;
    for (const ReplacementStep& step : r.trace) {
      EXPECT_TRUE(targets.insert(step.target).second) << "revisited target";
      const FeatureMap prev = h;
      h.SetColumn(step.target, pool.candidates[step.candidate_index].vector);
      for (int c = 0; c < h.channels(); ++c) {
        for (int i = 0; i < 8; ++i) {
          for (int j = 0; j < 8; ++j) {
            if (GridCoord{i, j} == step.target) continue;
            EXPECT_EQ(h.values().at(c, i, j), prev.values().at(c, i, j));
          }
        }
      }
      EXPECT_EQ(PredictFromFeatures(*world.bundle, h), step.scores_after);
      EXPECT_EQ(step.l_tot, step.l_sim + step.l_cls);
    }
    EXPECT_EQ(ReplayTrace(h0, r.trace, pool).values(), r.h_star.values());
    const bool reached = PredictFromFeatures(*world.bundle, r.h_star).predicted_class == m.true_class;
    EXPECT_EQ(r.status == CounterfactualStatus::kSuccess, reached);
    for (int c = 0; c < h0.channels(); ++c) {
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          if (targets.contains({i, j})) continue;
          EXPECT_EQ(r.h_star.values().at(c, i, j), h0.values().at(c, i, j));
        }
      }
    }
  }
}

}  // namespace
}  // namespace finecf
