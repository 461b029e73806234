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

#include "finecf/evaluation.h"

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "finecf/errors.h"
#include "test_support.h"

namespace finecf {
namespace {

struct Fixture {
  const ModelBundle* bundle;
  Image image;
  int label;
};

Fixture ValImage(int index) {
  const auto& world = testing::SharedToyWorld();
  const SampleRef& ref = world.dataset.val[index];
  return {world.bundle.get(), LoadSample(world.dataset, ref).image, ref.label};
}

Grid RandomSaliency(int h, int w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid g(h, w);
  for (Eigen::Index e = 0; e < g.size(); ++e) g.data()[e] = u(rng);
  return g;
}

// Pixel indices by descending saliency, ties in row-major order.
std::vector<int> RankOrder(const Grid& saliency) {
  std::vector<int> order(saliency.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return saliency.data()[a] > saliency.data()[b];
  });
  return order;
}

Image Composite(const Image& base, const Image& source, const std::vector<int>& order, int count) {
  Image out = base;
  const int area = base.height() * base.width();
  for (int r = 0; r < count; ++r) {
    for (int c = 0; c < base.channels(); ++c) {
      out.data()[c * area + order[r]] = source.data()[c * area + order[r]];
    }
  }
  return out;
}

TEST(CurveArithmeticTest, StepCountsAndPixelBudget) {
  EXPECT_EQ(CurveStepCount(0.018), 56);
  EXPECT_EQ(CurveStepCount(0.25), 4);
  EXPECT_EQ(CurveStepCount(0.1), 10);
  EXPECT_EQ(CurveStepCount(1.0), 1);
  EXPECT_EQ(CurveStepCount(0.3), 4);
  EXPECT_THROW(CurveStepCount(0.0), ValidationError);
  EXPECT_THROW(CurveStepCount(-0.1), ValidationError);
  EXPECT_THROW(CurveStepCount(1.5), ValidationError);

  const int total = 64 * 64;
  EXPECT_EQ(PixelsAfterStep(0, 0.018, total), 0);
  EXPECT_EQ(PixelsAfterStep(1, 0.018, total), 74);    // ceil(73.728)
  EXPECT_EQ(PixelsAfterStep(10, 0.018, total), 738);  // ceil(737.28)
  EXPECT_EQ(PixelsAfterStep(55, 0.018, total), 4056);  // ceil(4055.04)
  EXPECT_EQ(PixelsAfterStep(56, 0.018, total), total);
  EXPECT_EQ(PixelsAfterStep(2, 0.25, 224 * 224), 224 * 224 / 2);
  for (int k = 1; k <= 56; ++k) {
    EXPECT_GT(PixelsAfterStep(k, 0.018, total), PixelsAfterStep(k - 1, 0.018, total));
  }
}

TEST(CurveTest, FiftySixStepsWithExactPixelAudit) {
  const Fixture f = ValImage(0);
  const Grid saliency = RandomSaliency(64, 64, 1);
  const std::vector<int> order = RankOrder(saliency);
  for (CurveKind kind : {CurveKind::kDeletion, CurveKind::kInsertion}) {
    int calls = 0;
    CurveOptions options;
    options.audit = [&](int step, std::span<const uint8_t> replaced) {
      EXPECT_EQ(step, ++calls);
      const int expected = PixelsAfterStep(step, 0.018, 4096);
      EXPECT_EQ(std::count(replaced.begin(), replaced.end(), 1), expected) << step;
      // Exactly the top-ranked pixels.
      for (int r = 0; r < 4096; ++r) {
        if (replaced[order[r]] != (r < expected ? 1 : 0)) {
          ADD_FAILURE() << "step " << step << " rank " << r;
          break;
        }
      }
    };
    const CurveResult curve = kind == CurveKind::kDeletion
                                  ? DeletionCurve(*f.bundle, f.image, saliency, f.label, options)
                                  : InsertionCurve(*f.bundle, f.image, saliency, f.label, options);
    EXPECT_EQ(curve.steps(), 56);
    EXPECT_EQ(calls, 56);
    EXPECT_EQ(curve.kind, kind);
    EXPECT_EQ(curve.class_index, f.label);
    EXPECT_EQ(curve.blur, BlurSpec{});
    EXPECT_EQ(curve.points.front().fraction, 0.0);
    EXPECT_EQ(curve.points.back().fraction, 1.0);
    for (int k = 0; k <= 56; ++k) {
      EXPECT_EQ(curve.points[k].fraction, PixelsAfterStep(k, 0.018, 4096) / 4096.0);
      if (k > 0) {
        EXPECT_GT(curve.points[k].fraction, curve.points[k - 1].fraction);
      }
    }
    EXPECT_EQ(curve.auc, CurveAuc(curve.points));
    EXPECT_GE(curve.auc, 0.0);
    EXPECT_LE(curve.auc, 1.0);
  }
}

TEST(CurveTest, PointsMatchMaterializedImages) {
  const Fixture f = ValImage(3);
  const Grid saliency = RandomSaliency(64, 64, 2);
  const std::vector<int> order = RankOrder(saliency);
  const Image blurred = BlurImage(f.image, BlurSpec{});
  const double p_orig = PredictFromImage(*f.bundle, f.image).probabilities[f.label];
  const double p_blur = PredictFromImage(*f.bundle, blurred).probabilities[f.label];

  const CurveResult del = DeletionCurve(*f.bundle, f.image, saliency, f.label);
  const CurveResult ins = InsertionCurve(*f.bundle, f.image, saliency, f.label);
  EXPECT_NEAR(del.points.front().probability, p_orig, 1e-6);
  EXPECT_NEAR(del.points.back().probability, p_blur, 1e-6);
  EXPECT_NEAR(ins.points.front().probability, p_blur, 1e-6);
  EXPECT_NEAR(ins.points.back().probability, p_orig, 1e-6);
  for (int k : {1, 7, 28, 55}) {
    const int count = PixelsAfterStep(k, 0.018, 4096);
    EXPECT_NEAR(del.points[k].probability,
                PredictFromImage(*f.bundle, Composite(f.image, blurred, order, count))
                    .probabilities[f.label],
                1e-6);
    EXPECT_NEAR(ins.points[k].probability,
                PredictFromImage(*f.bundle, Composite(blurred, f.image, order, count))
                    .probabilities[f.label],
                1e-6);
  }
}

TEST(CurveTest, ConstantSaliencyIgnoresTheConstant) {
  const Fixture f = ValImage(5);
  const CurveResult a = DeletionCurve(*f.bundle, f.image, Grid::Constant(64, 64, 0.0), f.label);
  const CurveResult b = DeletionCurve(*f.bundle, f.image, Grid::Constant(64, 64, 7.5), f.label);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    EXPECT_EQ(a.points[k].probability, b.points[k].probability);
  }
  EXPECT_EQ(a.auc, b.auc);
}

TEST(CurveTest, ZeroVarianceImageGivesFlatCurve) {
  const auto& world = testing::SharedToyWorld();
  const Image flat(Shape3{3, 64, 64}, 0.4);
  for (bool insertion : {false, true}) {
    const Grid saliency = RandomSaliency(64, 64, 3);
    const CurveResult c = insertion ? InsertionCurve(*world.bundle, flat, saliency, 2)
                                    : DeletionCurve(*world.bundle, flat, saliency, 2);
    const double p0 = c.points.front().probability;
    for (const CurvePoint& p : c.points) EXPECT_NEAR(p.probability, p0, 1e-9);
    EXPECT_NEAR(c.auc, p0, 1e-9);
  }
}

TEST(CurveTest, CustomStepAndBlurAreRecorded) {
  const Fixture f = ValImage(1);
  CurveOptions options;
  options.step_fraction = 0.25;
  options.blur = {5, 1.5};
  const CurveResult c = InsertionCurve(*f.bundle, f.image, RandomSaliency(64, 64, 4), f.label,
                                       options);
  EXPECT_EQ(c.steps(), 4);
  EXPECT_EQ(c.step_fraction, 0.25);
  EXPECT_EQ(c.blur, (BlurSpec{5, 1.5}));
  EXPECT_NEAR(c.points.front().probability,
              PredictFromImage(*f.bundle, BlurImage(f.image, options.blur)).probabilities[f.label],
              1e-6);
}

TEST(CurveTest, RejectsMismatchedSaliency) {
  const Fixture f = ValImage(0);
  EXPECT_THROW(DeletionCurve(*f.bundle, f.image, Grid::Zero(64, 63), f.label), ValidationError);
  EXPECT_THROW(InsertionCurve(*f.bundle, f.image, Grid::Zero(8, 8), f.label), ValidationError);
}

TEST(CurveAucTest, TrapezoidExamples) {
  const std::vector<CurvePoint> three = {{0.0, 0.2}, {0.5, 0.8}, {1.0, 0.4}};
  EXPECT_NEAR(CurveAuc(three), 0.55, 1e-15);
  const std::vector<CurvePoint> line = {{0.0, 0.0}, {1.0, 1.0}};
  EXPECT_DOUBLE_EQ(CurveAuc(line), 0.5);
  std::vector<CurvePoint> flat;
  for (int k = 0; k <= 56; ++k) flat.push_back({PixelsAfterStep(k, 0.018, 4096) / 4096.0, 0.37});
  EXPECT_NEAR(CurveAuc(flat), 0.37, 1e-12);
}

TEST(CurveAucTest, RejectsShortOrUnsortedCurves) {
  const std::vector<CurvePoint> one = {{0.0, 0.5}};
  const std::vector<CurvePoint> unsorted = {{0.0, 0.1}, {0.6, 0.2}, {0.4, 0.3}, {1.0, 0.2}};
  const std::vector<CurvePoint> repeated = {{0.0, 0.1}, {0.5, 0.2}, {0.5, 0.3}, {1.0, 0.2}};
  EXPECT_THROW(CurveAuc(one), ValidationError);
  EXPECT_THROW(CurveAuc(unsorted), ValidationError);
  EXPECT_THROW(CurveAuc(repeated), ValidationError);
}

TEST(CompactScoreTest, FullSupportIdentity) {
  for (int n : {7, 8, 14}) {
    const CompactScore s = CompactActivationScore(Grid::Ones(n, n), Grid::Ones(n, n));
    EXPECT_DOUBLE_EQ(s.c, 1.0);
    EXPECT_EQ(s.p_t, n * n);
    EXPECT_EQ(s.p_a, n * n);
    EXPECT_DOUBLE_EQ(s.xi, 1.0);
    EXPECT_EQ(s.epsilon, 1e-8);
  }
}

TEST(CompactScoreTest, FourActiveCellsGiveSixteen) {
  // global: max 2, so g-hat sums to (2 + 4 * 0.5 + 59 * 0) / 2 ... built so sum(g-hat) = 4.
  Grid global = Grid::Zero(8, 8);
  global(0, 0) = 2.0;
  global(3, 3) = 2.0;
  global(5, 1) = 1.0;
  global(7, 7) = 1.0;
  global(2, 6) = 1.0;
  global(6, 2) = 1.0;  // g-hat: 1 + 1 + 4 * 0.5 = 4
  Grid dom = Grid::Zero(8, 8);
  dom(1, 1) = 0.5;
  dom(1, 2) = 1.5;
  dom(4, 4) = 1.0;
  dom(6, 5) = 1.0;  // sum 4
  const CompactScore s = CompactActivationScore(dom, global);
  EXPECT_DOUBLE_EQ(s.c, 1.0);
  EXPECT_EQ(s.p_t, 64);
  EXPECT_EQ(s.p_a, 4);
  EXPECT_DOUBLE_EQ(s.xi, 16.0);
}

TEST(CompactScoreTest, ZeroMapsAndErrors) {
  const CompactScore zero = CompactActivationScore(Grid::Zero(8, 8), Grid::Ones(8, 8));
  EXPECT_EQ(zero.xi, 0.0);
  EXPECT_EQ(zero.p_a, 0);
  const CompactScore no_global = CompactActivationScore(Grid::Ones(8, 8), Grid::Zero(8, 8));
  EXPECT_EQ(no_global.c, 0.0);
  EXPECT_EQ(no_global.xi, 0.0);
  // Below-epsilon entries are not support.
  Grid tiny = Grid::Constant(8, 8, 1e-9);
  EXPECT_EQ(CompactActivationScore(tiny, Grid::Ones(8, 8)).p_a, 0);
  Grid negative = Grid::Ones(8, 8);
  negative(2, 2) = -1e-3;
  EXPECT_THROW(CompactActivationScore(negative, Grid::Ones(8, 8)), ValidationError);
  EXPECT_THROW(CompactActivationScore(Grid::Ones(8, 8), negative), ValidationError);
  EXPECT_THROW(CompactActivationScore(Grid::Ones(8, 8), Grid::Ones(7, 7)), ValidationError);
}

TEST(CompactScoreTest, ShrinkingSupportNeverLowersXi) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Grid dom(8, 8), global(8, 8);
    for (Eigen::Index e = 0; e < 64; ++e) {
      dom.data()[e] = u(rng) < 0.4 ? 0.0 : u(rng);
      global.data()[e] = u(rng);
    }
    std::vector<double> thresholds(dom.data(), dom.data() + 64);
    thresholds.push_back(1e-8);
    std::sort(thresholds.begin(), thresholds.end());
    double previous = -1.0;
    int previous_pa = 65;
    for (double eps : thresholds) {
      const CompactScore s = CompactActivationScore(dom, global, eps);
      if (s.p_a == 0) break;
      EXPECT_LE(s.p_a, previous_pa);
      EXPECT_GE(s.xi, previous);
      previous = s.xi;
      previous_pa = s.p_a;
    }
  }
}

TEST(GlobalActivationMapTest, MatchesLoopOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const FeatureMap h = testing::RandomFeatureMap({6, 7, 7}, 44);
  Grid s(7, 7);
  for (Eigen::Index e = 0; e < s.size(); ++e) s.data()[e] = u(rng);
  const Grid g = GlobalActivationMap(s, h);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) {
      double mean = 0.0;
      for (int c = 0; c < 6; ++c) mean += h.values().at(c, i, j);
      mean /= 6;
      EXPECT_NEAR(g(i, j), std::max(0.0, s(i, j) * mean), 1e-12);
    }
  }
  EXPECT_THROW(GlobalActivationMap(Grid::Ones(8, 8), h), ValidationError);
}

TEST(KeypointInclusionTest, PatchFixture) {
  Grid dom = Grid::Zero(64, 64);
  dom.block(10, 20, 5, 5).setConstant(0.2);
  const std::vector<Keypoint> kps = {
      {1, 22.0, 12.0, true},   // inside
      {2, 24.4, 14.4, true},   // inside after rounding
      {3, 25.0, 12.0, true},   // column 25, just outside
      {4, 40.0, 40.0, true},
      {5, 0.0, 0.0, true},
      {6, 21.0, 11.0, false},  // inside but not visible
      {7, 63.2, 63.4, true},
      {8, 70.0, 5.0, true},    // out of bounds
      {9, -3.0, 5.0, true},    // out of bounds
  };
  const FineGrainedStats stats = KeypointInclusion(dom, kps);
  EXPECT_EQ(stats.keypoints_hit, 2);
  EXPECT_EQ(stats.keypoints_total, 6);
  EXPECT_EQ(stats.active_pixels, 25);
  EXPECT_NEAR(stats.mean_contribution, 0.2, 1e-15);
  EXPECT_EQ(stats.warnings, 2);
  EXPECT_LE(stats.keypoints_hit, stats.keypoints_total);
}

TEST(KeypointInclusionTest, EmptyAndFullSupport) {
  std::vector<Keypoint> parts;
  for (int p = 0; p < 15; ++p) parts.push_back({p + 1, 10.0 + 12 * p, 30.0 + 5 * p, true});
  const FineGrainedStats none = KeypointInclusion(Grid::Zero(224, 224), parts);
  EXPECT_EQ(none.keypoints_hit, 0);
  EXPECT_EQ(none.active_pixels, 0);
  EXPECT_EQ(none.mean_contribution, 0.0);
  const FineGrainedStats all = KeypointInclusion(Grid::Constant(224, 224, 0.01), parts);
  EXPECT_EQ(all.keypoints_hit, 15);
  EXPECT_EQ(all.keypoints_total, 15);
  EXPECT_EQ(all.active_pixels, 224 * 224);
}

TEST(InformedOrderingTest, PartRegionMapsBeatRandomMaps) {
  const testing::PartVsRandomReport report =
      testing::PartVsRandomDeletion(testing::SharedToyWorld(), 50, 2026);
  EXPECT_EQ(report.trials, 50);
  EXPECT_GE(report.part_wins, 45) << "part " << report.mean_part_auc << " random "
                                  << report.mean_random_auc;
  EXPECT_LT(report.mean_part_auc, report.mean_random_auc);
}

}  // namespace
}  // namespace finecf
