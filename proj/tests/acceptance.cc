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

// End-to-end acceptance checks on the toy setup. Prints one PASS/FAIL line
// per check and exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "finecf/cli_reporter.h"
#include "finecf/contrastive_explainer.h"
#include "finecf/counterfactual_engine.h"
#include "finecf/evaluation.h"
#include "finecf/saliency_partition.h"
#include "test_support.h"

namespace finecf {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failure notes; only the first few are kept.
class Notes {
 public:
  void Fail(const std::string& what) {
    ++failures_;
    if (failures_ <= 5) text_ << (failures_ > 1 ? "; " : "") << what;
  }
  void Expect(bool ok, const std::string& what) {
    if (!ok) Fail(what);
  }
  bool ok() const { return failures_ == 0; }
  std::string Summary(const std::string& info) const {
    if (ok()) return info;
    std::ostringstream s;
    s << failures_ << " failure(s): " << text_.str() << " | " << info;
    return s.str();
  }

 private:
  int failures_ = 0;
  std::ostringstream text_;
};

std::string Fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

const CandidatePool& PoolFor(int cls) {
  static std::map<int, CandidatePool> pools;
  if (!pools.contains(cls)) {
    const auto& world = testing::SharedToyWorld();
    const ReferenceSet refs =
        BuildReferenceSet(*world.bundle, world.dataset, cls, kDefaultReferenceSize);
    pools[cls] = BuildCandidatePool(*world.bundle, refs, kDefaultTopM,
                                    ShapleyEstimator(8, ShapleySettings{}));
  }
  return pools.at(cls);
}

FeatureMap FeaturesOf(const std::string& sample_id) {
  const auto& world = testing::SharedToyWorld();
  return world.bundle->ExtractFeatures(
      LoadSample(world.dataset, world.dataset.Find(sample_id)).image);
}

// ------------------------------------------------------------------ 1
Outcome LinearHeadOracle() {
  const auto& world = testing::SharedToyWorld();
  const ModelBundle& bundle = *world.bundle;
  std::map<std::string, const std::vector<double>*> params;
  for (const auto& p : bundle.Parameters()) params[p.name] = p.values;
  Notes notes;
  notes.Expect(!params.contains("fc.bias"), "toy head has a bias");
  const auto& w = *params.at("fc.weight");
  const double sigma = kDefaultSigma;
  const PartitionBank pbank = InvertKernels(BuildKernelBank(8, sigma));
  double max_err = 0.0;
  double slowest = 0.0;
  for (int sample = 0; sample < 5; ++sample) {
    const FeatureMap h = bundle.ExtractFeatures(
        LoadSample(world.dataset, world.dataset.val[sample * 17]).image);
    notes.Expect(h.channels() == 32 && h.side() == 8, "feature shape is not 32x8x8");
    for (int cls = 0; cls < bundle.class_count(); cls += 3) {
      const auto start = Clock::now();
      const ShapleyMap s = ComputeShapleyMap(bundle, h, cls, pbank, ScoreMode::kLogit);
      slowest = std::max(slowest, Seconds(start));
      for (int xc = 0; xc < 8; ++xc) {
        for (int yc = 0; yc < 8; ++yc) {
          double logit = 0.0;
          for (int c = 0; c < 32; ++c) {
            double mean = 0.0;
            for (int i = 0; i < 8; ++i) {
              for (int j = 0; j < 8; ++j) {
                const double d2 = (i - xc) * (i - xc) + (j - yc) * (j - yc);
                mean += h.values().at(c, i, j) * std::exp(-d2 / (2 * sigma * sigma));
              }
            }
            logit += w[cls * 32 + c] * mean / 64.0;
          }
          max_err = std::max(max_err, std::abs(s.s(xc, yc) - logit));
        }
      }
    }
  }
  notes.Expect(max_err < 1e-6, "max error too large");
  notes.Expect(slowest < 5.0, "map took longer than 5 s");
  return {notes.ok(),
          notes.Summary(Fmt("max abs error %.3g, slowest map %.4f s", max_err, slowest))};
}

// ------------------------------------------------------------------ 2
Outcome OcclusionLimit() {
  const auto& world = testing::SharedToyWorld();
  const ModelBundle& bundle = *world.bundle;
  const PartitionBank pbank = InvertKernels(BuildKernelBank(8, 0.2));
  Notes notes;
  double max_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureMap h = testing::RandomFeatureMap({32, 8, 8}, 9000 + trial, 0.0, 2.0);
    const int cls = trial % bundle.class_count();
    const ShapleyMap s = ComputeShapleyMap(bundle, h, cls, pbank, ScoreMode::kProbability);
    const double base = PredictFromFeatures(bundle, h).probabilities[cls];
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        FeatureMap occluded = h;
        occluded.SetColumn({i, j}, std::vector<double>(32, 0.0));
        const double brute = base - PredictFromFeatures(bundle, occluded).probabilities[cls];
        max_err = std::max(max_err, std::abs(s.s(i, j) - brute));
      }
    }
  }
  notes.Expect(max_err <= 1e-4, "exceeds 1e-4");
  return {notes.ok(), notes.Summary(Fmt("10 maps, max abs error %.3g", max_err))};
}

// ------------------------------------------------------------------ 3
Outcome Soundness() {
  const auto& world = testing::SharedToyWorld();
  const ModelBundle& bundle = *world.bundle;
  const ShapleyEstimator estimator(8, ShapleySettings{});
  Notes notes;
  notes.Expect(world.mined.size() >= 30, "fewer than 30 mined samples");
  int successes = 0;
  std::map<std::string, int> failures;
  for (const MisclassifiedSample& m : world.mined) {
    const CandidatePool& pool = PoolFor(m.true_class);
    const FeatureMap h0 = FeaturesOf(m.sample_id);
    const CounterfactualResult r = GenerateCounterfactual(
        bundle, h0, m.true_class, pool, estimator, CounterfactualConfig{.max_iters = 100});
    const std::string tag = m.sample_id + ": ";

    // Replay with plain column writes.
    FeatureMap h = h0;
    std::set<GridCoord> targets;
    for (const ReplacementStep& step : r.trace) {
      notes.Expect(targets.insert(step.target).second, tag + "revisited target");
      h.SetColumn(step.target, pool.candidates[step.candidate_index].vector);
    }
    notes.Expect(std::ranges::equal(h.values().data(), r.h_star.values().data()), tag + "replay differs");
    notes.Expect(std::ranges::equal(ReplayTrace(h0, r.trace, pool).values().data(),
                                   r.h_star.values().data()),
                 tag + "ReplayTrace differs");
    notes.Expect(r.iterations == static_cast<int>(r.trace.size()), tag + "iteration count");
    notes.Expect(r.iterations <= 100, tag + "over max_iters");
    if (r.status == CounterfactualStatus::kSuccess) {
      ++successes;
      notes.Expect(PredictFromFeatures(bundle, r.h_star).predicted_class == m.true_class,
                   tag + "success does not re-verify");
    } else {
      ++failures[r.failure_reason];
      notes.Expect(PredictFromFeatures(bundle, r.h_star).predicted_class != m.true_class,
                   tag + "failure that reaches the true class");
    }
  }
  const double rate =
      world.mined.empty() ? 0.0 : static_cast<double>(successes) / world.mined.size();
  notes.Expect(rate >= 0.8, "success rate below 80%");
  std::ostringstream info;
  info << world.mined.size() << " samples, success rate " << Fmt("%.1f%%", 100 * rate);
  for (const auto& [reason, n] : failures) info << ", " << reason << " " << n;
  return {notes.ok(), notes.Summary(info.str())};
}

// ------------------------------------------------------------------ 4
Outcome ArgmaxExhaustive() {
  const auto& world = testing::SharedToyWorld();
  const ModelBundle& bundle = *world.bundle;
  std::mt19937_64 rng(404);
  Notes notes;
  int tied_triples = 0;
  double max_oracle_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int cls = static_cast<int>(rng() % bundle.class_count());
    const CandidatePool& full = PoolFor(cls);
    const FeatureMap h = trial % 2 == 0
                             ? testing::RandomFeatureMap({32, 8, 8}, 7000 + trial, 0.0, 1.5)
                             : FeaturesOf(world.dataset.val[rng() % world.dataset.val.size()].sample_id);
    const GridCoord target{static_cast<int>(rng() % 8), static_cast<int>(rng() % 8)};
    CandidatePool pool;
    pool.m = full.m;
    pool.class_index = cls;
    const int size = 5 + static_cast<int>(rng() % 20);
    for (int e = 0; e < size; ++e) {
      pool.candidates.push_back(full.candidates[rng() % full.size()]);
    }
    // Copies of one vector under fresh (k, row, col) force ties.
    const int dupes = 1 + static_cast<int>(rng() % 3);
    for (int d = 0; d < dupes; ++d) {
      Candidate c = pool.candidates[rng() % pool.size()];
      c.k = static_cast<int>(rng() % 20);
      c.at = {static_cast<int>(rng() % 8), static_cast<int>(rng() % 8)};
      pool.candidates.insert(pool.candidates.begin() + rng() % (pool.size() + 1), c);
    }

    const BestCandidateResult best = BestCandidate(bundle, h, target, pool, cls);
    const Candidate& chosen = pool.candidates[best.index];
    const auto key = [](const Candidate& c) { return std::tuple(c.k, c.at.row, c.at.col); };
    int ties = 0;
    for (std::size_t e = 0; e < pool.size(); ++e) {
      const Candidate& c = pool.candidates[e];
      const double l_tot = ScoreCandidate(bundle, h, target, c, cls).l_tot;
      notes.Expect(best.score.l_tot >= l_tot, "trial " + std::to_string(trial) + " not maximal");
      if (l_tot == best.score.l_tot && e != best.index) {
        ++ties;
        notes.Expect(key(chosen) <= key(c), "trial " + std::to_string(trial) + " tie rule");
      }

      // Independent objective: materialized map, scalar cosine.
      FeatureMap modified = h;
      modified.SetColumn(target, c.vector);
      const std::vector<double> col = h.Column(target);
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < col.size(); ++i) {
        dot += col[i] * c.vector[i];
        na += col[i] * col[i];
        nb += c.vector[i] * c.vector[i];
      }
      const double cos = na > 0 && nb > 0 ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
      const double oracle =
          cos + std::log(PredictFromFeatures(bundle, modified).probabilities[cls]);
      max_oracle_err = std::max(max_oracle_err, std::abs(oracle - l_tot));
    }
    tied_triples += ties > 0;
  }
  notes.Expect(tied_triples > 0, "no tied triple exercised");
  notes.Expect(max_oracle_err < 1e-9, "objective disagrees with oracle");
  return {notes.ok(), notes.Summary(Fmt("100 triples, %.0f with ties, objective error %.3g",
                                        tied_triples, max_oracle_err))};
}

// ------------------------------------------------------------------ 5
Grid LoopWeightedMap(const Grid& s, const FeatureMap& from, const FeatureMap& to) {
  const int n = from.side();
  std::vector<double> d(n * n, 0.0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int c = 0; c < from.channels(); ++c) {
        const double diff = from.values().at(c, i, j) - to.values().at(c, i, j);
        if (diff > 0) d[i * n + j] += diff;
      }
      total += d[i * n + j];
    }
  }
  Grid out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out(i, j) = s(i, j) * (total > 0 ? d[i * n + j] / total : 0.0);
  }
  return out;
}

Outcome ContrastiveOracle() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Notes notes;
  double max_err = 0.0;
  double max_sum_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMap h0 = testing::RandomFeatureMap({32, 8, 8}, 5000 + trial, 0.0, 3.0);
    FeatureMap h_star = testing::RandomFeatureMap({32, 8, 8}, 6000 + trial, 0.0, 3.0);
    // Some columns unchanged, as after a partial replacement.
    for (int k = 0; k < 64; k += 3) h_star.SetColumn(CenterCoord(k, 8), h0.Column(CenterCoord(k, 8)));
    ShapleyMap s0, s_star;
    s0.s = Grid(8, 8);
    s_star.s = Grid(8, 8);
    for (int e = 0; e < 64; ++e) {
      s0.s.data()[e] = u(rng);
      s_star.s.data()[e] = u(rng);
    }
    const WeightedMap inv = InvariantMap(s0, h0, h_star);
    const WeightedMap dom = DominantMap(s_star, h_star, h0);
    max_err = std::max(max_err, (inv.raw - LoopWeightedMap(s0.s, h0, h_star)).cwiseAbs().maxCoeff());
    max_err = std::max(max_err, (dom.raw - LoopWeightedMap(s_star.s, h_star, h0)).cwiseAbs().maxCoeff());
    notes.Expect(inv.clamped == inv.raw.cwiseMax(0.0), "inv clamp");
    notes.Expect(dom.clamped == dom.raw.cwiseMax(0.0), "dom clamp");

    for (std::size_t e = 0; e < h0.values().data().size(); ++e) {
      const double d = h0.values().data()[e] - h_star.values().data()[e];
      notes.Expect(std::max(d, 0.0) * std::max(-d, 0.0) == 0.0, "channel overlap");
    }
    for (const Grid& n : {NormalizedDifference(h0, h_star), NormalizedDifference(h_star, h0)}) {
      if (n.sum() != 0.0) max_sum_err = std::max(max_sum_err, std::abs(n.sum() - 1.0));
      notes.Expect(n.minCoeff() >= 0.0, "negative normalized entry");
    }
  }
  notes.Expect(max_err < 1e-9, "loop oracle mismatch");
  notes.Expect(max_sum_err <= 1e-6, "normalized sum off");
  return {notes.ok(), notes.Summary(Fmt("20 inputs, max error %.3g, max |sum - 1| %.3g",
                                        max_err, max_sum_err))};
}

// ------------------------------------------------------------------ 6
Outcome CurveProtocol() {
  const auto start = Clock::now();
  const auto& world = testing::SharedToyWorld();
  const ModelBundle& bundle = *world.bundle;
  Notes notes;
  notes.Expect(CurveStepCount(kDefaultStepFraction) == 56, "default step count is not 56");
  const int height = bundle.info().input_height;
  const int width = bundle.info().input_width;
  double max_end_err = 0.0;
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int sample = 0; sample < 5; ++sample) {
    const SampleRef& ref = world.dataset.val[sample * 31];
    const Image image = ResizeImage(LoadSample(world.dataset, ref).image, height, width);
    Grid saliency(height, width);
    for (Eigen::Index e = 0; e < saliency.size(); ++e) saliency.data()[e] = u(rng);
    const Image blurred = BlurImage(image, BlurSpec{});
    const double p_orig = PredictFromImage(bundle, image).probabilities[ref.label];
    const double p_blur = PredictFromImage(bundle, blurred).probabilities[ref.label];
    const CurveResult del = DeletionCurve(bundle, image, saliency, ref.label);
    const CurveResult ins = InsertionCurve(bundle, image, saliency, ref.label);
    notes.Expect(del.steps() == 56 && ins.steps() == 56, "curve without 56 steps");
    for (double err : {del.points.front().probability - p_orig,
                       del.points.back().probability - p_blur,
                       ins.points.front().probability - p_blur,
                       ins.points.back().probability - p_orig}) {
      max_end_err = std::max(max_end_err, std::abs(err));
    }
  }
  notes.Expect(max_end_err <= 1e-6, "endpoint mismatch");
  const testing::PartVsRandomReport report = testing::PartVsRandomDeletion(world, 50, 2026);
  notes.Expect(report.part_wins >= 45, "informed map won fewer than 45 of 50");
  notes.Expect(report.mean_part_auc < report.mean_random_auc, "mean AUC not lower");
  const double elapsed = Seconds(start);
  notes.Expect(elapsed < 600.0, "suite over 10 minutes");
  std::ostringstream info;
  info << "56 steps, endpoint error " << Fmt("%.3g", max_end_err) << ", informed wins "
       << report.part_wins << "/50 (mean deletion AUC "
       << Fmt("%.4f vs %.4f", report.mean_part_auc, report.mean_random_auc) << "), "
       << Fmt("%.1f s", elapsed);
  return {notes.ok(), notes.Summary(info.str())};
}

// ------------------------------------------------------------------ 7
Outcome XiFixtures() {
  Notes notes;
  const CompactScore ones = CompactActivationScore(Grid::Ones(8, 8), Grid::Ones(8, 8));
  notes.Expect(ones.xi == 1.0, "all-ones xi != 1");

  // g-hat sums to 4 (max 2), dom holds mass 4 on 4 cells.
  Grid global = Grid::Zero(8, 8);
  global(0, 0) = 2.0;
  global(3, 3) = 2.0;
  global(5, 1) = 1.0;
  global(7, 7) = 1.0;
  global(2, 6) = 1.0;
  global(6, 2) = 1.0;
  Grid dom = Grid::Zero(8, 8);
  dom(1, 1) = 0.5;
  dom(1, 2) = 1.5;
  dom(4, 4) = 1.0;
  dom(6, 5) = 1.0;
  const CompactScore four = CompactActivationScore(dom, global);
  notes.Expect(four.xi == 16.0 && four.p_a == 4 && four.p_t == 64, "4-of-64 xi != 16");

  const CompactScore zero = CompactActivationScore(Grid::Zero(8, 8), Grid::Ones(8, 8));
  notes.Expect(zero.xi == 0.0, "zero map xi != 0");
  return {notes.ok(), notes.Summary(Fmt("xi = %g, %g, %g", ones.xi, four.xi, zero.xi))};
}

// ------------------------------------------------------------------ 8
Outcome EndToEnd() {
  const auto& world = testing::SharedToyWorld();
  const MisclassifiedSample& m = world.mined.front();
  const fs::path out = testing::ScratchDir("acceptance-explain");
  ExplainOptions o;
  o.model = world.run_dir / "model";
  o.data = world.run_dir / "dataset";
  o.sample_ids = {m.sample_id};
  o.run.out_dir = out;
  const auto start = Clock::now();
  const int code = CmdExplain(o);
  const double elapsed = Seconds(start);
  Notes notes;
  notes.Expect(code == kExitOk, "exit code " + std::to_string(code));
  notes.Expect(elapsed < 30.0, "slower than 30 s");
  const std::string stem = SampleFileStem(m.sample_id);
  std::string status = "missing";
  if (fs::exists(out / (stem + ".json"))) {
    std::ifstream in(out / (stem + ".json"));
    const nlohmann::json record = nlohmann::json::parse(in);
    const std::string violation = ValidateRecord(record);
    notes.Expect(violation.empty(), "schema: " + violation);
    status = record.value("status", "?");
  } else {
    notes.Fail("no record");
  }
  for (const char* suffix : {"_inv.png", "_dom.png", "_deletion.csv", "_insertion.csv"}) {
    notes.Expect(fs::exists(out / (stem + suffix)), std::string("missing ") + suffix);
  }
  return {notes.ok(), notes.Summary(m.sample_id + " " + status + Fmt(" in %.2f s", elapsed))};
}

// ------------------------------------------------------------------ 9
Outcome DefaultsAudit() {
  const RunConfig config;
  Notes notes;
  notes.Expect(config.sigma == 0.8, "sigma");
  notes.Expect(config.u_size == 20, "|U|");
  notes.Expect(config.max_iters == 100, "max_iters");
  notes.Expect(config.step_fraction == 0.018, "step");
  notes.Expect(ShapleySettings{}.sigma == 0.8, "estimator sigma");
  notes.Expect(CounterfactualConfig{}.max_iters == 100, "engine max_iters");
  notes.Expect(CurveOptions{}.step_fraction == 0.018, "curve step");
  std::ostringstream info;
  info << "sigma " << config.sigma << ", |U| " << config.u_size << ", max_iters "
       << config.max_iters << ", step " << config.step_fraction;
  return {notes.ok(), notes.Summary(info.str())};
}

int Run() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"linear-head shapley oracle", LinearHeadOracle},
      {"occlusion-limit oracle", OcclusionLimit},
      {"counterfactual soundness", Soundness},
      {"argmax exhaustiveness", ArgmaxExhaustive},
      {"contrastive-map oracle", ContrastiveOracle},
      {"curve protocol", CurveProtocol},
      {"xi fixtures", XiFixtures},
      {"end-to-end explain", EndToEnd},
      {"defaults audit", DefaultsAudit},
  };
  testing::SharedToyWorld();
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome outcome;
    try {
      outcome = checks[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failed += !outcome.pass;
    std::printf("%s %zu %s: %s\n", outcome.pass ? "PASS" : "FAIL", i + 1,
                checks[i].first.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu checks, %d failed\n", checks.size(), failed);
  return failed == 0 ? 0 : 1;
}

}  // namespace
}  // namespace finecf

int main() { return finecf::Run(); }
