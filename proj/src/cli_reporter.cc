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

#include "finecf/cli_reporter.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <rapidjson/document.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include "finecf/errors.h"
#include "finecf/hashing.h"
#include "finecf/image_ops.h"
#include "record_schema.h"

namespace finecf {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void RunConfig::Validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("sigma must be > 0");
  if (u_size < 1) fail("u_size must be >= 1");
  if (max_iters < 1) fail("max_iters must be >= 1");
  if (top_m < 1) fail("top_m must be >= 1");
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) fail("step_fraction must lie in (0, 1]");
  if (!std::isfinite(sim_weight)) fail("sim_weight must be finite");
  if (chunk_size < 1) fail("chunk_size must be >= 1");
  if (curve_map != "inv" && curve_map != "dom") fail("curve_map must be 'inv' or 'dom'");
  if (blur.kernel_size < 1 || blur.kernel_size % 2 == 0) fail("blur kernel size must be odd");
  if (!(blur.sigma > 0.0)) fail("blur sigma must be > 0");
  if (workers < 1) fail("workers must be >= 1");
}

json RunConfig::ToJson() const {
  return {
      {"sigma", sigma},
      {"top_m", top_m},
      {"u_size", u_size},
      {"max_iters", max_iters},
      {"step_fraction", step_fraction},
      {"sim_weight", sim_weight},
      {"seed", seed},
      {"score_mode", ScoreModeName(score_mode)},
      {"method", PartitionMethodName(method)},
      {"chunk_size", chunk_size},
      {"curve_map", curve_map},
      {"blur", {{"kernel_size", blur.kernel_size}, {"sigma", blur.sigma}}},
      {"workers", workers},
  };
}

RunConfig RunConfig::FromJson(const json& j) {
  RunConfig c;
  c.sigma = j.value("sigma", c.sigma);
  c.top_m = j.value("top_m", c.top_m);
  c.u_size = j.value("u_size", c.u_size);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.step_fraction = j.value("step_fraction", c.step_fraction);
  c.sim_weight = j.value("sim_weight", c.sim_weight);
  c.seed = j.value("seed", c.seed);
  if (j.contains("score_mode")) c.score_mode = ParseScoreMode(j.at("score_mode").get<std::string>());
  if (j.contains("method")) {
    const std::string m = j.at("method").get<std::string>();
    if (m == "gaussian") {
      c.method = PartitionMethod::kGaussian;
    } else if (m == "occlusion") {
      c.method = PartitionMethod::kOcclusion;
    } else {
      throw ConfigError("unknown partition method '" + m + "'");
    }
  }
  c.chunk_size = j.value("chunk_size", c.chunk_size);
  c.curve_map = j.value("curve_map", c.curve_map);
  if (j.contains("blur")) {
    c.blur.kernel_size = j.at("blur").value("kernel_size", c.blur.kernel_size);
    c.blur.sigma = j.at("blur").value("sigma", c.blur.sigma);
  }
  c.workers = j.value("workers", c.workers);
  c.Validate();
  return c;
}

ShapleySettings RunConfig::Shapley() const {
  return {sigma, score_mode, method, chunk_size};
}

ModelBundle LoadModel(const fs::path& path) {
  if (fs::is_directory(path)) {
    BackboneDescriptor descriptor;
    descriptor.family = "toy";
    descriptor.checkpoint_path = path.string();
    return LoadBackbone(descriptor);
  }
  std::ifstream in(path);
  if (!in) throw IoError("model path not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed backbone descriptor " + path.string() + ": " + e.what());
  }
  return LoadBackbone(DescriptorFromJson(j));
}

// ------------------------------------------------------------- explainer

namespace {

std::string JsonNumber(double v) { return json(v).dump(); }

double SecondsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Explainer::Explainer(const ModelBundle& bundle, const DatasetHandle& dataset, RunConfig config,
                     std::optional<ArrayCache> cache)
    : bundle_(bundle),
      dataset_(dataset),
      config_(std::move(config)),
      cache_(std::move(cache)),
      estimator_((config_.Validate(), bundle.feature_shape().height), config_.Shapley()) {
  if (bundle.class_count() != dataset.class_count()) {
    throw ConfigError("model has " + std::to_string(bundle.class_count()) +
                      " classes but dataset has " + std::to_string(dataset.class_count()));
  }
}

std::string Explainer::PoolKind() const {
  return "pool-u" + std::to_string(config_.u_size) + "-m" + std::to_string(config_.top_m) + "-" +
         PartitionMethodName(config_.method) + "-s" + JsonNumber(config_.sigma) + "-" +
         ScoreModeName(config_.score_mode);
}

std::optional<Explainer::PoolBundle> Explainer::LoadCachedPool(int true_class) const {
  if (!cache_) return std::nullopt;
  const std::string subject = "class-" + std::to_string(true_class);
  const auto refs = cache_->Get({bundle_.model_id(), dataset_.dataset_id, subject,
                                 "refs-u" + std::to_string(config_.u_size)});
  const auto pool = cache_->Get({bundle_.model_id(), dataset_.dataset_id, subject, PoolKind()});
  if (!refs || !pool) return std::nullopt;
  PoolBundle out;
  for (double index : refs->values) {
    const auto i = static_cast<std::size_t>(index);
    if (index < 0 || i >= dataset_.train.size()) return std::nullopt;
    out.reference_ids.push_back(dataset_.train[i].sample_id);
  }
  out.pool = PoolFromPayload(*pool, config_.top_m, true_class);
  spdlog::debug("candidate pool for class {} loaded from cache", true_class);
  return out;
}

void Explainer::StorePool(int true_class, const PoolBundle& pool) const {
  if (!cache_) return;
  const std::string subject = "class-" + std::to_string(true_class);
  ArrayPayload refs;
  for (const std::string& id : pool.reference_ids) {
    const auto it = std::find_if(dataset_.train.begin(), dataset_.train.end(),
                                 [&](const SampleRef& s) { return s.sample_id == id; });
    refs.values.push_back(static_cast<double>(it - dataset_.train.begin()));
  }
  refs.shape = {static_cast<int64_t>(refs.values.size())};
  cache_->Put({bundle_.model_id(), dataset_.dataset_id, subject,
               "refs-u" + std::to_string(config_.u_size)},
              refs);
  cache_->Put({bundle_.model_id(), dataset_.dataset_id, subject, PoolKind()},
              PoolToPayload(pool.pool));
}

const Explainer::PoolBundle& Explainer::PoolFor(int true_class) {
  std::lock_guard lock(mutex_);
  if (auto it = pools_.find(true_class); it != pools_.end()) return *it->second;
  auto entry = std::make_unique<PoolBundle>();
  if (auto cached = LoadCachedPool(true_class)) {
    *entry = std::move(*cached);
  } else {
    const auto start = std::chrono::steady_clock::now();
    const ReferenceSet refset =
        BuildReferenceSet(bundle_, dataset_, true_class, config_.u_size, Split::kTrain);
    for (const auto& e : refset.entries) entry->reference_ids.push_back(e.sample_id);
    entry->pool = BuildCandidatePool(bundle_, refset, config_.top_m, estimator_);
    spdlog::info("built candidate pool for class {} ({} candidates, {:.2f}s)", true_class,
                 entry->pool.size(), SecondsSince(start));
    StorePool(true_class, *entry);
  }
  return *pools_.emplace(true_class, std::move(entry)).first->second;
}

Explanation Explainer::Explain(const SampleRef& sample, bool with_curves) {
  const BundleInfo& info = bundle_.info();
  LoadedSample loaded = LoadSample(dataset_, sample, info.input_height, info.input_width);
  const FeatureMap h0 = bundle_.ExtractFeatures(loaded.image, sample.sample_id);
  const PoolBundle& pool = PoolFor(sample.label);

  Explanation ex;
  ex.sample_id = sample.sample_id;
  ex.reference_ids = pool.reference_ids;
  const auto start = std::chrono::steady_clock::now();
  ex.counterfactual = GenerateCounterfactual(bundle_, h0, sample.label, pool.pool, estimator_,
                                             {config_.max_iters, config_.sim_weight});
  ex.maps = BuildContrastiveMaps(ex.counterfactual, loaded.image.height(), loaded.image.width());
  ex.method_seconds = SecondsSince(start);

  ex.compact = CompactActivationScore(
      ex.maps.dom, GlobalActivationMap(ex.counterfactual.s_star.s, ex.counterfactual.h_star));
  ex.fine_grained = KeypointInclusion(ex.maps.dom_img, loaded.keypoints);
  if (with_curves) {
    const bool inv = config_.curve_map == "inv";
    const Grid& saliency = inv ? ex.maps.inv_img : ex.maps.dom_img;
    const int cls = inv ? ex.maps.class_p : ex.maps.class_q;
    CurveOptions options;
    options.step_fraction = config_.step_fraction;
    options.blur = config_.blur;
    ex.deletion = DeletionCurve(bundle_, loaded.image, saliency, cls, options);
    ex.insertion = InsertionCurve(bundle_, loaded.image, saliency, cls, options);
  }
  ex.image = std::move(loaded.image);
  ex.keypoints = std::move(loaded.keypoints);
  return ex;
}

// --------------------------------------------------------------- records

std::string SampleFileStem(const std::string& sample_id) {
  std::string stem;
  bool changed = false;
  for (char ch : sample_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' ||
                    ch == '.';
    stem.push_back(ok ? ch : '_');
    changed |= !ok;
  }
  for (std::size_t i = 0; i < stem.size() && stem[i] == '.'; ++i) {
    stem[i] = '_';
    changed = true;
  }
  if (stem.empty()) changed = true;
  if (changed) stem += "-" + Sha256Hex(sample_id).substr(0, 8);
  return stem;
}

namespace {

json GridJson(const Grid& g) {
  return {{"rows", g.rows()},
          {"cols", g.cols()},
          {"values", std::vector<double>(g.data(), g.data() + g.size())}};
}

json ShapleyJson(const ShapleyMap& s) {
  return {{"n", s.side()},
          {"class_index", s.class_index},
          {"score_mode", ScoreModeName(s.score_mode)},
          {"iteration", s.iteration},
          {"values", std::vector<double>(s.s.data(), s.s.data() + s.s.size())}};
}

std::string ClassName(const ModelBundle& bundle, const DatasetHandle& dataset, int index) {
  const auto& labels = bundle.info().label_names;
  if (index >= 0 && index < static_cast<int>(labels.size())) return labels[index];
  if (index >= 0 && index < dataset.class_count()) return dataset.class_names[index];
  return std::to_string(index);
}

std::string UtcTimestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void WriteTextAtomic(const fs::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

json CurveJson(const CurveResult& curve, const std::string& file, const std::string& map) {
  return {{"kind", CurveKindName(curve.kind)}, {"file", file},
          {"class_index", curve.class_index},  {"map", map},
          {"steps", curve.steps()},            {"auc", curve.auc},
          {"auc_x100", curve.auc * 100.0}};
}

}  // namespace

json BuildRecord(const ModelBundle& bundle, const DatasetHandle& dataset, const RunConfig& config,
                 const Explanation& ex) {
  const CounterfactualResult& cf = ex.counterfactual;
  const std::string stem = SampleFileStem(ex.sample_id);
  json trace = json::array();
  for (const ReplacementStep& step : cf.trace) {
    trace.push_back({
        {"t", step.t},
        {"target", {step.target.row, step.target.col}},
        {"source",
         {{"k", step.source_k},
          {"sample_id", step.source_k < static_cast<int>(ex.reference_ids.size())
                            ? ex.reference_ids[step.source_k]
                            : ""},
          {"at", {step.source_at.row, step.source_at.col}},
          {"candidate_index", step.candidate_index}}},
        {"l_sim", step.l_sim},
        {"l_cls", step.l_cls},
        {"l_tot", step.l_tot},
        {"predicted_class", step.scores_after.predicted_class},
        {"probabilities", step.scores_after.probabilities},
    });
  }
  json curves = json::object();
  curves["blur"] = {{"kernel_size", config.blur.kernel_size}, {"sigma", config.blur.sigma}};
  if (ex.deletion) {
    curves["deletion"] = CurveJson(*ex.deletion, stem + "_deletion.csv", config.curve_map);
  }
  if (ex.insertion) {
    curves["insertion"] = CurveJson(*ex.insertion, stem + "_insertion.csv", config.curve_map);
  }
  return {
      {"schema_version", kRecordSchemaVersion},
      {"model_id", bundle.model_id()},
      {"dataset_id", dataset.dataset_id},
      {"sample_id", ex.sample_id},
      {"class_p",
       {{"index", cf.original_class}, {"name", ClassName(bundle, dataset, cf.original_class)}}},
      {"class_q", {{"index", cf.true_class}, {"name", ClassName(bundle, dataset, cf.true_class)}}},
      {"status", StatusName(cf.status)},
      {"failure_reason", cf.failure_reason},
      {"iterations", cf.iterations},
      {"final_probabilities", cf.final_scores.probabilities},
      {"trace", trace},
      {"shapley", {{"s0", ShapleyJson(cf.s0)}, {"s_star", ShapleyJson(cf.s_star)}}},
      {"maps",
       {{"inv", GridJson(ex.maps.inv)},
        {"dom", GridJson(ex.maps.dom)},
        {"raw_inv", GridJson(ex.maps.raw_inv)},
        {"raw_dom", GridJson(ex.maps.raw_dom)},
        {"inv_img", GridJson(ex.maps.inv_img)},
        {"dom_img", GridJson(ex.maps.dom_img)},
        {"files", {{"inv_overlay", stem + "_inv.png"}, {"dom_overlay", stem + "_dom.png"}}},
        {"colormap", kOverlayColormap}}},
      {"xi",
       {{"xi", ex.compact.xi},
        {"c", ex.compact.c},
        {"p_t", ex.compact.p_t},
        {"p_a", ex.compact.p_a},
        {"epsilon", ex.compact.epsilon}}},
      {"fine_grained",
       {{"active_pixels", ex.fine_grained.active_pixels},
        {"keypoints_hit", ex.fine_grained.keypoints_hit},
        {"keypoints_total", ex.fine_grained.keypoints_total},
        {"mean_contribution", ex.fine_grained.mean_contribution},
        {"warnings", ex.fine_grained.warnings}}},
      {"curves", curves},
      {"config", config.ToJson()},
      {"run_info", {{"created_at", UtcTimestamp()}, {"method_seconds", ex.method_seconds}}},
  };
}

void WriteCurveCsv(const fs::path& path, const CurveResult& curve) {
  std::ostringstream out;
  out << std::setprecision(17) << "fraction,probability\n";
  for (const CurvePoint& p : curve.points) out << p.fraction << ',' << p.probability << '\n';
  WriteTextAtomic(path, out.str());
}

json WriteExplanation(const ModelBundle& bundle, const DatasetHandle& dataset,
                      const RunConfig& config, const Explanation& ex, const fs::path& dir) {
  fs::create_directories(dir);
  const json record = BuildRecord(bundle, dataset, config, ex);
  if (const std::string problem = ValidateRecord(record); !problem.empty()) {
    throw Error("explanation record for " + ex.sample_id + " violates the schema: " + problem);
  }
  const std::string stem = SampleFileStem(ex.sample_id);
  WritePng(dir / (stem + "_inv.png"), RenderOverlay(ex.image, ex.maps.inv_img));
  WritePng(dir / (stem + "_dom.png"), RenderOverlay(ex.image, ex.maps.dom_img));
  if (ex.deletion) WriteCurveCsv(dir / (stem + "_deletion.csv"), *ex.deletion);
  if (ex.insertion) WriteCurveCsv(dir / (stem + "_insertion.csv"), *ex.insertion);
  WriteTextAtomic(dir / (stem + ".json"), record.dump(1) + "\n");
  return record;
}

const std::string& RecordSchema() {
  static const std::string schema = kRecordSchemaText;
  return schema;
}

std::string ValidateRecord(const json& record) {
  static const rapidjson::SchemaDocument* schema = [] {
    rapidjson::Document doc;
    doc.Parse(RecordSchema().c_str());
    if (doc.HasParseError()) throw Error("record schema is not valid JSON");
    return new rapidjson::SchemaDocument(doc);
  }();
  rapidjson::Document doc;
  const std::string text = record.dump();
  doc.Parse(text.c_str());
  if (doc.HasParseError()) return "record is not valid JSON";
  rapidjson::SchemaValidator validator(*schema);
  if (doc.Accept(validator)) return "";
  rapidjson::StringBuffer where;
  validator.GetInvalidDocumentPointer().StringifyUriFragment(where);
  return std::string("keyword '") + validator.GetInvalidSchemaKeyword() + "' failed at " +
         where.GetString();
}

// -------------------------------------------------------------- commands

namespace {

template <typename Fn>
int Guarded(const char* command, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    spdlog::error("{}: {}", command, e.what());
  } catch (const json::exception& e) {
    spdlog::error("{}: malformed JSON input: {}", command, e.what());
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}: {}", command, e.what());
  }
  return kExitError;
}

// Runs fn(i) for i in [0, count) on up to `workers` threads; rethrows the
// first failure in index order.
template <typename Fn>
void ParallelFor(int count, int workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> threads;
    for (int w = 0; w < std::min(workers, count); ++w) {
      threads.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::optional<ArrayCache> ResolveCache(const fs::path& cache_dir) {
  if (const char* env = std::getenv(kCacheEnvironmentVariable); env != nullptr && *env != '\0') {
    return ArrayCache(env);
  }
  if (cache_dir.empty()) return std::nullopt;
  return ArrayCache(cache_dir);
}

std::vector<SampleRef> ResolveSamples(const ExplainOptions& options,
                                      const DatasetHandle& dataset) {
  std::vector<std::string> ids = options.sample_ids;
  if (!options.index_file.empty()) {
    std::ifstream in(options.index_file);
    if (!in) throw IoError("index file not found: " + options.index_file.string());
    json index;
    in >> index;
    for (const json& entry : index.at("samples")) ids.push_back(entry.at("sample_id"));
  }
  if (ids.empty() && options.index_file.empty()) {
    throw ConfigError("no samples given (use --sample or --index)");
  }
  if (options.limit > 0 && static_cast<int>(ids.size()) > options.limit) ids.resize(options.limit);
  std::vector<SampleRef> samples;
  for (const std::string& id : ids) samples.push_back(dataset.Find(id));
  return samples;
}

void PrebuildPools(Explainer& explainer, const std::vector<SampleRef>& samples) {
  std::set<int> classes;
  for (const SampleRef& s : samples) classes.insert(s.label);
  for (int c : classes) explainer.PoolFor(c);
}

}  // namespace

int CmdTrainToy(const TrainToyOptions& options) {
  return Guarded("train-toy", [&] {
    if (options.out_dir.empty()) throw ConfigError("an output directory is required");
    options.train.Validate();
    const DatasetHandle dataset = GenerateSynthetic(options.data, options.data_seed);
    const ModelBundle bundle = TrainToyModel(dataset, options.train);
    WriteSyntheticManifest(dataset, options.out_dir / "dataset");
    SaveToyModel(bundle, options.out_dir / "model");
    const double accuracy = bundle.info().metadata.value("validation_accuracy", 0.0);
    std::cout << "model " << bundle.model_id() << " validation accuracy " << std::fixed
              << std::setprecision(4) << accuracy << "\n"
              << "dataset " << (options.out_dir / "dataset").string() << "\n"
              << "model dir " << (options.out_dir / "model").string() << "\n";
    return kExitOk;
  });
}

int CmdMine(const MineOptions& options) {
  return Guarded("mine", [&] {
    if (options.out.empty()) throw ConfigError("an output index path is required");
    const ModelBundle bundle = LoadModel(options.model);
    const DatasetHandle dataset = OpenDataset(options.data);
    if (bundle.class_count() != dataset.class_count()) {
      throw ConfigError("model and dataset disagree on the class count");
    }
    const auto mined = MineMisclassified(bundle, dataset, options.split);
    json samples = json::array();
    for (const MisclassifiedSample& m : mined) {
      samples.push_back({{"sample_id", m.sample_id},
                         {"source", m.source},
                         {"true_class", m.true_class},
                         {"predicted_class", m.predicted_class},
                         {"confidence", m.confidence}});
    }
    const json index = {{"model_id", bundle.model_id()},
                        {"dataset_id", dataset.dataset_id},
                        {"split", SplitName(options.split)},
                        {"split_size", dataset.split(options.split).size()},
                        {"count", mined.size()},
                        {"samples", samples}};
    if (options.out.has_parent_path()) fs::create_directories(options.out.parent_path());
    WriteTextAtomic(options.out, index.dump(1) + "\n");
    std::cout << "misclassified " << mined.size() << " of " << dataset.split(options.split).size()
              << " " << SplitName(options.split) << " samples\n";
    return kExitOk;
  });
}

int CmdExplain(const ExplainOptions& options) {
  return Guarded("explain", [&] {
    options.run.Validate();
    const ModelBundle bundle = LoadModel(options.model);
    const DatasetHandle dataset = OpenDataset(options.data);
    const std::vector<SampleRef> samples = ResolveSamples(options, dataset);
    Explainer explainer(bundle, dataset, options.run, ResolveCache(options.cache_dir));
    PrebuildPools(explainer, samples);
    std::vector<CounterfactualStatus> status(samples.size());
    std::vector<std::string> lines(samples.size());
    ParallelFor(static_cast<int>(samples.size()), options.run.workers, [&](int i) {
      const Explanation ex = explainer.Explain(samples[i]);
      WriteExplanation(bundle, dataset, options.run, ex, options.run.out_dir);
      const CounterfactualResult& cf = ex.counterfactual;
      status[i] = cf.status;
      std::ostringstream line;
      line << ex.sample_id << " P=" << cf.original_class << " Q=" << cf.true_class << " "
           << StatusName(cf.status) << " iterations=" << cf.iterations;
      if (!cf.failure_reason.empty()) line << " (" << cf.failure_reason << ")";
      lines[i] = line.str();
    });
    int failures = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::cout << lines[i] << "\n";
      failures += status[i] == CounterfactualStatus::kFailure;
    }
    std::cout << "explained " << samples.size() << " samples, " << failures << " failed\n";
    return failures > 0 ? kExitCounterfactualFailure : kExitOk;
  });
}

int CmdEvaluate(const EvaluateOptions& options) {
  return Guarded("evaluate", [&] {
    if (!fs::is_directory(options.records_dir)) {
      throw IoError("records directory not found: " + options.records_dir.string());
    }
    const fs::path out_dir = options.out_dir.empty() ? options.records_dir : options.out_dir;
    const ModelBundle bundle = LoadModel(options.model);
    const DatasetHandle dataset = OpenDataset(options.data);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(options.records_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::vector<json> records;
    for (const fs::path& file : files) {
      std::ifstream in(file);
      json record;
      in >> record;
      if (!record.is_object() || !record.contains("schema_version")) continue;
      if (const std::string problem = ValidateRecord(record); !problem.empty()) {
        throw DataError("record " + file.string() + " violates the schema: " + problem);
      }
      records.push_back(std::move(record));
    }
    if (records.empty()) throw DataError("no explanation records in " + options.records_dir.string());
    fs::create_directories(out_dir);

    CurveOptions curve_options;
    curve_options.step_fraction = options.step_fraction;
    curve_options.blur = options.blur;
    std::ostringstream table;
    table << std::setprecision(10)
          << "sample_id,status,iterations,curve_class,steps,deletion_auc,insertion_auc,"
             "deletion_auc_x100,insertion_auc_x100,xi,active_pixels,keypoints_hit,"
             "keypoints_total,mean_contribution\n";
    json rows = json::array();
    double sum_del = 0.0, sum_ins = 0.0, sum_xi = 0.0;
    long hits = 0, total_kp = 0;
    for (const json& record : records) {
      const std::string sample_id = record.at("sample_id");
      const SampleRef& sample = dataset.Find(sample_id);
      const std::string map = record.at("config").at("curve_map");
      const json& grid = record.at("maps").at(map == "inv" ? "inv_img" : "dom_img");
      const int rows_n = grid.at("rows");
      const int cols_n = grid.at("cols");
      const std::vector<double> values = grid.at("values");
      const Grid saliency = Eigen::Map<const Grid>(values.data(), rows_n, cols_n);
      const int cls = record.at(map == "inv" ? "class_p" : "class_q").at("index");
      const LoadedSample loaded = LoadSample(dataset, sample, rows_n, cols_n);
      const CurveResult del = DeletionCurve(bundle, loaded.image, saliency, cls, curve_options);
      const CurveResult ins = InsertionCurve(bundle, loaded.image, saliency, cls, curve_options);
      const std::string stem = SampleFileStem(sample_id);
      WriteCurveCsv(out_dir / (stem + "_eval_deletion.csv"), del);
      WriteCurveCsv(out_dir / (stem + "_eval_insertion.csv"), ins);
      const json& fg = record.at("fine_grained");
      const double xi = record.at("xi").at("xi");
      table << sample_id << ',' << record.at("status").get<std::string>() << ','
            << record.at("iterations").get<int>() << ',' << cls << ',' << del.steps() << ','
            << del.auc << ',' << ins.auc << ',' << del.auc * 100 << ',' << ins.auc * 100 << ','
            << xi << ',' << fg.at("active_pixels").get<int>() << ','
            << fg.at("keypoints_hit").get<int>() << ',' << fg.at("keypoints_total").get<int>()
            << ',' << fg.at("mean_contribution").get<double>() << '\n';
      rows.push_back({{"sample_id", sample_id},
                      {"steps", del.steps()},
                      {"deletion_auc", del.auc},
                      {"insertion_auc", ins.auc},
                      {"xi", xi}});
      sum_del += del.auc;
      sum_ins += ins.auc;
      sum_xi += xi;
      hits += fg.at("keypoints_hit").get<int>();
      total_kp += fg.at("keypoints_total").get<int>();
    }
    const double n = static_cast<double>(records.size());
    const json report = {
        {"samples", records.size()},
        {"step_fraction", options.step_fraction},
        {"blur", {{"kernel_size", options.blur.kernel_size}, {"sigma", options.blur.sigma}}},
        {"mean_deletion_auc", sum_del / n},
        {"mean_insertion_auc", sum_ins / n},
        {"mean_deletion_auc_x100", 100 * sum_del / n},
        {"mean_insertion_auc_x100", 100 * sum_ins / n},
        {"mean_xi", sum_xi / n},
        {"keypoints_hit", hits},
        {"keypoints_total", total_kp},
        {"rows", rows},
    };
    WriteTextAtomic(out_dir / "evaluation.csv", table.str());
    WriteTextAtomic(out_dir / "evaluation_report.json", report.dump(1) + "\n");
    std::cout << std::fixed << std::setprecision(4) << "samples " << records.size()
              << "\nmean insertion AUC " << sum_ins / n << "\nmean deletion AUC " << sum_del / n
              << "\nmean xi " << sum_xi / n << "\nkeypoints hit " << hits << " / " << total_kp
              << "\n";
    return kExitOk;
  });
}

int CmdAblate(const AblateOptions& options) {
  return Guarded("ablate", [&] {
    if (options.sp.empty() && options.top_m.empty()) {
      throw ConfigError("no ablation toggles given (use --sp and/or --topm)");
    }
    const ExplainOptions& base = options.base;
    base.run.Validate();
    const ModelBundle bundle = LoadModel(base.model);
    const DatasetHandle dataset = OpenDataset(base.data);
    const std::vector<SampleRef> samples = ResolveSamples(base, dataset);
    const std::vector<bool> sp_values = options.sp.empty() ? std::vector<bool>{true} : options.sp;
    const std::vector<int> topm_values =
        options.top_m.empty() ? std::vector<int>{base.run.top_m} : options.top_m;

    std::ostringstream table;
    table << std::setprecision(10)
          << "variant,sp,top_m,samples,successes,mean_seconds,mean_iterations,"
             "mean_active_pixels,mean_contribution\n";
    std::cout << std::left << std::setw(16) << "variant" << std::setw(8) << "samples"
              << std::setw(10) << "success" << std::setw(12) << "sec/expl" << std::setw(12)
              << "iters" << std::setw(14) << "active_px" << "mean_contrib\n";
    for (bool sp : sp_values) {
      for (int m : topm_values) {
        RunConfig run = base.run;
        run.top_m = m;
        run.method = sp ? PartitionMethod::kGaussian : PartitionMethod::kOcclusion;
        Explainer explainer(bundle, dataset, run, ResolveCache(base.cache_dir));
        PrebuildPools(explainer, samples);
        std::vector<Explanation> results(samples.size());
        ParallelFor(static_cast<int>(samples.size()), run.workers,
                    [&](int i) { results[i] = explainer.Explain(samples[i], false); });
        double seconds = 0.0, iterations = 0.0, active = 0.0, contribution = 0.0;
        int successes = 0;
        for (const Explanation& ex : results) {
          seconds += ex.method_seconds;
          iterations += ex.counterfactual.iterations;
          active += ex.fine_grained.active_pixels;
          contribution += ex.fine_grained.mean_contribution;
          successes += ex.counterfactual.status == CounterfactualStatus::kSuccess;
        }
        const double n = std::max<double>(1.0, static_cast<double>(results.size()));
        const std::string name = std::string(sp ? "sp_on" : "sp_off") + "_m" + std::to_string(m);
        table << name << ',' << (sp ? "on" : "off") << ',' << m << ',' << results.size() << ','
              << successes << ',' << seconds / n << ',' << iterations / n << ',' << active / n
              << ',' << contribution / n << '\n';
        std::cout << std::left << std::setw(16) << name << std::setw(8) << results.size()
                  << std::setw(10) << successes << std::setw(12) << std::setprecision(4)
                  << seconds / n << std::setw(12) << iterations / n << std::setw(14)
                  << active / n << contribution / n << "\n";
      }
    }
    fs::create_directories(base.run.out_dir);
    WriteTextAtomic(base.run.out_dir / "ablation.csv", table.str());
    return kExitOk;
  });
}

}  // namespace finecf
