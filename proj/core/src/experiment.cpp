#include "bofbench/experiment.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bofbench/baseline.hpp"
#include "bofbench/errors.hpp"
#include "bofbench/features.hpp"
#include "bofbench/parallel.hpp"
#include "bofbench/rng.hpp"

namespace bof {
namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// Publish-by-rename so concurrent writers never expose partial files.
class ArtifactCache {
 public:
  explicit ArtifactCache(const std::filesystem::path& root) : root_(root) {
    if (!root_.empty()) std::filesystem::create_directories(root_);
  }
  bool enabled() const { return !root_.empty(); }

  std::filesystem::path lookup(const std::string& key, const char* ext) const {
    auto path = root_ / (key + ext);
    return std::filesystem::exists(path) ? path : std::filesystem::path{};
  }

  template <typename WriteFn>
  void publish(const std::string& key, const char* ext, WriteFn&& write) const {
    static std::atomic<unsigned> counter{0};
    auto tmp = root_ / (key + ext + ".tmp" + std::to_string(counter.fetch_add(1)));
    write(tmp);
    std::filesystem::rename(tmp, root_ / (key + ext));
  }

 private:
  std::filesystem::path root_;
};

std::string feature_cache_key(const ExperimentConfig& cfg, std::uint64_t file_hash,
                              int segment_index) {
  Fnv1a h;
  h.update_string("mfcc-v1");
  h.update_u64(file_hash);
  h.update_u64(static_cast<std::uint64_t>(segment_index + 1));
  h.update_string(cfg.policy.label());
  h.update_u64(cfg.normalize_audio);
  h.update_u64(cfg.include_c0);
  return hex64(h.digest());
}

std::string model_cache_key(const std::string& feature_key, std::size_t components,
                            std::uint64_t item_seed) {
  Fnv1a h;
  h.update_string("gmm-v1");
  h.update_string(feature_key);
  h.update_u64(components);
  h.update_u64(item_seed);
  return hex64(h.digest());
}

std::vector<FeatureSequence> compute_features_impl(const ExperimentConfig& cfg,
                                                   const DatasetManifest& manifest,
                                                   const ArtifactCache& cache,
                                                   std::vector<std::string>* feature_keys) {
  const auto& items = manifest.items;
  std::vector<FeatureSequence> features(items.size());
  feature_keys->assign(items.size(), "");

  // One content hash per distinct file.
  std::vector<std::filesystem::path> files;
  std::map<std::string, std::size_t> file_index;
  std::vector<std::vector<std::size_t>> items_of_file;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto key = items[i].audio_path.string();
    auto [it, inserted] = file_index.try_emplace(key, files.size());
    if (inserted) {
      files.push_back(items[i].audio_path);
      items_of_file.emplace_back();
    }
    items_of_file[it->second].push_back(i);
  }
  std::vector<std::uint64_t> file_hashes(files.size());
  parallel_for(files.size(), cfg.threads,
               [&](std::size_t f) { file_hashes[f] = hash_file(files[f]); });

  std::vector<char> cached(items.size(), 0);
  for (std::size_t f = 0; f < files.size(); ++f) {
    for (std::size_t idx : items_of_file[f]) {
      (*feature_keys)[idx] =
          feature_cache_key(cfg, file_hashes[f], items[idx].segment_index);
      if (cache.enabled()) {
        auto hit = cache.lookup((*feature_keys)[idx], ".mfcc");
        if (!hit.empty()) {
          features[idx] = load_features(hit);
          features[idx].source_id = items[idx].item_id;
          features[idx].segment_index = items[idx].segment_index;
          cached[idx] = 1;
        }
      }
    }
  }

  parallel_for(files.size(), cfg.threads, [&](std::size_t f) {
    std::vector<std::size_t> missing;
    for (std::size_t idx : items_of_file[f])
      if (!cached[idx]) missing.push_back(idx);
    if (missing.empty()) return;

    SampleBuffer rec;
    try {
      rec = decode_wav(files[f]);
      if (cfg.normalize_audio) rec = normalize(std::move(rec));
    } catch (const DataError& e) {
      throw PipelineError("features: item '" + manifest.items[missing.front()].item_id +
                          "': " + e.what());
    }
    std::vector<SampleBuffer> units;
    if (manifest.policy.is_segmented())
      units = segment(rec, manifest.policy.unit_seconds);

    for (std::size_t idx : missing) {
      const auto& item = manifest.items[idx];
      const SampleBuffer* buf = &rec;
      if (manifest.policy.is_segmented()) {
        if (static_cast<std::size_t>(item.segment_index) >= units.size())
          throw PipelineError("features: item '" + item.item_id + "': segment " +
                              std::to_string(item.segment_index) + " out of range");
        buf = &units[static_cast<std::size_t>(item.segment_index)];
      }
      try {
        features[idx] = mfcc(*buf, cfg.include_c0);
      } catch (const DataError& e) {
        throw PipelineError("features: item '" + item.item_id + "': " + e.what());
      }
      features[idx].source_id = item.item_id;
      features[idx].segment_index = item.segment_index;
      if (cache.enabled())
        cache.publish((*feature_keys)[idx], ".mfcc", [&](const std::filesystem::path& p) {
          save_features(p, features[idx]);
        });
    }
  });
  return features;
}

std::vector<GmmModel> compute_models_impl(const ExperimentConfig& cfg,
                                          const DatasetManifest& manifest,
                                          const std::vector<FeatureSequence>& features,
                                          const std::vector<std::string>& feature_keys,
                                          const ArtifactCache& cache) {
  std::vector<GmmModel> models(features.size());
  parallel_for(features.size(), cfg.threads, [&](std::size_t i) {
    std::uint64_t item_seed =
        mix_seed(cfg.effective_seed(), fnv1a64(manifest.items[i].item_id));
    std::string key = model_cache_key(feature_keys[i], cfg.components, item_seed);
    if (cache.enabled()) {
      auto hit = cache.lookup(key, ".gmm");
      if (!hit.empty()) {
        models[i] = load_model(hit);
        return;
      }
    }
    try {
      models[i] = fit_gmm(features[i], cfg.components, item_seed);
    } catch (const Error& e) {
      throw PipelineError("fit: item '" + manifest.items[i].item_id + "': " + e.what());
    }
    if (cache.enabled())
      cache.publish(key, ".gmm", [&](const std::filesystem::path& p) {
        save_model(p, models[i]);
      });
  });
  return models;
}

DistanceMatrix compute_distances_impl(const ExperimentConfig& cfg,
                                      const DatasetManifest& manifest,
                                      const std::vector<FeatureSequence>& features,
                                      const std::vector<GmmModel>& models) {
  const std::size_t n = features.size();
  std::vector<std::string> ids = manifest.item_ids();

  if (cfg.method == DistanceMethod::euclidean_mean) {
    std::vector<MeanFeature> means(n);
    for (std::size_t i = 0; i < n; ++i) means[i] = mean_feature(features[i]);
    return DistanceMatrix::from_pairwise(std::move(ids), [&](std::size_t i, std::size_t j) {
      return euclidean(means[i], means[j]);
    });
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> pair_values(pairs.size());

  DistanceConfig dist_cfg{cfg.method, cfg.mc_samples, cfg.effective_seed()};
  parallel_for(pairs.size(), cfg.threads, [&](std::size_t k) {
    auto [i, j] = pairs[k];
    try {
      pair_values[k] = cfg.method == DistanceMethod::monte_carlo
                           ? kl_mc(models[i], models[j], dist_cfg)
                           : kl_marginal(models[i], models[j], features[i], features[j]);
    } catch (const Error& e) {
      throw PipelineError("distances: pair ('" + manifest.items[i].item_id + "', '" +
                          manifest.items[j].item_id + "'): " + e.what());
    }
  });

  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pair_index;
  for (std::size_t k = 0; k < pairs.size(); ++k) pair_index[pairs[k]] = k;
  return DistanceMatrix::from_pairwise(std::move(ids), [&](std::size_t i, std::size_t j) {
    return pair_values[pair_index.at({i, j})];
  });
}

}  // namespace

void ExperimentConfig::validate() const {
  if (manifest.empty()) throw UsageError("experiment: manifest path is required");
  if (components == 0) throw UsageError("experiment: components must be >= 1");
  if (method == DistanceMethod::monte_carlo && mc_samples == 0)
    throw UsageError("experiment: mc_samples must be >= 1");
  if (method != DistanceMethod::euclidean_mean && !rng_seed)
    throw UsageError("experiment: rng seed is mandatory for method " + method_name());
  if (chance_trials == 0) throw UsageError("experiment: chance_trials must be >= 1");
}

std::string ExperimentConfig::method_name() const {
  switch (method) {
    case DistanceMethod::monte_carlo: return "bof_mc";
    case DistanceMethod::marginalization: return "bof_marginal";
    case DistanceMethod::euclidean_mean: return "average";
  }
  return "?";
}

std::string ExperimentConfig::method_label() const {
  return method == DistanceMethod::euclidean_mean ? "Average" : "BOF";
}

std::optional<DistanceMethod> parse_method(const std::string& name) {
  if (name == "bof_mc") return DistanceMethod::monte_carlo;
  if (name == "bof_marginal") return DistanceMethod::marginalization;
  if (name == "average") return DistanceMethod::euclidean_mean;
  return std::nullopt;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for hashing");
  Fnv1a h;
  char block[65536];
  while (in.read(block, sizeof(block)) || in.gcount() > 0)
    h.update(block, static_cast<std::size_t>(in.gcount()));
  return h.digest();
}

ExperimentPipeline::ExperimentPipeline(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  manifest_ = load_manifest(cfg_.manifest, cfg_.policy);
}

const std::vector<FeatureSequence>& ExperimentPipeline::features() {
  if (features_.empty()) {
    ArtifactCache cache(cfg_.cache_dir);
    features_ = compute_features_impl(cfg_, manifest_, cache, &feature_keys_);
  }
  return features_;
}

const std::vector<GmmModel>& ExperimentPipeline::models() {
  if (cfg_.method == DistanceMethod::euclidean_mean)
    throw UsageError("experiment: method 'average' fits no mixture models");
  if (models_.empty()) {
    const auto& feats = features();
    ArtifactCache cache(cfg_.cache_dir);
    models_ = compute_models_impl(cfg_, manifest_, feats, feature_keys_, cache);
  }
  return models_;
}

const DistanceMatrix& ExperimentPipeline::distances() {
  if (!distances_) {
    const auto& feats = features();
    if (cfg_.method == DistanceMethod::euclidean_mean)
      distances_ = compute_distances_impl(cfg_, manifest_, feats, {});
    else
      distances_ = compute_distances_impl(cfg_, manifest_, feats, models());
  }
  return *distances_;
}

const EvalReport& ExperimentPipeline::report() {
  if (report_) return *report_;
  const DistanceMatrix& dm = distances();
  std::vector<std::string> labels = manifest_.labels();
  EvalReport report = evaluate(dm, labels);
  report.dataset = manifest_.name;
  report.method_label = cfg_.method_label();
  report.chance = chance_baseline(labels, cfg_.chance_trials,
                                  mix_seed(cfg_.effective_seed(), 0x43484e43ULL));

  report.config.emplace_back("manifest", cfg_.manifest.filename().string());
  report.config.emplace_back("policy", cfg_.policy.label());
  report.config.emplace_back("normalize", cfg_.normalize_audio ? "true" : "false");
  report.config.emplace_back("include_c0", cfg_.include_c0 ? "true" : "false");
  report.config.emplace_back("method", cfg_.method_name());
  if (cfg_.method != DistanceMethod::euclidean_mean) {
    report.config.emplace_back("components", std::to_string(cfg_.components));
    if (cfg_.method == DistanceMethod::monte_carlo)
      report.config.emplace_back("mc_samples", std::to_string(cfg_.mc_samples));
  }
  report.config.emplace_back("rng_seed", std::to_string(cfg_.effective_seed()));
  report.config.emplace_back("chance_trials", std::to_string(cfg_.chance_trials));
  report_ = std::move(report);
  return *report_;
}

EvalReport run_experiment(const ExperimentConfig& cfg) {
  ExperimentPipeline pipeline(cfg);
  EvalReport report = pipeline.report();

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    {
      std::ofstream out(cfg.output_dir / "report.json");
      out << report.to_json_string() << "\n";
      if (!out) throw PipelineError("report: cannot write report.json");
    }
    {
      std::ofstream out(cfg.output_dir / "report.txt");
      const EvalReport* r = &report;
      out << format_results_table({&r, 1});
      if (!out) throw PipelineError("report: cannot write report.txt");
    }
    pipeline.distances().save_csv(cfg.output_dir / "distances.csv");
  }
  return report;
}

double paired_permutation_pvalue(std::span<const double> diffs,
                                 std::size_t permutations, std::uint64_t rng_seed,
                                 bool* exhaustive_out) {
  const std::size_t n = diffs.size();
  if (n == 0) throw DataError("permutation test: no paired differences");
  if (permutations == 0) throw UsageError("permutation test: need >= 1 permutation");

  double observed = 0.0;
  for (double d : diffs) observed += d;
  observed = std::fabs(observed / static_cast<double>(n));
  const double eps = 1e-12 * std::max(1.0, observed);

  bool exhaustive = n < 63 && (1ULL << n) <= permutations;
  if (exhaustive_out) *exhaustive_out = exhaustive;

  if (exhaustive) {
    const std::uint64_t total = 1ULL << n;
    std::uint64_t hits = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
      double t = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        t += (mask >> i) & 1 ? -diffs[i] : diffs[i];
      if (std::fabs(t / static_cast<double>(n)) >= observed - eps) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }

  Rng rng(rng_seed);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    double t = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng.next();
      t += (bits >> (i % 64)) & 1 ? -diffs[i] : diffs[i];
    }
    if (std::fabs(t / static_cast<double>(n)) >= observed - eps) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(permutations + 1);
}

RunComparison compare_runs(const EvalReport& a, const EvalReport& b,
                           std::size_t permutations, std::uint64_t rng_seed) {
  if (a.dataset != b.dataset)
    throw DataError("compare: reports come from different datasets ('" + a.dataset +
                    "' vs '" + b.dataset + "')");
  std::map<std::string, std::size_t> b_index;
  for (std::size_t i = 0; i < b.item_ids.size(); ++i) b_index[b.item_ids[i]] = i;
  if (a.item_ids.size() != b.item_ids.size())
    throw DataError("compare: mismatched item sets");

  std::vector<double> p5_diffs(a.item_ids.size()), map_diffs(a.item_ids.size());
  for (std::size_t i = 0; i < a.item_ids.size(); ++i) {
    auto it = b_index.find(a.item_ids[i]);
    if (it == b_index.end())
      throw DataError("compare: item '" + a.item_ids[i] + "' missing from second report");
    p5_diffs[i] = a.p_at_5[i] - b.p_at_5[it->second];
    map_diffs[i] = a.average_precision[i] - b.average_precision[it->second];
  }

  RunComparison cmp;
  cmp.dataset = a.dataset;
  cmp.method_a = a.method_label;
  cmp.method_b = b.method_label;
  cmp.items = a.item_ids.size();
  cmp.permutations = permutations;
  cmp.rng_seed = rng_seed;
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  cmp.p5_mean_diff = mean(p5_diffs);
  cmp.map_mean_diff = mean(map_diffs);
  cmp.p5_p_value =
      paired_permutation_pvalue(p5_diffs, permutations, rng_seed, &cmp.exhaustive);
  cmp.map_p_value = paired_permutation_pvalue(map_diffs, permutations, rng_seed);
  return cmp;
}

std::string RunComparison::to_json_string(int indent) const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["method_a"] = method_a;
  j["method_b"] = method_b;
  j["items"] = items;
  j["p_at_5"] = {{"mean_diff", p5_mean_diff}, {"p_value", p5_p_value}};
  j["map"] = {{"mean_diff", map_mean_diff}, {"p_value", map_p_value}};
  j["permutations"] = permutations;
  j["exhaustive"] = exhaustive;
  j["rng_seed"] = rng_seed;
  return j.dump(indent);
}

std::string RunComparison::summary_text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "dataset " << dataset << ": " << method_a << " vs " << method_b << " over "
      << items << " items\n"
      << "  p@5 mean difference " << p5_mean_diff << " points (p = " << p5_p_value
      << ")\n"
      << "  MAP mean difference " << map_mean_diff << " points (p = " << map_p_value
      << ")\n"
      << "  permutation test: " << permutations << " permutations"
      << (exhaustive ? " (exhaustive)" : "") << "\n";
  return out.str();
}

AuditReport audit_manifest(const std::filesystem::path& manifest_path,
                           UnitPolicy policy) {
  DatasetManifest manifest = load_manifest(manifest_path, policy);
  AuditReport report;
  report.summary = leakage_summary(manifest);
  report.manifest_warnings = manifest.warnings;
  for (const auto& cl : report.summary.per_class) {
    if (cl.shared_recording_pair_fraction > kLeakageWarnThreshold) {
      std::ostringstream w;
      w << "class '" << cl.class_label << "': " << std::fixed << std::setprecision(1)
        << 100.0 * cl.shared_recording_pair_fraction
        << "% of same-class pairs share a recording";
      report.leakage_warnings.push_back(w.str());
    }
  }
  return report;
}

std::string AuditReport::to_json_string(int indent) const {
  nlohmann::json j = nlohmann::json::parse(summary.to_json_string(0));
  j["manifest_warnings"] = manifest_warnings;
  j["leakage_warnings"] = leakage_warnings;
  return j.dump(indent);
}

std::string AuditReport::text() const {
  std::ostringstream out;
  out << "dataset: " << summary.dataset << "   policy: " << summary.policy << "\n";
  out << std::left << std::setw(16) << "class" << std::right << std::setw(7) << "items"
      << std::setw(12) << "recordings" << std::setw(11) << "locations" << std::setw(14)
      << "shared-pairs"
      << "\n";
  for (const auto& cl : summary.per_class) {
    out << std::left << std::setw(16) << cl.class_label << std::right << std::setw(7)
        << cl.items << std::setw(12) << cl.recordings << std::setw(11) << cl.locations
        << std::setw(13) << std::fixed << std::setprecision(3)
        << cl.shared_recording_pair_fraction
        << (cl.shared_recording_pair_fraction > kLeakageWarnThreshold ? " *" : "")
        << "\n";
  }
  for (const auto& w : manifest_warnings) out << "note: " << w << "\n";
  if (!leakage_warnings.empty()) {
    out << "WARNING: retrieval scores on this dataset are leakage-prone\n";
    for (const auto& w : leakage_warnings) out << "  " << w << "\n";
  }
  return out.str();
}

}  // namespace bof
