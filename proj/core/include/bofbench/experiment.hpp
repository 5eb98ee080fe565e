#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bofbench/dataset.hpp"
#include "bofbench/eval.hpp"
#include "bofbench/gmm.hpp"

namespace bof {

struct ExperimentConfig {
  std::filesystem::path manifest;
  UnitPolicy policy = UnitPolicy::whole();
  bool normalize_audio = false;
  bool include_c0 = true;
  DistanceMethod method = DistanceMethod::monte_carlo;
  std::size_t components = kDefaultMixtureComponents;
  std::size_t mc_samples = kDefaultMcSamples;
  std::optional<std::uint64_t> rng_seed;  // mandatory for stochastic methods
  std::size_t chance_trials = kDefaultChanceTrials;
  std::filesystem::path output_dir;  // empty: nothing written
  std::filesystem::path cache_dir;   // empty: caching disabled
  unsigned threads = 0;              // 0: hardware concurrency

  void validate() const;
  std::uint64_t effective_seed() const { return rng_seed.value_or(0); }
  std::string method_name() const;   // bof_mc | bof_marginal | average
  std::string method_label() const;  // BOF | Average
};

std::optional<DistanceMethod> parse_method(const std::string& name);

// Staged pipeline over one manifest. Stages are computed on demand, reused
// within the instance, and cached on disk by content hash when cache_dir is
// set, so ablation reruns skip the expensive work.
class ExperimentPipeline {
 public:
  explicit ExperimentPipeline(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const DatasetManifest& manifest() const { return manifest_; }

  const std::vector<FeatureSequence>& features();
  const std::vector<GmmModel>& models();  // bof methods only
  const DistanceMatrix& distances();
  // evaluate + chance baseline + config echo
  const EvalReport& report();

 private:
  ExperimentConfig cfg_;
  DatasetManifest manifest_;
  std::vector<std::string> feature_keys_;
  std::vector<FeatureSequence> features_;
  std::vector<GmmModel> models_;
  std::optional<DistanceMatrix> distances_;
  std::optional<EvalReport> report_;
};

// Full pipeline: materialize -> mfcc -> model/means -> distances ->
// evaluate (+ chance baseline). When output_dir is set, writes report.json,
// report.txt and distances.csv.
EvalReport run_experiment(const ExperimentConfig& cfg);

struct RunComparison {
  std::string dataset;
  std::string method_a, method_b;
  std::size_t items = 0;
  double p5_mean_diff = 0.0;   // method_a minus method_b, points
  double map_mean_diff = 0.0;
  double p5_p_value = 1.0;
  double map_p_value = 1.0;
  std::size_t permutations = 0;
  bool exhaustive = false;  // all sign patterns enumerated
  std::uint64_t rng_seed = 0;

  std::string to_json_string(int indent = 2) const;
  std::string summary_text() const;
};

// Paired per-seed comparison with a two-sided sign-flip permutation test.
// All 2^n sign patterns are enumerated when that is no more work than the
// requested permutation count; otherwise patterns are sampled.
RunComparison compare_runs(const EvalReport& a, const EvalReport& b,
                           std::size_t permutations = 10000,
                           std::uint64_t rng_seed = 0);

double paired_permutation_pvalue(std::span<const double> diffs,
                                 std::size_t permutations, std::uint64_t rng_seed,
                                 bool* exhaustive = nullptr);

inline constexpr double kLeakageWarnThreshold = 0.2;

struct AuditReport {
  LeakageSummary summary;
  std::vector<std::string> manifest_warnings;
  std::vector<std::string> leakage_warnings;  // classes above threshold

  std::string to_json_string(int indent = 2) const;
  std::string text() const;
};

AuditReport audit_manifest(const std::filesystem::path& manifest, UnitPolicy policy);

// 64-bit FNV-1a over a file's bytes; cache-key ingredient.
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace bof
