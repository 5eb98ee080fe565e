#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bof {

inline constexpr std::size_t kDefaultChanceTrials = 1000;

// Symmetric pairwise distances with a zero diagonal.
class DistanceMatrix {
 public:
  DistanceMatrix(std::vector<std::string> ids, std::vector<double> values);

  // Fills both triangles from fn(i, j), i < j; negative values (Monte-Carlo
  // estimator noise) are clamped to zero.
  static DistanceMatrix from_pairwise(
      std::vector<std::string> ids,
      const std::function<double(std::size_t, std::size_t)>& fn);

  std::size_t size() const { return ids_.size(); }
  double at(std::size_t i, std::size_t j) const { return values_[i * size() + j]; }
  const std::vector<std::string>& ids() const { return ids_; }

  void save_csv(const std::filesystem::path& path) const;
  static DistanceMatrix load_csv(const std::filesystem::path& path);

 private:
  std::vector<std::string> ids_;
  std::vector<double> values_;
};

// All items except the seed, ranked by ascending distance; ties broken by
// ascending item id.
std::vector<std::size_t> ranked_neighbors(const DistanceMatrix& dm,
                                          std::size_t seed_index);

// Percent of same-class items among the k = min(5, class size - 1) nearest
// neighbors of the seed.
double precision_at_5(const DistanceMatrix& dm, std::span<const std::string> labels,
                      std::size_t seed_index);

// Percent average precision over the class size - 1 relevant items.
double average_precision(const DistanceMatrix& dm, std::span<const std::string> labels,
                         std::size_t seed_index);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct ChanceEstimate {
  MetricSummary p_at_5;   // pooled per-seed values across trials
  MetricSummary map;
  double p5_trial_mean_std = 0.0;   // spread of per-trial means
  double map_trial_mean_std = 0.0;
  std::size_t trials = 0;
  std::uint64_t rng_seed = 0;
};

struct EvalReport {
  std::string dataset;
  std::string method_label;  // table column header: "BOF", "Average", ...
  std::vector<std::string> item_ids;
  std::vector<std::string> labels;
  std::vector<double> p_at_5;             // per seed, percent
  std::vector<double> average_precision;  // per seed, percent
  MetricSummary p5_summary;
  MetricSummary map_summary;
  std::optional<ChanceEstimate> chance;
  std::vector<std::pair<std::string, std::string>> config;  // echo, ordered

  std::string to_json_string(int indent = 2) const;
  static EvalReport from_json_string(const std::string& text);
};

// Per-seed metrics for every item plus aggregate mean and population
// standard deviation, in percent.
EvalReport evaluate(const DistanceMatrix& dm, std::span<const std::string> labels);

// Monte-Carlo chance estimate: random symmetric uniform distance matrices
// evaluated against the given labels.
ChanceEstimate chance_baseline(std::span<const std::string> labels, std::size_t trials,
                               std::uint64_t rng_seed);

// Aligned text table, one row per report: dataset, chance, then one column
// per method.
std::string format_results_table(std::span<const EvalReport* const> reports);

MetricSummary summarize(std::span<const double> values);

}  // namespace bof
