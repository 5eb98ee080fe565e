#include "bofbench/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bofbench/errors.hpp"
#include "bofbench/rng.hpp"

namespace bof {
namespace {

std::size_t class_size(std::span<const std::string> labels, std::size_t seed_index) {
  const std::string& label = labels[seed_index];
  auto n = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  if (n < 2)
    throw DataError("metrics undefined for singleton class '" + label + "'");
  return n;
}

void check_labels(const DistanceMatrix& dm, std::span<const std::string> labels) {
  if (labels.size() != dm.size())
    throw DataError("label count " + std::to_string(labels.size()) +
                    " does not match matrix size " + std::to_string(dm.size()));
}

}  // namespace

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, std::vector<double> values)
    : ids_(std::move(ids)), values_(std::move(values)) {
  const std::size_t n = ids_.size();
  if (values_.size() != n * n) throw DataError("distance matrix: wrong value count");
  std::set<std::string> unique(ids_.begin(), ids_.end());
  if (unique.size() != n) throw DataError("distance matrix: duplicate item ids");
  for (std::size_t i = 0; i < n; ++i) {
    if (values_[i * n + i] != 0.0)
      throw DataError("distance matrix: nonzero diagonal at " + ids_[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      double a = values_[i * n + j], b = values_[j * n + i];
      if (!(a >= 0.0) || !std::isfinite(a))
        throw DataError("distance matrix: negative or non-finite entry at (" + ids_[i] +
                        ", " + ids_[j] + ")");
      if (std::fabs(a - b) > 1e-9)
        throw DataError("distance matrix: asymmetry at (" + ids_[i] + ", " + ids_[j] +
                        ")");
    }
  }
}

DistanceMatrix DistanceMatrix::from_pairwise(
    std::vector<std::string> ids,
    const std::function<double(std::size_t, std::size_t)>& fn) {
  const std::size_t n = ids.size();
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = std::max(0.0, fn(i, j));
      values[i * n + j] = d;
      values[j * n + i] = d;
    }
  return DistanceMatrix(std::move(ids), std::move(values));
}

void DistanceMatrix::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << "item_id";
  for (const auto& id : ids_) out << "," << id;
  out << "\n";
  out.precision(17);
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    out << ids_[i];
    for (std::size_t j = 0; j < n; ++j) out << "," << values_[i * n + j];
    out << "\n";
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

DistanceMatrix DistanceMatrix::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");

  std::vector<std::string> header;
  {
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  if (header.size() < 3 || header[0] != "item_id")
    throw DataError(path.string() + ": bad distance matrix header");
  std::vector<std::string> ids(header.begin() + 1, header.end());

  const std::size_t n = ids.size();
  std::vector<double> values;
  values.reserve(n * n);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    if (!std::getline(ss, field, ',') || (row < n && field != ids[row]))
      throw DataError(path.string() + ": row " + std::to_string(row + 2) +
                      " id does not match header order");
    while (std::getline(ss, field, ',')) values.push_back(std::stod(field));
    ++row;
  }
  if (row != n || values.size() != n * n)
    throw DataError(path.string() + ": expected " + std::to_string(n) + "x" +
                    std::to_string(n) + " values");
  return DistanceMatrix(std::move(ids), std::move(values));
}

std::vector<std::size_t> ranked_neighbors(const DistanceMatrix& dm,
                                          std::size_t seed_index) {
  std::vector<std::size_t> order;
  order.reserve(dm.size() - 1);
  for (std::size_t i = 0; i < dm.size(); ++i)
    if (i != seed_index) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double da = dm.at(seed_index, a), db = dm.at(seed_index, b);
    if (da != db) return da < db;
    return dm.ids()[a] < dm.ids()[b];
  });
  return order;
}

double precision_at_5(const DistanceMatrix& dm, std::span<const std::string> labels,
                      std::size_t seed_index) {
  check_labels(dm, labels);
  std::size_t k = std::min<std::size_t>(5, class_size(labels, seed_index) - 1);
  auto order = ranked_neighbors(dm, seed_index);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k; ++r)
    if (labels[order[r]] == labels[seed_index]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k);
}

double average_precision(const DistanceMatrix& dm, std::span<const std::string> labels,
                         std::size_t seed_index) {
  check_labels(dm, labels);
  std::size_t relevant = class_size(labels, seed_index) - 1;
  auto order = ranked_neighbors(dm, seed_index);
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] == labels[seed_index]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return 100.0 * sum / static_cast<double>(relevant);
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  s.mean = mean;
  s.stddev = std::sqrt(std::max(var, 0.0));
  return s;
}

EvalReport evaluate(const DistanceMatrix& dm, std::span<const std::string> labels) {
  check_labels(dm, labels);
  EvalReport report;
  report.item_ids = dm.ids();
  report.labels.assign(labels.begin(), labels.end());
  report.p_at_5.reserve(dm.size());
  report.average_precision.reserve(dm.size());
  for (std::size_t i = 0; i < dm.size(); ++i) {
    report.p_at_5.push_back(precision_at_5(dm, labels, i));
    report.average_precision.push_back(average_precision(dm, labels, i));
  }
  report.p5_summary = summarize(report.p_at_5);
  report.map_summary = summarize(report.average_precision);
  return report;
}

ChanceEstimate chance_baseline(std::span<const std::string> labels, std::size_t trials,
                               std::uint64_t rng_seed) {
  if (trials == 0) throw UsageError("chance_baseline: trials must be >= 1");
  const std::size_t n = labels.size();
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::ostringstream s;
    s << "r" << std::setw(6) << std::setfill('0') << i;
    ids[i] = s.str();
  }

  Rng rng(rng_seed);
  std::vector<double> pooled_p5, pooled_ap, trial_p5_means, trial_ap_means;
  pooled_p5.reserve(trials * n);
  pooled_ap.reserve(trials * n);
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> values(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double d = rng.uniform();
        values[i * n + j] = d;
        values[j * n + i] = d;
      }
    DistanceMatrix dm(ids, std::move(values));
    double p5_acc = 0.0, ap_acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double p5 = precision_at_5(dm, labels, i);
      double ap = average_precision(dm, labels, i);
      pooled_p5.push_back(p5);
      pooled_ap.push_back(ap);
      p5_acc += p5;
      ap_acc += ap;
    }
    trial_p5_means.push_back(p5_acc / static_cast<double>(n));
    trial_ap_means.push_back(ap_acc / static_cast<double>(n));
  }

  ChanceEstimate est;
  est.p_at_5 = summarize(pooled_p5);
  est.map = summarize(pooled_ap);
  est.p5_trial_mean_std = summarize(trial_p5_means).stddev;
  est.map_trial_mean_std = summarize(trial_ap_means).stddev;
  est.trials = trials;
  est.rng_seed = rng_seed;
  return est;
}

std::string EvalReport::to_json_string(int indent) const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["method"] = method_label;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  j["item_ids"] = item_ids;
  j["labels"] = labels;
  j["per_seed"] = {{"p_at_5", p_at_5}, {"average_precision", average_precision}};
  j["aggregate"] = {
      {"p_at_5", {{"mean", p5_summary.mean}, {"std", p5_summary.stddev}}},
      {"map", {{"mean", map_summary.mean}, {"std", map_summary.stddev}}}};
  if (chance) {
    j["chance"] = {
        {"p_at_5", {{"mean", chance->p_at_5.mean}, {"std", chance->p_at_5.stddev}}},
        {"map", {{"mean", chance->map.mean}, {"std", chance->map.stddev}}},
        {"p5_trial_mean_std", chance->p5_trial_mean_std},
        {"map_trial_mean_std", chance->map_trial_mean_std},
        {"trials", chance->trials},
        {"rng_seed", chance->rng_seed}};
  }
  return j.dump(indent);
}

EvalReport EvalReport::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report parse error: ") + e.what());
  }
  try {
    EvalReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.method_label = j.at("method").get<std::string>();
    for (const auto& [k, v] : j.at("config").items())
      r.config.emplace_back(k, v.get<std::string>());
    r.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.p_at_5 = j.at("per_seed").at("p_at_5").get<std::vector<double>>();
    r.average_precision =
        j.at("per_seed").at("average_precision").get<std::vector<double>>();
    r.p5_summary = {j.at("aggregate").at("p_at_5").at("mean").get<double>(),
                    j.at("aggregate").at("p_at_5").at("std").get<double>()};
    r.map_summary = {j.at("aggregate").at("map").at("mean").get<double>(),
                     j.at("aggregate").at("map").at("std").get<double>()};
    if (j.contains("chance")) {
      ChanceEstimate c;
      c.p_at_5 = {j["chance"]["p_at_5"]["mean"].get<double>(),
                  j["chance"]["p_at_5"]["std"].get<double>()};
      c.map = {j["chance"]["map"]["mean"].get<double>(),
               j["chance"]["map"]["std"].get<double>()};
      c.p5_trial_mean_std = j["chance"]["p5_trial_mean_std"].get<double>();
      c.map_trial_mean_std = j["chance"]["map_trial_mean_std"].get<double>();
      c.trials = j["chance"]["trials"].get<std::size_t>();
      c.rng_seed = j["chance"]["rng_seed"].get<std::uint64_t>();
      r.chance = c;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report missing fields: ") + e.what());
  }
}

std::string format_results_table(std::span<const EvalReport* const> reports) {
  auto cell = [](const MetricSummary& p5, const MetricSummary& ap) {
    std::ostringstream s;
    s << std::llround(p5.mean) << "±" << std::llround(p5.stddev) << " / "
      << std::llround(ap.mean) << "±" << std::llround(ap.stddev);
    return s.str();
  };

  // One row per dataset; methods become columns in first-seen order.
  std::vector<std::string> datasets, methods;
  std::map<std::string, std::map<std::string, std::string>> cells;
  std::map<std::string, std::string> chance_cells;
  for (const auto* r : reports) {
    if (std::find(datasets.begin(), datasets.end(), r->dataset) == datasets.end())
      datasets.push_back(r->dataset);
    if (std::find(methods.begin(), methods.end(), r->method_label) == methods.end())
      methods.push_back(r->method_label);
    cells[r->dataset][r->method_label] = cell(r->p5_summary, r->map_summary);
    if (r->chance && !chance_cells.count(r->dataset))
      chance_cells[r->dataset] = cell(r->chance->p_at_5, r->chance->map);
  }

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header = {"dataBase", "chance"};
  header.insert(header.end(), methods.begin(), methods.end());
  table.push_back(header);
  for (const auto& ds : datasets) {
    std::vector<std::string> row = {ds,
                                    chance_cells.count(ds) ? chance_cells[ds] : "-"};
    for (const auto& m : methods)
      row.push_back(cells[ds].count(m) ? cells[ds][m] : "-");
    table.push_back(row);
  }

  // "±" is two bytes in UTF-8; account for that when aligning.
  auto display_width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s)
      if ((c & 0xC0) != 0x80) ++w;
    return w;
  };
  std::vector<std::size_t> widths(table[0].size(), 0);
  for (const auto& row : table)
    for (std::size_t c = 0; c < row.size(); ++c)
      widths[c] = std::max(widths[c], display_width(row[c]));

  std::ostringstream out;
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size())
        out << std::string(widths[c] - display_width(row[c]) + 3, ' ');
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace bof
