#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bof::testing::oracle {
namespace {

constexpr std::size_t kWindow = 2048;
constexpr std::size_t kHop = 1024;
constexpr std::size_t kFilters = 40;
constexpr std::size_t kCoeffs = 20;

double mel_of(double hz) {
  return hz < 1000.0 ? hz * 3.0 / 200.0
                     : 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

double hz_of(double mel) {
  return mel < 15.0 ? mel * 200.0 / 3.0
                    : 1000.0 * std::pow(6.4, (mel - 15.0) / 27.0);
}

}  // namespace

std::vector<std::vector<double>> naive_mfcc(const SampleBuffer& buf, bool include_c0) {
  const int sr = buf.sample_rate;
  const std::size_t n_frames = (buf.samples.size() - kWindow) / kHop + 1;

  // filter edges
  std::vector<double> edges(kFilters + 2);
  double lo = mel_of(20.0), hi = mel_of(sr / 2.0);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = hz_of(lo + (hi - lo) * static_cast<double>(i) / (kFilters + 1));

  const std::size_t bins = kWindow / 2 + 1;
  std::vector<std::vector<double>> bank(kFilters, std::vector<double>(bins, 0.0));
  for (std::size_t f = 0; f < kFilters; ++f) {
    double a = edges[f], b = edges[f + 1], c = edges[f + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      double hz = static_cast<double>(k) * sr / static_cast<double>(kWindow);
      double w = 0.0;
      if (hz > a && hz < b) w = (hz - a) / (b - a);
      if (hz >= b && hz < c) w = (c - hz) / (c - b);
      bank[f][k] = w * 2.0 / (c - a);
    }
  }

  std::vector<std::vector<double>> frames;
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* x = buf.samples.data() + t * kHop;
    // direct DFT of the Hann-weighted frame
    std::vector<double> mag(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t i = 0; i < kWindow; ++i) {
        double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / kWindow);
        double v = x[i] * w;
        double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                     static_cast<double>(kWindow);
        re += v * std::cos(ang);
        im += v * std::sin(ang);
      }
      mag[k] = std::hypot(re, im);
    }

    std::vector<double> logmel(kFilters);
    for (std::size_t f = 0; f < kFilters; ++f) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += bank[f][k] * mag[k];
      logmel[f] = std::log(std::max(e, 1e-10));
    }

    std::vector<double> coeffs;
    for (std::size_t k = include_c0 ? 0 : 1; k < kCoeffs; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kFilters; ++i)
        acc += logmel[i] *
               std::cos(M_PI * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) /
                        (2.0 * static_cast<double>(kFilters)));
      acc *= std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(kFilters));
      coeffs.push_back(acc);
    }
    frames.push_back(std::move(coeffs));
  }
  return frames;
}

double diag_gaussian_kl(std::span<const double> mu0, std::span<const double> var0,
                        std::span<const double> mu1, std::span<const double> var1) {
  double acc = 0.0;
  for (std::size_t j = 0; j < mu0.size(); ++j) {
    double dm = mu0[j] - mu1[j];
    acc += std::log(var1[j] / var0[j]) + (var0[j] + dm * dm) / var1[j] - 1.0;
  }
  return 0.5 * acc;
}

namespace {

std::vector<std::size_t> naive_ranking(const std::vector<std::vector<double>>& dist,
                                       const std::vector<std::string>& ids,
                                       std::size_t seed) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (i != seed) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dist[seed][a] != dist[seed][b]) return dist[seed][a] < dist[seed][b];
    return ids[a] < ids[b];
  });
  return order;
}

std::size_t members(const std::vector<std::string>& labels, const std::string& label) {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

}  // namespace

double naive_precision_at_5(const std::vector<std::vector<double>>& dist,
                            const std::vector<std::string>& ids,
                            const std::vector<std::string>& labels, std::size_t seed) {
  std::size_t k = std::min<std::size_t>(5, members(labels, labels[seed]) - 1);
  auto order = naive_ranking(dist, ids, seed);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k; ++r)
    if (labels[order[r]] == labels[seed]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k);
}

double naive_average_precision(const std::vector<std::vector<double>>& dist,
                               const std::vector<std::string>& ids,
                               const std::vector<std::string>& labels, std::size_t seed) {
  std::size_t relevant = members(labels, labels[seed]) - 1;
  auto order = naive_ranking(dist, ids, seed);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]] == labels[seed]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return 100.0 * sum / static_cast<double>(relevant);
}

std::vector<double> kahan_mean(const std::vector<std::vector<double>>& frames) {
  const std::size_t dim = frames.front().size();
  std::vector<double> sum(dim, 0.0), comp(dim, 0.0);
  for (const auto& frame : frames) {
    for (std::size_t j = 0; j < dim; ++j) {
      double y = frame[j] - comp[j];
      double t = sum[j] + y;
      comp[j] = (t - sum[j]) - y;
      sum[j] = t;
    }
  }
  for (double& v : sum) v /= static_cast<double>(frames.size());
  return sum;
}

double exhaustive_signflip_pvalue(std::span<const double> diffs) {
  const std::size_t n = diffs.size();
  if (n > 20) throw std::invalid_argument("exhaustive_signflip_pvalue: n too large");
  double observed = 0.0;
  for (double d : diffs) observed += d;
  observed = std::fabs(observed / static_cast<double>(n));
  const double eps = 1e-12 * std::max(1.0, observed);

  std::uint64_t hits = 0;
  const std::uint64_t total = 1ULL << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      t += (mask >> i) & 1 ? -diffs[i] : diffs[i];
    if (std::fabs(t / static_cast<double>(n)) >= observed - eps) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double pair_fraction(const std::vector<std::string>& recording_ids) {
  const std::size_t n = recording_ids.size();
  if (n < 2) return 0.0;
  std::size_t shared = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      ++total;
      if (recording_ids[i] == recording_ids[j]) ++shared;
    }
  return static_cast<double>(shared) / static_cast<double>(total);
}

double expected_chance_precision(std::size_t n_items, std::size_t class_size) {
  return 100.0 * static_cast<double>(class_size - 1) / static_cast<double>(n_items - 1);
}

}  // namespace bof::testing::oracle
