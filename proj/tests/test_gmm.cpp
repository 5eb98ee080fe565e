#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "bofbench/errors.hpp"
#include "bofbench/gmm.hpp"
#include "bofbench/rng.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace bof;

namespace {

FeatureSequence constant_frames(std::vector<double> frame, std::size_t n) {
  FeatureSequence fs;
  fs.dim = frame.size();
  fs.frames = n;
  for (std::size_t i = 0; i < n; ++i)
    fs.values.insert(fs.values.end(), frame.begin(), frame.end());
  return fs;
}

GmmModel make_model(std::size_t dim, std::vector<double> weights,
                    std::vector<double> means, std::vector<double> vars) {
  GmmModel m;
  m.components = weights.size();
  m.dim = dim;
  m.weights = std::move(weights);
  m.means = std::move(means);
  m.variances = std::move(vars);
  return m;
}

GmmModel permuted(const GmmModel& m, const std::vector<std::size_t>& perm) {
  GmmModel out = m;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.weights[i] = m.weights[perm[i]];
    for (std::size_t j = 0; j < m.dim; ++j) {
      out.means[i * m.dim + j] = m.means[perm[i] * m.dim + j];
      out.variances[i * m.dim + j] = m.variances[perm[i] * m.dim + j];
    }
  }
  return out;
}

GmmModel random_model(std::size_t components, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  GmmModel m;
  m.components = components;
  m.dim = dim;
  m.weights.resize(components);
  double total = 0.0;
  for (double& w : m.weights) {
    w = 0.2 + rng.uniform();
    total += w;
  }
  for (double& w : m.weights) w /= total;
  // exact renormalization so validate() passes
  double sum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
  m.weights.back() += 1.0 - sum;
  for (std::size_t i = 0; i < components * dim; ++i) {
    m.means.push_back(3.0 * rng.normal());
    m.variances.push_back(0.5 + rng.uniform());
  }
  return m;
}

}  // namespace

TEST_CASE("default component count constant") {
  CHECK(kDefaultMixtureComponents == 50);
}

TEST_CASE("fit on identical frames collapses to a floored point mass") {
  FeatureSequence fs = constant_frames({1.5, -2.0, 0.0}, 40);
  GmmModel m = fit_gmm(fs, 1, 7);
  REQUIRE(m.components == 1);
  CHECK(m.weights[0] == 1.0);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(m.means[j] == doctest::Approx(fs.at(0, j)).epsilon(1e-12));
    CHECK(m.variances[j] == 1e-8);  // zero global variance -> absolute floor
  }
}

TEST_CASE("fit recovers two well-separated clusters") {
  std::vector<double> lo(20, -5.0), hi(20, 5.0);
  FeatureSequence fs = testing::gaussian_frames({lo, hi}, {1.0, 1.0}, 1000, 99);
  GmmModel m = fit_gmm(fs, 2, 11);
  REQUIRE(m.components == 2);

  // brute-force oracle: assign frames to the nearest true mean
  std::vector<std::vector<double>> cluster_mean(2, std::vector<double>(20, 0.0));
  std::vector<std::size_t> counts(2, 0);
  for (std::size_t i = 0; i < fs.frames; ++i) {
    auto x = fs.frame(i);
    double dlo = 0.0, dhi = 0.0;
    for (std::size_t j = 0; j < 20; ++j) {
      dlo += (x[j] + 5.0) * (x[j] + 5.0);
      dhi += (x[j] - 5.0) * (x[j] - 5.0);
    }
    std::size_t c = dlo < dhi ? 0 : 1;
    counts[c]++;
    for (std::size_t j = 0; j < 20; ++j) cluster_mean[c][j] += x[j];
  }
  for (std::size_t c = 0; c < 2; ++c)
    for (double& v : cluster_mean[c]) v /= static_cast<double>(counts[c]);

  // match fitted components to oracle clusters by sign of the first mean
  std::size_t m_lo = m.means[0] < 0 ? 0 : 1;
  std::size_t m_hi = 1 - m_lo;
  for (std::size_t j = 0; j < 20; ++j) {
    CHECK(std::fabs(m.means[m_lo * 20 + j] - (-5.0)) < 0.2);
    CHECK(std::fabs(m.means[m_hi * 20 + j] - 5.0) < 0.2);
    CHECK(std::fabs(m.means[m_lo * 20 + j] - cluster_mean[0][j]) < 0.05);
    CHECK(std::fabs(m.means[m_hi * 20 + j] - cluster_mean[1][j]) < 0.05);
  }
  CHECK(std::fabs(m.weights[0] - 0.5) < 0.05);
  CHECK(std::fabs(m.weights[1] - 0.5) < 0.05);
}

TEST_CASE("component count is reduced to the frame count") {
  FeatureSequence fs = testing::gaussian_frames({{0.0, 0.0}}, {1.0}, 10, 3);
  GmmModel m = fit_gmm(fs, 50, 5);
  CHECK(m.components == 10);
  CHECK(m.fit.requested_components == 50);
  REQUIRE(!m.fit.warnings.empty());
}

TEST_CASE("EM log-likelihood trace is non-decreasing") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    std::vector<double> a(5, 0.0), b(5, 3.0), c(5, -4.0);
    FeatureSequence fs = testing::gaussian_frames({a, b, c}, {1.0, 2.0, 0.5}, 150, seed);
    GmmModel m = fit_gmm(fs, 5, seed);
    const auto& trace = m.fit.loglik_trace;
    REQUIRE(trace.size() >= 2);
    for (std::size_t t = 1; t < trace.size(); ++t)
      CHECK(trace[t] - trace[t - 1] >= -1e-6 * static_cast<double>(fs.frames));
    CHECK(m.fit.final_loglik == trace.back());
    CHECK(m.fit.iterations == trace.size());
  }
}

TEST_CASE("loglik closed-form values for a unit Gaussian") {
  const std::size_t d = 4;
  GmmModel m = make_model(d, {1.0}, std::vector<double>(d, 0.0), std::vector<double>(d, 1.0));

  FeatureSequence at_mode = constant_frames(std::vector<double>(d, 0.0), 1);
  CHECK(loglik(m, at_mode) ==
        doctest::Approx(-0.5 * d * std::log(2.0 * M_PI)).epsilon(1e-12));

  std::vector<double> x(d, 0.0);
  x[0] = 1.0;
  x[1] = -1.0;  // squared norm 2
  FeatureSequence off = constant_frames(x, 1);
  CHECK(loglik(m, off) ==
        doctest::Approx(-0.5 * d * std::log(2.0 * M_PI) - 1.0).epsilon(1e-12));
}

TEST_CASE("loglik matches a naive density summation") {
  GmmModel m = random_model(3, 6, 17);
  FeatureSequence fs = testing::gaussian_frames({std::vector<double>(6, 0.0)}, {2.0}, 100, 23);

  double naive = 0.0;
  for (std::size_t i = 0; i < fs.frames; ++i) {
    auto x = fs.frame(i);
    double density = 0.0;
    for (std::size_t c = 0; c < m.components; ++c) {
      double q = 0.0, norm = 1.0;
      for (std::size_t j = 0; j < m.dim; ++j) {
        double diff = x[j] - m.means[c * m.dim + j];
        q += diff * diff / m.variances[c * m.dim + j];
        norm *= 2.0 * M_PI * m.variances[c * m.dim + j];
      }
      density += m.weights[c] * std::exp(-0.5 * q) / std::sqrt(norm);
    }
    naive += std::log(density);
  }
  CHECK(loglik(m, fs) == doctest::Approx(naive).epsilon(1e-9));
}

TEST_CASE("loglik rejects dimension mismatch") {
  GmmModel m = random_model(2, 3, 1);
  FeatureSequence fs = constant_frames({0.0, 0.0}, 5);
  CHECK_THROWS_AS(loglik(m, fs), DataError);
}

TEST_CASE("sampling moments match the model") {
  const std::size_t d = 3;
  GmmModel m = make_model(d, {1.0}, {1.0, -2.0, 0.5}, {1.0, 4.0, 0.25});
  FeatureSequence draws = sample_gmm(m, 100000, 77);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < draws.frames; ++i) mean += draws.at(i, j);
    mean /= static_cast<double>(draws.frames);
    double var = 0.0;
    for (std::size_t i = 0; i < draws.frames; ++i)
      var += (draws.at(i, j) - mean) * (draws.at(i, j) - mean);
    var /= static_cast<double>(draws.frames);

    double se_mean = std::sqrt(m.variances[j] / static_cast<double>(draws.frames));
    double se_var = m.variances[j] * std::sqrt(2.0 / static_cast<double>(draws.frames));
    CHECK(std::fabs(mean - m.means[j]) < 3.0 * se_mean);
    CHECK(std::fabs(var - m.variances[j]) < 3.0 * se_var);
  }
}

TEST_CASE("sampling is deterministic and honors degenerate weights") {
  GmmModel m = make_model(2, {1.0, 0.0}, {0.0, 0.0, 50.0, 50.0}, {1.0, 1.0, 1.0, 1.0});
  FeatureSequence a = sample_gmm(m, 5, 123);
  FeatureSequence b = sample_gmm(m, 5, 123);
  CHECK(a.values == b.values);

  FeatureSequence big = sample_gmm(m, 1000, 9);
  for (std::size_t i = 0; i < big.frames; ++i)
    CHECK(std::fabs(big.at(i, 0)) < 25.0);  // never from the component at 50
}

TEST_CASE("kl_mc of a model with itself is exactly zero") {
  GmmModel m = random_model(4, 5, 31);
  DistanceConfig cfg{DistanceMethod::monte_carlo, 500, 42};
  CHECK(kl_mc(m, m, cfg) == 0.0);
  GmmModel copy = m;
  CHECK(kl_mc(m, copy, cfg) == 0.0);
}

TEST_CASE("kl_mc matches the closed form for single Gaussians") {
  Rng rng(2024);
  DistanceConfig cfg{DistanceMethod::monte_carlo, 100000, 7};
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 4;
    std::vector<double> mu0(d), mu1(d), v0(d), v1(d);
    for (std::size_t j = 0; j < d; ++j) {
      mu0[j] = rng.normal();
      mu1[j] = mu0[j] + 0.7 * rng.normal();
      v0[j] = 0.5 + rng.uniform();
      v1[j] = 0.5 + rng.uniform();
    }
    GmmModel p = make_model(d, {1.0}, mu0, v0);
    GmmModel q = make_model(d, {1.0}, mu1, v1);
    double truth = testing::oracle::diag_gaussian_kl(mu0, v0, mu1, v1) +
                   testing::oracle::diag_gaussian_kl(mu1, v1, mu0, v0);
    double estimate = kl_mc(p, q, cfg);
    double tolerance = truth < 0.2 ? 0.01 : 0.05 * truth;
    CHECK(std::fabs(estimate - truth) <= tolerance);
  }
}

TEST_CASE("kl_mc grows with separation") {
  const std::size_t d = 20;
  DistanceConfig cfg{DistanceMethod::monte_carlo, 2000, 3};
  GmmModel base = make_model(d, {1.0}, std::vector<double>(d, 0.0), std::vector<double>(d, 1.0));
  GmmModel far5 = make_model(d, {1.0}, std::vector<double>(d, 5.0), std::vector<double>(d, 1.0));
  GmmModel far10 = make_model(d, {1.0}, std::vector<double>(d, 10.0), std::vector<double>(d, 1.0));
  double d5 = kl_mc(base, far5, cfg);
  double d10 = kl_mc(base, far10, cfg);
  CHECK(d10 > 100.0);
  CHECK(d10 > d5);
}

TEST_CASE("kl_mc is symmetric bit for bit") {
  GmmModel p = random_model(3, 4, 5);
  GmmModel q = random_model(5, 4, 6);
  DistanceConfig cfg{DistanceMethod::monte_carlo, 1000, 99};
  CHECK(kl_mc(p, q, cfg) == kl_mc(q, p, cfg));
}

TEST_CASE("kl_mc on same-distribution fits stays above the noise bound") {
  std::vector<double> center(8, 1.0);
  FeatureSequence fa = testing::gaussian_frames({center}, {1.5}, 800, 21);
  FeatureSequence fb = testing::gaussian_frames({center}, {1.5}, 800, 22);
  GmmModel p = fit_gmm(fa, 3, 1);
  GmmModel q = fit_gmm(fb, 3, 2);
  DistanceConfig cfg{DistanceMethod::monte_carlo, 2000, 77};
  double est = kl_mc(p, q, cfg);
  CHECK(est >= -3.0 / std::sqrt(static_cast<double>(cfg.mc_samples)));
}

TEST_CASE("component relabeling leaves loglik and distances bit-identical") {
  GmmModel p = random_model(4, 3, 41);
  GmmModel q = random_model(3, 3, 42);
  GmmModel p_shuffled = permuted(p, {2, 0, 3, 1});
  FeatureSequence fs = testing::gaussian_frames({{0.0, 0.0, 0.0}}, {2.0}, 50, 43);

  CHECK(loglik(p, fs) == loglik(p_shuffled, fs));
  DistanceConfig cfg{DistanceMethod::monte_carlo, 800, 11};
  CHECK(kl_mc(p, q, cfg) == kl_mc(p_shuffled, q, cfg));
  CHECK(kl_marginal(p, q, fs, fs) == kl_marginal(p_shuffled, q, fs, fs));
  CHECK(content_hash(p) == content_hash(p_shuffled));
}

TEST_CASE("kl_marginal: zero for identical sides, ordered for clusters") {
  std::vector<double> lo(4, -3.0), hi(4, 3.0);
  FeatureSequence a1 = testing::gaussian_frames({lo}, {1.0}, 400, 1);
  FeatureSequence a2 = testing::gaussian_frames({lo}, {1.0}, 400, 2);
  FeatureSequence b1 = testing::gaussian_frames({hi}, {1.0}, 400, 3);
  GmmModel ma1 = fit_gmm(a1, 2, 10);
  GmmModel ma2 = fit_gmm(a2, 2, 11);
  GmmModel mb1 = fit_gmm(b1, 2, 12);

  CHECK(kl_marginal(ma1, ma1, a1, a1) == 0.0);
  double within = kl_marginal(ma1, ma2, a1, a2);
  double across = kl_marginal(ma1, mb1, a1, b1);
  CHECK(across > within);
}

TEST_CASE("fit rejects bad input") {
  FeatureSequence empty;
  empty.dim = 2;
  CHECK_THROWS_AS(fit_gmm(empty, 2, 1), DataError);

  FeatureSequence bad = constant_frames({1.0, 2.0}, 4);
  bad.values[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_gmm(bad, 2, 1), DataError);
}

TEST_CASE("model file round-trip is bit-exact") {
  auto dir = testing::scratch_dir("gmm");
  FeatureSequence fs =
      testing::gaussian_frames({{0.0, 1.0}, {4.0, -2.0}}, {1.0, 0.5}, 200, 8);
  GmmModel m = fit_gmm(fs, 3, 99);
  save_model(dir / "m.gmm", m);
  GmmModel back = load_model(dir / "m.gmm");
  CHECK(back.components == m.components);
  CHECK(back.dim == m.dim);
  CHECK(back.weights == m.weights);
  CHECK(back.means == m.means);
  CHECK(back.variances == m.variances);
  CHECK(back.seed == m.seed);
  CHECK(back.fit.iterations == m.fit.iterations);
  CHECK(back.fit.final_loglik == m.fit.final_loglik);

  {
    std::ofstream junk(dir / "junk.gmm", std::ios::binary);
    junk << "NOTAMODEL projector";
  }
  CHECK_THROWS_AS(load_model(dir / "junk.gmm"), DataError);
  std::filesystem::remove_all(dir);
}
