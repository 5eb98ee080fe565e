#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bofbench/features.hpp"

namespace bof {

inline constexpr std::size_t kDefaultMixtureComponents = 50;
inline constexpr std::size_t kDefaultMcSamples = 2000;
inline constexpr std::size_t kEmMaxIterations = 200;
inline constexpr double kEmConvergencePerFrame = 1e-5;
inline constexpr std::size_t kKmeansIterations = 10;
inline constexpr double kResponsibilityFloor = 1e-10;

struct FitInfo {
  std::size_t iterations = 0;
  double final_loglik = 0.0;              // total over frames
  std::vector<double> loglik_trace;       // per EM iteration, total
  std::size_t requested_components = 0;   // before any reduction
  std::size_t reseeded_components = 0;
  std::vector<std::string> warnings;
};

// Diagonal-covariance Gaussian mixture.
struct GmmModel {
  std::size_t components = 0;  // M
  std::size_t dim = 0;
  std::vector<double> weights;     // M, sums to 1
  std::vector<double> means;       // M * dim, row-major
  std::vector<double> variances;   // M * dim, each >= the fit's floor
  std::uint64_t seed = 0;
  FitInfo fit;

  // Throws DataError when invariants are violated.
  void validate() const;
};

enum class DistanceMethod { monte_carlo, marginalization, euclidean_mean };

struct DistanceConfig {
  DistanceMethod method = DistanceMethod::monte_carlo;
  std::size_t mc_samples = kDefaultMcSamples;
  std::uint64_t rng_seed = 0;
};

// EM fit with k-means++ initialization (10 Lloyd iterations), variance
// flooring each M-step, and re-seeding of starved components. When the
// sequence has fewer frames than requested components, the component count
// is reduced to the frame count and a warning is recorded.
GmmModel fit_gmm(const FeatureSequence& features, std::size_t components,
                 std::uint64_t rng_seed);

// Total log-likelihood of the frames under the model, log-sum-exp
// stabilized. Invariant under component relabeling, bit for bit.
double loglik(const GmmModel& model, const FeatureSequence& features);

// n independent draws; deterministic given the seed and invariant under
// component relabeling.
FeatureSequence sample_gmm(const GmmModel& model, std::size_t n,
                           std::uint64_t rng_seed);

// Symmetrized Monte-Carlo KL estimate: mean[log p - log q] over samples of
// p, plus the same with roles swapped. Per-model sampling seeds derive from
// model content hashes, so the result is symmetric in its arguments and
// exactly zero for identical models.
double kl_mc(const GmmModel& p, const GmmModel& q, const DistanceConfig& cfg);

// Cross-likelihood distance on the fitted features themselves:
// [L(p|pf)/Np + L(q|qf)/Nq] - [L(q|pf)/Np + L(p|qf)/Nq].
double kl_marginal(const GmmModel& p_model, const GmmModel& q_model,
                   const FeatureSequence& p_feats, const FeatureSequence& q_feats);

// Order-independent digest of (dim, M, weights, means, variances) over the
// canonical component ordering.
std::uint64_t content_hash(const GmmModel& model);

// Versioned binary record, little-endian 64-bit floats.
void save_model(const std::filesystem::path& path, const GmmModel& model);
GmmModel load_model(const std::filesystem::path& path);

}  // namespace bof
