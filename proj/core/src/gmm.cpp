#include "bofbench/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "binio.hpp"
#include "bofbench/errors.hpp"
#include "bofbench/rng.hpp"

namespace bof {
namespace {

constexpr char kModelMagic[8] = {'B', 'O', 'F', 'G', 'M', 'M', '0', '1'};

// Component indices sorted by (means row, variances row, weight); gives a
// labeling-independent traversal order.
std::vector<std::size_t> canonical_order(const GmmModel& m) {
  auto row_cmp = [&](const std::vector<double>& v, std::size_t a, std::size_t b) {
    const double* pa = v.data() + a * m.dim;
    const double* pb = v.data() + b * m.dim;
    return std::lexicographical_compare_three_way(pa, pa + m.dim, pb, pb + m.dim);
  };
  std::vector<std::size_t> order(m.components);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (auto c = row_cmp(m.means, a, b); c != 0) return c < 0;
    if (auto c = row_cmp(m.variances, a, b); c != 0) return c < 0;
    return m.weights[a] < m.weights[b];
  });
  return order;
}

// Precomputed per-component terms for density evaluation.
struct DensityEvaluator {
  explicit DensityEvaluator(const GmmModel& m)
      : components(m.components), dim(m.dim), means(m.means.data()) {
    inv_var.resize(components * dim);
    bias.resize(components);
    for (std::size_t i = 0; i < components; ++i) {
      double log_norm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        double v = m.variances[i * dim + j];
        inv_var[i * dim + j] = 1.0 / v;
        log_norm += std::log(2.0 * M_PI * v);
      }
      double w = m.weights[i];
      bias[i] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) -
                0.5 * log_norm;
    }
  }

  // out[i] = log(pi_i N_i(x)).
  void component_log_densities(const double* x, double* out) const {
    for (std::size_t i = 0; i < components; ++i) {
      const double* mu = means + i * dim;
      const double* iv = inv_var.data() + i * dim;
      double q = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        double diff = x[j] - mu[j];
        q += diff * diff * iv[j];
      }
      out[i] = bias[i] - 0.5 * q;
    }
  }

  // log sum_i pi_i N_i(x); addends are accumulated in descending value
  // order so the result does not depend on component labeling.
  double log_density(const double* x, std::vector<double>& scratch) const {
    scratch.resize(components);
    component_log_densities(x, scratch.data());
    std::sort(scratch.begin(), scratch.end(), std::greater<>());
    double m = scratch[0];
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double a : scratch) s += std::exp(a - m);
    return m + std::log(s);
  }

  std::size_t components, dim;
  const double* means;
  std::vector<double> inv_var;
  std::vector<double> bias;
};

void check_dims(const GmmModel& m, const FeatureSequence& f, const char* op) {
  if (m.dim != f.dim)
    throw DataError(std::string(op) + ": dimension mismatch (model " +
                    std::to_string(m.dim) + ", features " + std::to_string(f.dim) + ")");
}

std::vector<double> per_dim_variance(const FeatureSequence& f) {
  std::vector<double> mean(f.dim, 0.0), var(f.dim, 0.0);
  for (std::size_t i = 0; i < f.frames; ++i) {
    auto x = f.frame(i);
    for (std::size_t j = 0; j < f.dim; ++j) mean[j] += x[j];
  }
  for (double& v : mean) v /= static_cast<double>(f.frames);
  for (std::size_t i = 0; i < f.frames; ++i) {
    auto x = f.frame(i);
    for (std::size_t j = 0; j < f.dim; ++j) {
      double d = x[j] - mean[j];
      var[j] += d * d;
    }
  }
  for (double& v : var) v /= static_cast<double>(f.frames);
  return var;
}

double sq_dist(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

// k-means++ seeding followed by a fixed number of Lloyd iterations.
std::vector<double> kmeans_centers(const FeatureSequence& f, std::size_t k, Rng& rng) {
  const std::size_t n = f.frames, d = f.dim;
  std::vector<double> centers(k * d);
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());

  std::size_t first = rng.uniform_index(n);
  std::copy_n(f.frame(first).data(), d, centers.begin());
  for (std::size_t c = 1; c < k; ++c) {
    const double* prev = centers.data() + (c - 1) * d;
    for (std::size_t i = 0; i < n; ++i)
      min_sq[i] = std::min(min_sq[i], sq_dist(f.frame(i).data(), prev, d));
    std::size_t pick = rng.categorical(min_sq);
    std::copy_n(f.frame(pick).data(), d, centers.begin() + static_cast<std::ptrdiff_t>(c * d));
  }

  std::vector<std::size_t> assign(n);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < kKmeansIterations; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = f.frame(i).data();
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double dd = sq_dist(x, centers.data() + c * d, d);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      assign[i] = best;
      counts[best]++;
      const double* frame = x;
      double* sum = sums.data() + best * d;
      for (std::size_t j = 0; j < d; ++j) sum[j] += frame[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep previous center
      for (std::size_t j = 0; j < d; ++j)
        centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
  }
  return centers;
}

}  // namespace

void GmmModel::validate() const {
  if (components == 0 || dim == 0) throw DataError("gmm: empty model");
  if (weights.size() != components || means.size() != components * dim ||
      variances.size() != components * dim)
    throw DataError("gmm: inconsistent parameter sizes");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw DataError("gmm: negative component weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw DataError("gmm: weights do not sum to 1");
  for (double m : means)
    if (!std::isfinite(m)) throw DataError("gmm: non-finite mean");
  for (double v : variances)
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("gmm: non-positive variance");
}

GmmModel fit_gmm(const FeatureSequence& features, std::size_t components,
                 std::uint64_t rng_seed) {
  const std::size_t n = features.frames, d = features.dim;
  if (n == 0 || d == 0) throw DataError("fit_gmm: empty feature sequence");
  for (double v : features.values)
    if (!std::isfinite(v)) throw DataError("fit_gmm: non-finite feature value");
  if (components == 0) throw UsageError("fit_gmm: component count must be >= 1");

  GmmModel model;
  model.dim = d;
  model.seed = rng_seed;
  model.fit.requested_components = components;
  if (components > n) {
    model.fit.warnings.push_back("component count reduced from " +
                                 std::to_string(components) + " to " + std::to_string(n) +
                                 " (sequence has only " + std::to_string(n) + " frames)");
    components = n;
  }
  const std::size_t m = components;
  model.components = m;

  std::vector<double> gvar = per_dim_variance(features);
  std::vector<double> floor(d);
  for (std::size_t j = 0; j < d; ++j) floor[j] = std::max(1e-4 * gvar[j], 1e-8);

  // init from k-means
  Rng rng(rng_seed);
  model.means = kmeans_centers(features, m, rng);
  model.weights.assign(m, 0.0);
  model.variances.assign(m * d, 0.0);
  {
    std::vector<std::size_t> counts(m, 0);
    std::vector<std::size_t> assign(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = features.frame(i).data();
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < m; ++c) {
        double dd = sq_dist(x, model.means.data() + c * d, d);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      assign[i] = best;
      counts[best]++;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = features.frame(i).data();
      const double* mu = model.means.data() + assign[i] * d;
      double* var = model.variances.data() + assign[i] * d;
      for (std::size_t j = 0; j < d; ++j) {
        double diff = x[j] - mu[j];
        var[j] += diff * diff;
      }
    }
    const double smoothing = 1e-3;
    for (std::size_t c = 0; c < m; ++c) {
      model.weights[c] = (static_cast<double>(counts[c]) + smoothing) /
                         (static_cast<double>(n) + smoothing * static_cast<double>(m));
      for (std::size_t j = 0; j < d; ++j) {
        double v = counts[c] > 1
                       ? model.variances[c * d + j] / static_cast<double>(counts[c])
                       : gvar[j];
        model.variances[c * d + j] = std::max(v, floor[j]);
      }
    }
  }

  // EM
  std::vector<double> resp(m);
  std::vector<double> nk(m), sum_x(m * d), sum_x2(m * d);
  std::vector<double> scratch;
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 1;; ++iter) {
    DensityEvaluator eval(model);
    std::fill(nk.begin(), nk.end(), 0.0);
    std::fill(sum_x.begin(), sum_x.end(), 0.0);
    std::fill(sum_x2.begin(), sum_x2.end(), 0.0);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = features.frame(i).data();
      eval.component_log_densities(x, resp.data());
      double mx = *std::max_element(resp.begin(), resp.end());
      double s = 0.0;
      for (double& r : resp) {
        r = std::exp(r - mx);
        s += r;
      }
      ll += mx + std::log(s);
      double inv_s = 1.0 / s;
      for (std::size_t c = 0; c < m; ++c) {
        double g = resp[c] * inv_s;
        if (g == 0.0) continue;
        nk[c] += g;
        double* sx = sum_x.data() + c * d;
        double* sx2 = sum_x2.data() + c * d;
        for (std::size_t j = 0; j < d; ++j) {
          double xv = x[j];
          sx[j] += g * xv;
          sx2[j] += g * xv * xv;
        }
      }
    }

    model.fit.loglik_trace.push_back(ll);
    bool converged = iter > 1 && (ll - prev_ll) < kEmConvergencePerFrame * static_cast<double>(n);
    if (converged || iter >= kEmMaxIterations) break;
    prev_ll = ll;

    // M-step
    std::vector<std::size_t> starved;
    for (std::size_t c = 0; c < m; ++c) {
      if (nk[c] < kResponsibilityFloor) {
        starved.push_back(c);
        continue;
      }
      model.weights[c] = nk[c] / static_cast<double>(n);
      double* mu = model.means.data() + c * d;
      double* var = model.variances.data() + c * d;
      const double* sx = sum_x.data() + c * d;
      const double* sx2 = sum_x2.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) {
        mu[j] = sx[j] / nk[c];
        var[j] = std::max(sx2[j] / nk[c] - mu[j] * mu[j], floor[j]);
      }
    }
    if (!starved.empty()) {
      DensityEvaluator updated(model);
      for (std::size_t c : starved) {
        std::size_t worst = 0;
        double worst_ll = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
          double v = updated.log_density(features.frame(i).data(), scratch);
          if (v < worst_ll) {
            worst_ll = v;
            worst = i;
          }
        }
        std::copy_n(features.frame(worst).data(), d, model.means.begin() + static_cast<std::ptrdiff_t>(c * d));
        for (std::size_t j = 0; j < d; ++j)
          model.variances[c * d + j] = std::max(gvar[j], floor[j]);
        model.weights[c] = 1.0 / static_cast<double>(n);
        model.fit.reseeded_components++;
      }
      double total = std::accumulate(model.weights.begin(), model.weights.end(), 0.0);
      for (double& w : model.weights) w /= total;
    }
  }

  model.fit.iterations = model.fit.loglik_trace.size();
  model.fit.final_loglik = model.fit.loglik_trace.back();
  model.validate();
  return model;
}

double loglik(const GmmModel& model, const FeatureSequence& features) {
  check_dims(model, features, "loglik");
  model.validate();
  DensityEvaluator eval(model);
  std::vector<double> scratch;
  double total = 0.0;
  for (std::size_t i = 0; i < features.frames; ++i)
    total += eval.log_density(features.frame(i).data(), scratch);
  return total;
}

FeatureSequence sample_gmm(const GmmModel& model, std::size_t n, std::uint64_t rng_seed) {
  model.validate();
  if (n == 0) throw UsageError("sample_gmm: sample count must be >= 1");
  std::vector<std::size_t> order = canonical_order(model);
  std::vector<double> ordered_weights(model.components);
  for (std::size_t i = 0; i < model.components; ++i)
    ordered_weights[i] = model.weights[order[i]];

  FeatureSequence fs;
  fs.dim = model.dim;
  fs.frames = n;
  fs.values.resize(n * model.dim);
  fs.source_id = "gmm-sample";
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = order[rng.categorical(ordered_weights)];
    const double* mu = model.means.data() + c * model.dim;
    const double* var = model.variances.data() + c * model.dim;
    double* out = fs.values.data() + i * model.dim;
    for (std::size_t j = 0; j < model.dim; ++j)
      out[j] = mu[j] + std::sqrt(var[j]) * rng.normal();
  }
  return fs;
}

std::uint64_t content_hash(const GmmModel& model) {
  std::vector<std::size_t> order = canonical_order(model);
  Fnv1a h;
  h.update_u64(model.dim);
  h.update_u64(model.components);
  for (std::size_t c : order) {
    h.update_f64(model.weights[c]);
    for (std::size_t j = 0; j < model.dim; ++j) h.update_f64(model.means[c * model.dim + j]);
    for (std::size_t j = 0; j < model.dim; ++j)
      h.update_f64(model.variances[c * model.dim + j]);
  }
  return h.digest();
}

double kl_mc(const GmmModel& p, const GmmModel& q, const DistanceConfig& cfg) {
  if (p.dim != q.dim)
    throw DataError("kl_mc: dimension mismatch (" + std::to_string(p.dim) + " vs " +
                    std::to_string(q.dim) + ")");
  if (cfg.mc_samples == 0) throw UsageError("kl_mc: mc_samples must be >= 1");

  auto direction = [&](const GmmModel& from, const GmmModel& to, std::uint64_t seed) {
    FeatureSequence draws = sample_gmm(from, cfg.mc_samples, seed);
    DensityEvaluator ef(from), et(to);
    std::vector<double> scratch;
    double acc = 0.0;
    for (std::size_t i = 0; i < draws.frames; ++i) {
      const double* x = draws.frame(i).data();
      acc += ef.log_density(x, scratch) - et.log_density(x, scratch);
    }
    return acc / static_cast<double>(draws.frames);
  };

  std::uint64_t seed_p = mix_seed(content_hash(p), cfg.rng_seed);
  std::uint64_t seed_q = mix_seed(content_hash(q), cfg.rng_seed);
  return direction(p, q, seed_p) + direction(q, p, seed_q);
}

double kl_marginal(const GmmModel& p_model, const GmmModel& q_model,
                   const FeatureSequence& p_feats, const FeatureSequence& q_feats) {
  check_dims(p_model, q_feats, "kl_marginal");
  check_dims(q_model, p_feats, "kl_marginal");
  const double np = static_cast<double>(p_feats.frames);
  const double nq = static_cast<double>(q_feats.frames);
  double self = loglik(p_model, p_feats) / np + loglik(q_model, q_feats) / nq;
  double cross = loglik(q_model, p_feats) / np + loglik(p_model, q_feats) / nq;
  return self - cross;
}

void save_model(const std::filesystem::path& path, const GmmModel& model) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out.write(kModelMagic, 8);
  detail::write_u32(out, static_cast<std::uint32_t>(model.dim));
  detail::write_u32(out, static_cast<std::uint32_t>(model.components));
  detail::write_u64(out, model.seed);
  detail::write_u32(out, static_cast<std::uint32_t>(model.fit.iterations));
  detail::write_u32(out, static_cast<std::uint32_t>(model.fit.reseeded_components));
  detail::write_f64(out, model.fit.final_loglik);
  for (double w : model.weights) detail::write_f64(out, w);
  for (double v : model.means) detail::write_f64(out, v);
  for (double v : model.variances) detail::write_f64(out, v);
  if (!out) throw DataError(path.string() + ": write failed");
}

GmmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
    throw DataError(path.string() + ": not a model file (bad magic)");
  GmmModel model;
  model.dim = detail::read_u32(in, path.string());
  model.components = detail::read_u32(in, path.string());
  model.seed = detail::read_u64(in, path.string());
  model.fit.iterations = detail::read_u32(in, path.string());
  model.fit.reseeded_components = detail::read_u32(in, path.string());
  model.fit.final_loglik = detail::read_f64(in, path.string());
  model.weights.resize(model.components);
  model.means.resize(model.components * model.dim);
  model.variances.resize(model.components * model.dim);
  for (double& w : model.weights) w = detail::read_f64(in, path.string());
  for (double& v : model.means) v = detail::read_f64(in, path.string());
  for (double& v : model.variances) v = detail::read_f64(in, path.string());
  model.validate();
  return model;
}

}  // namespace bof
