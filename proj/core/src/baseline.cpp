#include "bofbench/baseline.hpp"

#include <cmath>

#include "bofbench/errors.hpp"

namespace bof {

MeanFeature mean_feature(const FeatureSequence& fs) {
  if (fs.frames == 0) throw DataError("mean_feature: empty feature sequence");
  MeanFeature mf;
  mf.source_id = fs.source_id;
  mf.segment_index = fs.segment_index;
  mf.values.assign(fs.dim, 0.0);
  for (std::size_t i = 0; i < fs.frames; ++i) {
    auto frame = fs.frame(i);
    for (std::size_t j = 0; j < fs.dim; ++j) mf.values[j] += frame[j];
  }
  for (double& v : mf.values) v /= static_cast<double>(fs.frames);
  return mf;
}

double euclidean(const MeanFeature& a, const MeanFeature& b) {
  if (a.dim() != b.dim())
    throw DataError("euclidean: dimension mismatch (" + std::to_string(a.dim()) +
                    " vs " + std::to_string(b.dim()) + ")");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.dim(); ++j) {
    double d = a.values[j] - b.values[j];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace bof
