#pragma once

#include <string>
#include <vector>

#include "bofbench/features.hpp"

namespace bof {

// One-point summary of a feature sequence: the temporal mean vector.
struct MeanFeature {
  std::vector<double> values;
  std::string source_id;
  int segment_index = -1;

  std::size_t dim() const { return values.size(); }
};

// Coordinate-wise arithmetic mean over all frames.
MeanFeature mean_feature(const FeatureSequence& fs);

// sqrt(sum of squared coordinate differences).
double euclidean(const MeanFeature& a, const MeanFeature& b);

}  // namespace bof
