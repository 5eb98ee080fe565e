#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bofbench/audio_io.hpp"

namespace bof {

inline constexpr std::size_t kMfccWindow = 2048;
inline constexpr std::size_t kMfccHop = 1024;
inline constexpr std::size_t kMelFilterCount = 40;
inline constexpr std::size_t kMfccCoeffs = 20;
inline constexpr double kMelLowHz = 20.0;
inline constexpr double kLogFloor = 1e-10;

// Time series of feature vectors for one audio unit, row-major.
struct FeatureSequence {
  std::vector<double> values;  // frames * dim
  std::size_t dim = 0;
  std::size_t frames = 0;
  std::string source_id;
  int segment_index = -1;

  std::span<const double> frame(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
};

// floor((sample_count - window) / hop) + 1; throws DataError when the input
// is shorter than one window.
std::size_t frame_count(std::size_t sample_count, std::size_t window,
                        std::size_t hop);

// MFCC per 2048-sample window at 50% overlap: Hann weighting, magnitude
// spectrum, mel filterbank energies, natural log with floor, orthonormal
// DCT-II, first 20 coefficients. include_c0=false drops coefficient 0
// (dim becomes 19).
FeatureSequence mfcc(const SampleBuffer& buf, bool include_c0);

// Triangular mel filterbank adapted to a sample rate: 40 filters between
// 20 Hz and sr/2, linear spacing below 1 kHz and logarithmic above,
// unit-area normalization. Instances are cached per sample rate.
class MelFilterbank {
 public:
  explicit MelFilterbank(int sample_rate);

  // energies[f] = sum_k weight(f, k) * magnitude[k]; magnitude has
  // kMfccWindow/2 + 1 bins.
  void apply(std::span<const double> magnitude, std::span<double> energies) const;

  int sample_rate() const { return sample_rate_; }

  static double hz_to_mel(double hz);
  static double mel_to_hz(double mel);

 private:
  struct Filter {
    std::size_t first_bin = 0;
    std::vector<double> weights;
  };
  int sample_rate_;
  std::vector<Filter> filters_;
};

// Shared per-sample-rate cache, read-mostly.
const MelFilterbank& filterbank_for(int sample_rate);

// Flat binary format: u32 dim, u32 frames, then frames*dim little-endian
// 64-bit floats, row-major.
void save_features(const std::filesystem::path& path, const FeatureSequence& fs);
FeatureSequence load_features(const std::filesystem::path& path);

void write_features_csv(std::ostream& out, const FeatureSequence& fs);

}  // namespace bof
