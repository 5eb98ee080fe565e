#include "bofbench/features.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>

#include "binio.hpp"
#include "bofbench/errors.hpp"

namespace bof {
namespace {

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

// Orthonormal DCT-II coefficients, kMfccCoeffs x kMelFilterCount.
std::vector<double> dct_table() {
  std::vector<double> t(kMfccCoeffs * kMelFilterCount);
  const double n = static_cast<double>(kMelFilterCount);
  for (std::size_t k = 0; k < kMfccCoeffs; ++k) {
    double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (std::size_t i = 0; i < kMelFilterCount; ++i)
      t[k * kMelFilterCount + i] =
          scale * std::cos(M_PI * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
  }
  return t;
}

}  // namespace

double MelFilterbank::hz_to_mel(double hz) {
  constexpr double lin_step = 200.0 / 3.0;
  if (hz < 1000.0) return hz / lin_step;
  return 1000.0 / lin_step + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}

double MelFilterbank::mel_to_hz(double mel) {
  constexpr double lin_step = 200.0 / 3.0;
  if (mel < 1000.0 / lin_step) return mel * lin_step;
  return 1000.0 * std::exp(std::log(6.4) * (mel - 1000.0 / lin_step) / 27.0);
}

MelFilterbank::MelFilterbank(int sample_rate) : sample_rate_(sample_rate) {
  if (sample_rate <= 0) throw DataError("filterbank: sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  if (nyquist <= kMelLowHz)
    throw DataError("filterbank: sample rate too low for the 20 Hz band edge");

  const double mel_lo = hz_to_mel(kMelLowHz);
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(kMelFilterCount + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(kMelFilterCount + 1));

  const std::size_t bins = kMfccWindow / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(kMfccWindow);
  filters_.resize(kMelFilterCount);
  for (std::size_t f = 0; f < kMelFilterCount; ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    const double height = 2.0 / (hi - lo);  // unit area in Hz
    Filter filt;
    bool started = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (hz > lo && hz < hi)
        w = height * (hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid));
      if (w > 0.0) {
        if (!started) {
          filt.first_bin = k;
          started = true;
        }
        filt.weights.push_back(w);
      } else if (started) {
        break;
      }
    }
    filters_[f] = std::move(filt);
  }
}

void MelFilterbank::apply(std::span<const double> magnitude,
                          std::span<double> energies) const {
  for (std::size_t f = 0; f < filters_.size(); ++f) {
    const Filter& filt = filters_[f];
    double acc = 0.0;
    for (std::size_t i = 0; i < filt.weights.size(); ++i)
      acc += filt.weights[i] * magnitude[filt.first_bin + i];
    energies[f] = acc;
  }
}

const MelFilterbank& filterbank_for(int sample_rate) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<MelFilterbank>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[sample_rate];
  if (!slot) slot = std::make_unique<MelFilterbank>(sample_rate);
  return *slot;
}

std::size_t frame_count(std::size_t sample_count, std::size_t window, std::size_t hop) {
  if (sample_count < window)
    throw DataError("input of " + std::to_string(sample_count) +
                    " samples is shorter than one " + std::to_string(window) +
                    "-sample window");
  return (sample_count - window) / hop + 1;
}

FeatureSequence mfcc(const SampleBuffer& buf, bool include_c0) {
  const std::size_t n_frames = frame_count(buf.samples.size(), kMfccWindow, kMfccHop);
  const MelFilterbank& bank = filterbank_for(buf.sample_rate);
  static const std::vector<double> window = hann_window(kMfccWindow);
  static const std::vector<double> dct = dct_table();

  const std::size_t dim = include_c0 ? kMfccCoeffs : kMfccCoeffs - 1;
  FeatureSequence fs;
  fs.dim = dim;
  fs.frames = n_frames;
  fs.source_id = buf.source_id;
  fs.segment_index = buf.segment_index;
  fs.values.resize(n_frames * dim);

  std::vector<std::complex<double>> spectrum(kMfccWindow);
  std::vector<double> magnitude(kMfccWindow / 2 + 1);
  std::vector<double> log_energies(kMelFilterCount);

  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* x = buf.samples.data() + t * kMfccHop;
    for (std::size_t i = 0; i < kMfccWindow; ++i)
      spectrum[i] = {x[i] * window[i], 0.0};
    fft_inplace(spectrum);
    for (std::size_t k = 0; k < magnitude.size(); ++k)
      magnitude[k] = std::abs(spectrum[k]);

    bank.apply(magnitude, log_energies);
    for (double& e : log_energies) e = std::log(std::max(e, kLogFloor));

    double* out = fs.values.data() + t * dim;
    for (std::size_t k = include_c0 ? 0 : 1; k < kMfccCoeffs; ++k) {
      const double* row = dct.data() + k * kMelFilterCount;
      double acc = 0.0;
      for (std::size_t i = 0; i < kMelFilterCount; ++i) acc += row[i] * log_energies[i];
      out[include_c0 ? k : k - 1] = acc;
    }
  }
  return fs;
}

void save_features(const std::filesystem::path& path, const FeatureSequence& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  detail::write_u32(out, static_cast<std::uint32_t>(fs.dim));
  detail::write_u32(out, static_cast<std::uint32_t>(fs.frames));
  for (double v : fs.values) detail::write_f64(out, v);
  if (!out) throw DataError(path.string() + ": write failed");
}

FeatureSequence load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open");
  FeatureSequence fs;
  fs.dim = detail::read_u32(in, path.string());
  fs.frames = detail::read_u32(in, path.string());
  if (fs.dim == 0 || fs.frames == 0) throw DataError(path.string() + ": empty feature file");
  fs.values.resize(fs.dim * fs.frames);
  for (double& v : fs.values) v = detail::read_f64(in, path.string());
  fs.source_id = path.stem().string();
  return fs;
}

void write_features_csv(std::ostream& out, const FeatureSequence& fs) {
  out << "frame";
  for (std::size_t j = 0; j < fs.dim; ++j) out << ",c" << j;
  out << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < fs.frames; ++i) {
    out << i;
    for (std::size_t j = 0; j < fs.dim; ++j) out << "," << fs.at(i, j);
    out << "\n";
  }
}

}  // namespace bof
