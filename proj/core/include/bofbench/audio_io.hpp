#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bof {

// Mono amplitude buffer in [-1, 1].
struct SampleBuffer {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string source_id;
  int segment_index = -1;  // -1: whole recording

  double duration_seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  std::uint64_t frames = 0;  // samples per channel
  int bits_per_sample = 0;
  bool float_encoded = false;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0;
  }
};

// Header-only parse; does not touch sample data.
WavInfo probe_wav(const std::filesystem::path& path);

// PCM WAV decode: 8/16/24-bit integer or 32-bit float, 1 or 2 channels.
// Stereo is mixed down by channel averaging. Throws UnreadableFileError,
// UnsupportedEncodingError or EmptyAudioError.
SampleBuffer decode_wav(const std::filesystem::path& path);

// 16-bit PCM mono writer.
void write_wav_pcm16(const std::filesystem::path& path,
                     const SampleBuffer& buf);

// Peak normalization: max |sample| becomes 1.0. All-zero input is returned
// unchanged.
SampleBuffer normalize(SampleBuffer buf);

// Consecutive non-overlapping units of unit_seconds. A trailing remainder of
// at least half a unit is kept as a shorter final unit, anything less is
// discarded. Units carry the source_id and their segment index.
std::vector<SampleBuffer> segment(const SampleBuffer& buf,
                                  double unit_seconds);

// Number of units segment() would produce for a recording of the given
// length, without decoding it.
std::size_t segment_count(std::uint64_t total_samples, int sample_rate,
                          double unit_seconds);

}  // namespace bof
