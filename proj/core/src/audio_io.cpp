#include "bofbench/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bofbench/errors.hpp"

namespace bof {
namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

struct WavLayout {
  WavInfo info;
  std::streamoff data_offset = 0;
  std::uint64_t data_bytes = 0;
};

// Walks the RIFF chunk list and locates fmt and data.
WavLayout parse_header(std::ifstream& in, const std::filesystem::path& path) {
  auto fail_read = [&](const char* what) -> void {
    throw UnreadableFileError(path.string() + ": " + what);
  };
  auto fail_format = [&](const std::string& what) -> void {
    throw UnsupportedEncodingError(path.string() + ": " + what);
  };

  unsigned char hdr[12];
  in.read(reinterpret_cast<char*>(hdr), 12);
  if (!in) fail_read("truncated header");
  if (std::memcmp(hdr, "RIFF", 4) != 0 || std::memcmp(hdr + 8, "WAVE", 4) != 0)
    fail_format("not a RIFF/WAVE file");

  WavLayout layout;
  bool have_fmt = false;
  bool have_data = false;
  std::uint16_t format_tag = 0;

  while (!have_data) {
    unsigned char chunk[8];
    in.read(reinterpret_cast<char*>(chunk), 8);
    if (!in) fail_read("truncated chunk list");
    std::uint32_t size = read_u32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail_format("fmt chunk too small");
      std::vector<unsigned char> fmt(size);
      in.read(reinterpret_cast<char*>(fmt.data()), size);
      if (!in) fail_read("truncated fmt chunk");
      format_tag = read_u16(fmt.data());
      layout.info.channels = read_u16(fmt.data() + 2);
      layout.info.sample_rate = static_cast<int>(read_u32(fmt.data() + 4));
      layout.info.bits_per_sample = read_u16(fmt.data() + 14);
      if (format_tag == kFormatExtensible) {
        if (size < 26) fail_format("extensible fmt chunk too small");
        format_tag = read_u16(fmt.data() + 24);  // first two bytes of SubFormat GUID
      }
      layout.info.float_encoded = (format_tag == kFormatFloat);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) fail_format("data chunk precedes fmt chunk");
      layout.data_offset = in.tellg();
      layout.data_bytes = size;
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);  // chunks are word-aligned
      if (!in) fail_read("truncated chunk list");
    }
  }

  if (layout.info.sample_rate <= 0) fail_format("invalid sample rate");
  if (layout.info.channels < 1 || layout.info.channels > 2)
    fail_format("unsupported channel count " + std::to_string(layout.info.channels));

  bool ok = layout.info.float_encoded
                ? layout.info.bits_per_sample == 32
                : (format_tag == kFormatPcm && (layout.info.bits_per_sample == 8 ||
                                                layout.info.bits_per_sample == 16 ||
                                                layout.info.bits_per_sample == 24));
  if (!ok)
    fail_format("unsupported encoding (format tag " + std::to_string(format_tag) + ", " +
                std::to_string(layout.info.bits_per_sample) + " bits)");

  std::uint32_t frame_bytes =
      static_cast<std::uint32_t>(layout.info.channels) * (layout.info.bits_per_sample / 8);
  layout.info.frames = layout.data_bytes / frame_bytes;
  return layout;
}

std::ifstream open_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableFileError(path.string() + ": cannot open file");
  return in;
}

}  // namespace

WavInfo probe_wav(const std::filesystem::path& path) {
  std::ifstream in = open_file(path);
  return parse_header(in, path).info;
}

SampleBuffer decode_wav(const std::filesystem::path& path) {
  std::ifstream in = open_file(path);
  WavLayout layout = parse_header(in, path);
  const WavInfo& info = layout.info;
  if (info.frames == 0) throw EmptyAudioError(path.string() + ": zero-length audio");

  in.seekg(layout.data_offset);
  const int channels = info.channels;
  const int sample_bytes = info.bits_per_sample / 8;
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * sample_bytes;

  SampleBuffer buf;
  buf.sample_rate = info.sample_rate;
  buf.source_id = path.stem().string();
  buf.samples.resize(static_cast<std::size_t>(info.frames));

  constexpr std::size_t kBlockFrames = 65536;
  std::vector<unsigned char> block(kBlockFrames * frame_bytes);
  std::uint64_t done = 0;
  while (done < info.frames) {
    std::size_t want = static_cast<std::size_t>(
        std::min<std::uint64_t>(kBlockFrames, info.frames - done));
    in.read(reinterpret_cast<char*>(block.data()),
            static_cast<std::streamsize>(want * frame_bytes));
    if (static_cast<std::size_t>(in.gcount()) != want * frame_bytes)
      throw UnreadableFileError(path.string() + ": truncated data chunk");

    for (std::size_t f = 0; f < want; ++f) {
      const unsigned char* p = block.data() + f * frame_bytes;
      double acc = 0.0;
      for (int c = 0; c < channels; ++c, p += sample_bytes) {
        double v;
        if (info.float_encoded) {
          float x;
          std::memcpy(&x, p, 4);
          v = x;
          if (v > 1.0) v = 1.0;
          if (v < -1.0) v = -1.0;
        } else if (sample_bytes == 1) {
          v = (static_cast<int>(p[0]) - 128) / 128.0;
        } else if (sample_bytes == 2) {
          auto s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
          v = s / 32768.0;
        } else {  // 24-bit
          std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
          if (s & 0x800000) s |= ~0xFFFFFF;
          v = s / 8388608.0;
        }
        acc += v;
      }
      double sample = acc / channels;
      if (!std::isfinite(sample))
        throw UnsupportedEncodingError(path.string() + ": non-finite sample data");
      buf.samples[static_cast<std::size_t>(done + f)] = sample;
    }
    done += want;
  }
  return buf;
}

void write_wav_pcm16(const std::filesystem::path& path, const SampleBuffer& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnreadableFileError(path.string() + ": cannot open file for writing");

  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };

  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(kFormatPcm);
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(buf.sample_rate));
  put_u32(static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_bytes);

  std::vector<unsigned char> raw(buf.samples.size() * 2);
  for (std::size_t i = 0; i < buf.samples.size(); ++i) {
    double x = std::clamp(buf.samples[i], -1.0, 1.0);
    auto q = static_cast<long>(std::lrint(x * 32768.0));
    q = std::clamp(q, -32768L, 32767L);
    auto s = static_cast<std::int16_t>(q);
    raw[2 * i] = static_cast<unsigned char>(s & 0xFF);
    raw[2 * i + 1] = static_cast<unsigned char>((s >> 8) & 0xFF);
  }
  out.write(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw UnreadableFileError(path.string() + ": write failed");
}

SampleBuffer normalize(SampleBuffer buf) {
  double peak = 0.0;
  for (double s : buf.samples) peak = std::max(peak, std::fabs(s));
  if (peak == 0.0) return buf;
  for (double& s : buf.samples) s /= peak;
  return buf;
}

std::size_t segment_count(std::uint64_t total_samples, int sample_rate,
                          double unit_seconds) {
  if (unit_seconds <= 0.0) throw UsageError("unit_seconds must be positive");
  auto unit = static_cast<std::uint64_t>(std::llround(unit_seconds * sample_rate));
  if (unit == 0) throw UsageError("unit_seconds too small for sample rate");
  std::uint64_t full = total_samples / unit;
  std::uint64_t rem = total_samples % unit;
  return static_cast<std::size_t>(full + (2 * rem >= unit ? 1 : 0));
}

std::vector<SampleBuffer> segment(const SampleBuffer& buf, double unit_seconds) {
  std::size_t count = segment_count(buf.samples.size(), buf.sample_rate, unit_seconds);
  auto unit = static_cast<std::size_t>(std::llround(unit_seconds * buf.sample_rate));

  std::vector<SampleBuffer> units;
  units.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t begin = k * unit;
    std::size_t end = std::min(begin + unit, buf.samples.size());
    SampleBuffer u;
    u.samples.assign(buf.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     buf.samples.begin() + static_cast<std::ptrdiff_t>(end));
    u.sample_rate = buf.sample_rate;
    u.source_id = buf.source_id;
    u.segment_index = static_cast<int>(k);
    units.push_back(std::move(u));
  }
  return units;
}

}  // namespace bof
