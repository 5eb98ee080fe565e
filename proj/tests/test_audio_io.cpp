#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "bofbench/audio_io.hpp"
#include "bofbench/errors.hpp"
#include "bofbench/rng.hpp"
#include "support/synthetic.hpp"

using namespace bof;
namespace fs = std::filesystem;

namespace {

// Hand-assembled WAV bytes so the decoder is tested against raw layout, not
// against our own writer.
void write_raw_wav(const fs::path& path, int sample_rate, int channels, int bits,
                   bool float_fmt, const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) {
    char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    out.write(b, 4);
  };
  auto u16 = [&](std::uint16_t v) {
    char b[2] = {char(v), char(v >> 8)};
    out.write(b, 2);
  };
  out.write("RIFF", 4);
  u32(36 + static_cast<std::uint32_t>(payload.size()));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(float_fmt ? 3 : 1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate * channels * bits / 8));
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(static_cast<std::uint16_t>(bits));
  out.write("data", 4);
  u32(static_cast<std::uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
}

std::vector<unsigned char> pcm16_bytes(const std::vector<std::int16_t>& samples) {
  std::vector<unsigned char> bytes;
  for (auto s : samples) {
    bytes.push_back(static_cast<unsigned char>(s & 0xFF));
    bytes.push_back(static_cast<unsigned char>((s >> 8) & 0xFF));
  }
  return bytes;
}

std::vector<unsigned char> f32_bytes(const std::vector<float>& samples) {
  std::vector<unsigned char> bytes(samples.size() * 4);
  std::memcpy(bytes.data(), samples.data(), bytes.size());
  return bytes;
}

}  // namespace

TEST_CASE("decode scales 16-bit PCM linearly") {
  auto dir = testing::scratch_dir("audio");
  write_raw_wav(dir / "a.wav", 8000, 1, 16, false, pcm16_bytes({16384, -32768, 0}));
  SampleBuffer buf = decode_wav(dir / "a.wav");
  REQUIRE(buf.samples.size() == 3);
  CHECK(buf.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(buf.samples[1] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(buf.samples[2] == 0.0);
  CHECK(buf.sample_rate == 8000);
  fs::remove_all(dir);
}

TEST_CASE("decode mixes stereo down by channel mean") {
  auto dir = testing::scratch_dir("audio");
  write_raw_wav(dir / "st.wav", 8000, 2, 32, true, f32_bytes({0.2f, 0.6f, -0.5f, 0.5f}));
  SampleBuffer buf = decode_wav(dir / "st.wav");
  REQUIRE(buf.samples.size() == 2);
  CHECK(buf.samples[0] == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(buf.samples[1] == doctest::Approx(0.0).epsilon(1e-7));
  fs::remove_all(dir);
}

TEST_CASE("decode: duration times rate gives the sample count") {
  auto dir = testing::scratch_dir("audio");
  auto buf = testing::white_noise(10.0, 44100, 7);
  write_wav_pcm16(dir / "ten.wav", buf);
  SampleBuffer decoded = decode_wav(dir / "ten.wav");
  CHECK(decoded.samples.size() == 441000);
  fs::remove_all(dir);
}

TEST_CASE("decode handles 8-bit and 24-bit PCM") {
  auto dir = testing::scratch_dir("audio");
  // 8-bit unsigned: 128 -> 0, 255 -> ~1, 0 -> -1
  write_raw_wav(dir / "b8.wav", 8000, 1, 8, false, {128, 255, 0});
  SampleBuffer b8 = decode_wav(dir / "b8.wav");
  CHECK(b8.samples[0] == 0.0);
  CHECK(b8.samples[1] == doctest::Approx(127.0 / 128.0));
  CHECK(b8.samples[2] == doctest::Approx(-1.0));

  // 24-bit: 0x400000 = 2^22 -> 0.5
  write_raw_wav(dir / "b24.wav", 8000, 1, 24, false, {0x00, 0x00, 0x40, 0x00, 0x00, 0x80});
  SampleBuffer b24 = decode_wav(dir / "b24.wav");
  CHECK(b24.samples[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b24.samples[1] == doctest::Approx(-1.0).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("decode failure modes are reported distinctly") {
  auto dir = testing::scratch_dir("audio");

  CHECK_THROWS_AS(decode_wav(dir / "missing.wav"), UnreadableFileError);

  {
    std::ofstream out(dir / "junk.wav", std::ios::binary);
    out << "this is not audio at all, just filler bytes to pass 12";
  }
  CHECK_THROWS_AS(decode_wav(dir / "junk.wav"), UnsupportedEncodingError);

  write_raw_wav(dir / "empty.wav", 8000, 1, 16, false, {});
  CHECK_THROWS_AS(decode_wav(dir / "empty.wav"), EmptyAudioError);

  // 4-channel audio is outside the contract
  write_raw_wav(dir / "quad.wav", 8000, 4, 16, false,
                pcm16_bytes({0, 0, 0, 0, 0, 0, 0, 0}));
  CHECK_THROWS_AS(decode_wav(dir / "quad.wav"), UnsupportedEncodingError);

  // 32-bit integer PCM is not supported
  write_raw_wav(dir / "i32.wav", 8000, 1, 32, false, {0, 0, 0, 0});
  CHECK_THROWS_AS(decode_wav(dir / "i32.wav"), UnsupportedEncodingError);
  fs::remove_all(dir);
}

TEST_CASE("probe matches decode") {
  auto dir = testing::scratch_dir("audio");
  auto buf = testing::white_noise(2.5, 22050, 3);
  write_wav_pcm16(dir / "p.wav", buf);
  WavInfo info = probe_wav(dir / "p.wav");
  SampleBuffer decoded = decode_wav(dir / "p.wav");
  CHECK(info.frames == decoded.samples.size());
  CHECK(info.sample_rate == decoded.sample_rate);
  CHECK(info.channels == 1);
  fs::remove_all(dir);
}

TEST_CASE("normalize: peak scaling") {
  SampleBuffer buf;
  buf.sample_rate = 100;
  buf.samples = {0.1, -0.5};
  SampleBuffer n = normalize(buf);
  CHECK(n.samples[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(n.samples[1] == -1.0);

  buf.samples = {1.0, -1.0};
  n = normalize(buf);
  CHECK(n.samples[0] == 1.0);
  CHECK(n.samples[1] == -1.0);

  buf.samples = {0.0, 0.0, 0.0};
  n = normalize(buf);
  CHECK(n.samples == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("normalize is idempotent bit-for-bit") {
  Rng rng(11);
  SampleBuffer buf;
  buf.sample_rate = 100;
  for (int i = 0; i < 1000; ++i) buf.samples.push_back(0.8 * (2 * rng.uniform() - 1));
  SampleBuffer once = normalize(buf);
  SampleBuffer twice = normalize(once);
  CHECK(once.samples == twice.samples);
}

TEST_CASE("segment: remainder rule") {
  SampleBuffer buf;
  buf.sample_rate = 1000;
  buf.source_id = "rec";

  // 947 s at 180 s units: 5 full units, 47 s remainder dropped (47 < 90)
  buf.samples.assign(947 * 1000, 0.25);
  auto units = segment(buf, 180.0);
  REQUIRE(units.size() == 5);
  for (std::size_t k = 0; k < units.size(); ++k) {
    CHECK(units[k].samples.size() == 180000);
    CHECK(units[k].segment_index == static_cast<int>(k));
    CHECK(units[k].source_id == "rec");
  }

  // 30 s: shorter than half a unit, nothing kept
  buf.samples.assign(30 * 1000, 0.25);
  CHECK(segment(buf, 180.0).empty());

  // 360 s: exact division
  buf.samples.assign(360 * 1000, 0.25);
  units = segment(buf, 180.0);
  REQUIRE(units.size() == 2);
  CHECK(units[0].segment_index == 0);
  CHECK(units[1].segment_index == 1);

  // 100 s: remainder of 100-90=... one 90+ unit? 100 < 180 but >= 90: kept whole
  buf.samples.assign(100 * 1000, 0.25);
  units = segment(buf, 180.0);
  REQUIRE(units.size() == 1);
  CHECK(units[0].samples.size() == 100000);
}

TEST_CASE("segment preserves retained sample count") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    SampleBuffer buf;
    buf.sample_rate = 500;
    buf.samples.assign(100 + rng.uniform_index(200000), 0.1);
    double unit_seconds = 1.0 + 30.0 * rng.uniform();
    auto units = segment(buf, unit_seconds);
    std::size_t kept = 0;
    for (const auto& u : units) kept += u.samples.size();
    CHECK(kept <= buf.samples.size());
    CHECK(buf.samples.size() - kept <
          static_cast<std::size_t>(unit_seconds * buf.sample_rate));
  }
}

TEST_CASE("16-bit encode/decode round-trip within one quantization step") {
  auto dir = testing::scratch_dir("audio");
  auto buf = testing::white_noise(0.5, 16000, 99, 0.9);
  buf.samples.push_back(1.0);
  buf.samples.push_back(-1.0);
  write_wav_pcm16(dir / "rt.wav", buf);
  SampleBuffer back = decode_wav(dir / "rt.wav");
  REQUIRE(back.samples.size() == buf.samples.size());
  for (std::size_t i = 0; i < buf.samples.size(); ++i)
    CHECK(std::fabs(back.samples[i] - buf.samples[i]) <= 1.0 / 32768.0);
  fs::remove_all(dir);
}
