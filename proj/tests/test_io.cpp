#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "ringformer/io.hpp"

using namespace ringformer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ringformer-io-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string slurp(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("wav writer/reader round trip at PCM16 precision") {
  TempDir dir;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-0.9, 0.9);
  Tensor<float> s({2000});
  for (float& v : s.data) v = float(dist(rng));
  const Waveform<float> x(s, 22050);
  write_wav(dir.file("a.wav"), x);
  const WavReadResult r = read_wav(dir.file("a.wav"));
  CHECK(r.warnings.empty());
  REQUIRE(r.waveform.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // one PCM16 quantization step of slack
    CHECK(std::abs(double(r.waveform.samples.data[i]) -
                   double(x.samples.data[i])) <= 1.0 / 32768.0);
  }
}

TEST_CASE("wav writer normalizes only when clipping would occur") {
  TempDir dir;
  Tensor<float> hot({4}, {1.5f, -2.0f, 0.5f, 0.25f});
  write_wav(dir.file("hot.wav"), Waveform<float>(hot, 22050));
  const auto r = read_wav(dir.file("hot.wav"));
  float peak = 0.0f;
  for (float v : r.waveform.samples.data) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.95f).epsilon(1e-3));
  // relative shape preserved
  CHECK(r.waveform.samples.data[0] ==
        doctest::Approx(1.5f * 0.95f / 2.0f).epsilon(1e-3));
}

TEST_CASE("wav reader averages stereo with a warning") {
  TempDir dir;
  // hand-build a 2-channel PCM16 file
  std::string bytes;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(char((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&](std::uint16_t v) {
    bytes.push_back(char(v & 0xff));
    bytes.push_back(char(v >> 8));
  };
  bytes += "RIFF";
  u32(36 + 8);
  bytes += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(2);
  u32(22050);
  u32(22050 * 4);
  u16(4);
  u16(16);
  bytes += "data";
  u32(8);
  u16(std::uint16_t(std::int16_t(1000)));
  u16(std::uint16_t(std::int16_t(3000)));
  u16(std::uint16_t(std::int16_t(-2000)));
  u16(std::uint16_t(std::int16_t(2000)));
  std::ofstream os(dir.file("st.wav"), std::ios::binary);
  os.write(bytes.data(), std::streamsize(bytes.size()));
  os.close();

  const auto r = read_wav(dir.file("st.wav"));
  REQUIRE(r.warnings.size() == 1);
  REQUIRE(r.waveform.size() == 2);
  CHECK(double(r.waveform.samples.data[0]) ==
        doctest::Approx(2000.0 / 32768.0).epsilon(1e-6));
  CHECK(double(r.waveform.samples.data[1]) ==
        doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("wav reader rejects compressed, wrong-rate, and truncated input") {
  TempDir dir;
  Tensor<float> s({100});
  write_wav(dir.file("ok.wav"), Waveform<float>(s, 22050));

  SUBCASE("wrong expected rate") {
    CHECK_THROWS_AS((void)read_wav(dir.file("ok.wav"), 16000), ConfigError);
  }

  SUBCASE("compressed format tag with byte offset in the message") {
    std::string bytes = slurp(dir.file("ok.wav"));
    bytes[20] = 3;  // format tag -> IEEE float
    std::ofstream os(dir.file("bad.wav"), std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size()));
    os.close();
    try {
      (void)read_wav(dir.file("bad.wav"));
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("at byte") != std::string::npos);
    }
  }

  SUBCASE("truncated file") {
    const std::string bytes = slurp(dir.file("ok.wav"));
    std::ofstream os(dir.file("short.wav"), std::ios::binary);
    os.write(bytes.data(), 10);
    os.close();
    CHECK_THROWS_AS((void)read_wav(dir.file("short.wav")), IoError);
  }
}

TEST_CASE("melf round trip is byte-identical") {
  TempDir dir;
  std::mt19937_64 rng(2);
  MelSpectrogram<float> mel;
  mel.values = oracle::random_tensor<float>(rng, {80, 33}, -11.5, 2.0);
  write_mel_file(dir.file("a.melf"), mel);
  const auto back = read_mel_file(dir.file("a.melf"));
  CHECK(back.values.shape == mel.values.shape);
  CHECK(back.values.data == mel.values.data);
  write_mel_file(dir.file("b.melf"), back);
  CHECK(slurp(dir.file("a.melf")) == slurp(dir.file("b.melf")));
}

TEST_CASE("melf rejects bad magic and size mismatches") {
  TempDir dir;
  MelSpectrogram<float> mel;
  mel.values = Tensor<float>({4, 3});
  write_mel_file(dir.file("m.melf"), mel);
  std::string bytes = slurp(dir.file("m.melf"));

  SUBCASE("magic") {
    bytes[0] = 'X';
    std::ofstream os(dir.file("x.melf"), std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size()));
    os.close();
    CHECK_THROWS_AS((void)read_mel_file(dir.file("x.melf")), IoError);
  }

  SUBCASE("payload shorter than declared") {
    std::ofstream os(dir.file("t.melf"), std::ios::binary);
    os.write(bytes.data(), std::streamsize(bytes.size() - 4));
    os.close();
    CHECK_THROWS_AS((void)read_mel_file(dir.file("t.melf")), IoError);
  }
}

TEST_CASE("weight file round trip and config consistency") {
  TempDir dir;
  GeneratorConfig cfg;
  cfg.input_channels = 32;
  cfg.conformer_heads = 4;
  cfg.n_mels = 8;
  cfg.seed = 21;
  const auto w = build_generator<float>(cfg);
  write_weight_file(dir.file("w.rfw"), w);
  const auto back = read_weight_file(dir.file("w.rfw"));
  CHECK(back.config.input_channels == 32);
  CHECK(back.config.seed == 21);
  CHECK(param_count(back) == param_count(w));
  write_weight_file(dir.file("w2.rfw"), back);
  CHECK(slurp(dir.file("w.rfw")) == slurp(dir.file("w2.rfw")));

  // loaded weights synthesize identically to the originals
  MelSpectrogram<float> mel;
  mel.values = Tensor<float>({8, 4});
  mel.n_mels = 8;
  const auto a = synthesize(mel, w);
  const auto b = synthesize(mel, back);
  CHECK(a.samples.data == b.samples.data);
}

TEST_CASE("weight file with a shape mismatch is rejected") {
  TempDir dir;
  GeneratorConfig cfg;
  cfg.input_channels = 32;
  cfg.conformer_heads = 4;
  cfg.n_mels = 8;
  const auto w = build_generator<float>(cfg);
  write_weight_file(dir.file("w.rfw"), w);
  std::string bytes = slurp(dir.file("w.rfw"));

  // bump the first array's first extent (after magic, config block,
  // name length, name)
  const std::uint32_t cfg_len = std::uint32_t(std::uint8_t(bytes[4])) |
                                (std::uint32_t(std::uint8_t(bytes[5])) << 8) |
                                (std::uint32_t(std::uint8_t(bytes[6])) << 16) |
                                (std::uint32_t(std::uint8_t(bytes[7])) << 24);
  std::size_t at = 8 + cfg_len;
  const std::uint32_t name_len = std::uint32_t(std::uint8_t(bytes[at]));
  at += 4 + name_len + 4;  // name length, name, rank
  bytes[at] = char(std::uint8_t(bytes[at]) + 1);
  std::ofstream os(dir.file("bad.rfw"), std::ios::binary);
  os.write(bytes.data(), std::streamsize(bytes.size()));
  os.close();
  CHECK_THROWS_AS((void)read_weight_file(dir.file("bad.rfw")), Error);
}

TEST_CASE("generator config json round trips and validates") {
  GeneratorConfig cfg;
  cfg.ring_block_len = 256;
  cfg.seed = 5;
  const auto j = generator_config_to_json(cfg);
  const GeneratorConfig back = generator_config_from_json(j);
  CHECK(back.ring_block_len == 256);
  CHECK(back.seed == 5);

  nlohmann::json bad = j;
  bad["output_channels"] = 64;
  CHECK_THROWS_AS((void)generator_config_from_json(bad), ConfigError);
}

TEST_CASE("report json schemas carry the required keys") {
  LossReport lr;
  lr.l_g = 0.25;
  const auto lj = loss_report_to_json(lr);
  for (const char* key :
       {"l_g", "l_d", "l_mag", "l_phase", "l_sd", "l_fm", "l_total",
        "weights"}) {
    CHECK(lj.contains(key));
  }
  CHECK(lj["weights"]["lambda_recon"] == 45.0);

  MetricsReport mr;
  mr.mcd_db = 1.5;
  mr.f0_pearson = 0.9;
  mr.voiced_frames = 10;
  mr.total_frames = 12;
  const auto mj = metrics_report_to_json(mr);
  for (const char* key :
       {"mcd_db", "f0_pearson", "voiced_frames", "total_frames"}) {
    CHECK(mj.contains(key));
  }
}
