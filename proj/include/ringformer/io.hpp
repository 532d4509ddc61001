#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ringformer/adversarial.hpp"
#include "ringformer/dsp.hpp"
#include "ringformer/generator.hpp"
#include "ringformer/metrics.hpp"

namespace ringformer {

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline void put_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

inline void put_f32_le(std::string& out, float v) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  std::string source;

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(source + ": " + what + " at byte " + std::to_string(pos));
  }

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) fail("unexpected end of file");
  }

  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 4;
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
           (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  }

  std::uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    pos += 2;
    return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
};

inline std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path + ": cannot open for read");
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void spill(const std::string& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(path + ": cannot open for write");
  os.write(bytes.data(), std::streamsize(bytes.size()));
  if (!os.good()) throw IoError(path + ": write failed");
}

}  // namespace detail

struct WavReadResult {
  Waveform<float> waveform;
  std::vector<std::string> warnings;
};

// PCM16 WAV reader; stereo is averaged to mono with a warning, anything
// compressed or non-16-bit is rejected with the offending byte offset.
inline WavReadResult read_wav(const std::string& path,
                              std::size_t expected_rate = 22050) {
  const std::string bytes = detail::slurp(path);
  detail::ByteReader r{bytes, 0, path};

  if (r.raw(4) != "RIFF") {
    r.pos = 0;
    r.fail("not a RIFF file");
  }
  r.u32();  // riff size, unused
  if (r.raw(4) != "WAVE") {
    r.pos = 8;
    r.fail("not a WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::string data;
  while (r.pos + 8 <= bytes.size()) {
    const std::string id = r.raw(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      const std::size_t fmt_at = r.pos;
      const std::uint16_t format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      const std::uint16_t bits = r.u16();
      if (format != 1) {
        r.pos = fmt_at;
        r.fail("compressed WAV (format tag " + std::to_string(format) +
               ") unsupported, PCM16 required");
      }
      if (bits != 16) {
        r.pos = fmt_at;
        r.fail("bit depth " + std::to_string(bits) + " unsupported, PCM16 "
               "required");
      }
      if (channels != 1 && channels != 2) {
        r.pos = fmt_at;
        r.fail(std::to_string(channels) + " channels unsupported");
      }
      r.pos = fmt_at + size;
      have_fmt = true;
    } else if (id == "data") {
      data = r.raw(size);
    } else {
      r.raw(size);  // skip unknown chunk
    }
    if (size % 2 == 1 && r.pos < bytes.size()) r.raw(1);  // chunk padding
  }
  if (!have_fmt || data.empty()) {
    r.fail(have_fmt ? "missing data chunk" : "missing fmt chunk");
  }
  if (rate != expected_rate) {
    throw ConfigError(path + ": sample rate " + std::to_string(rate) +
                      " unsupported, expected " + std::to_string(expected_rate) +
                      " (resampling is out of scope)");
  }

  WavReadResult out;
  const std::size_t frames = data.size() / (2 * channels);
  Tensor<float> samples({std::max<std::size_t>(frames, 1)});
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  for (std::size_t i = 0; i < frames; ++i) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t at = (i * channels + c) * 2;
      const std::int16_t v = std::int16_t(std::uint16_t(p[at]) |
                                          (std::uint16_t(p[at + 1]) << 8));
      acc += float(v) / 32768.0f;
    }
    samples.data[i] = acc / float(channels);
  }
  if (channels == 2) {
    out.warnings.push_back(path + ": stereo input averaged to mono");
  }
  out.waveform = Waveform<float>(std::move(samples), expected_rate);
  return out;
}

// PCM16 mono writer; peak-normalizes to 0.95 only when clipping would occur.
inline void write_wav(const std::string& path, const Waveform<float>& x) {
  float peak = 0.0f;
  for (float v : x.samples.data) peak = std::max(peak, std::abs(v));
  const float gain = peak > 1.0f ? 0.95f / peak : 1.0f;

  std::string data;
  data.reserve(x.size() * 2);
  for (float v : x.samples.data) {
    const long q = std::lround(double(v * gain) * 32768.0);
    detail::put_u16_le(data,
                       std::uint16_t(std::int16_t(std::clamp(q, -32768l, 32767l))));
  }

  std::string out;
  out += "RIFF";
  detail::put_u32_le(out, std::uint32_t(36 + data.size()));
  out += "WAVEfmt ";
  detail::put_u32_le(out, 16);
  detail::put_u16_le(out, 1);  // PCM
  detail::put_u16_le(out, 1);  // mono
  detail::put_u32_le(out, std::uint32_t(x.sample_rate));
  detail::put_u32_le(out, std::uint32_t(x.sample_rate * 2));
  detail::put_u16_le(out, 2);
  detail::put_u16_le(out, 16);
  out += "data";
  detail::put_u32_le(out, std::uint32_t(data.size()));
  out += data;
  detail::spill(path, out);
}

// MELF: "MELF", u32 LE mel bins F, u32 LE frames T, then F*T f32 LE values
// row-major (mel-bin major).
inline void write_mel_file(const std::string& path,
                           const MelSpectrogram<float>& mel) {
  std::string out;
  out += "MELF";
  detail::put_u32_le(out, std::uint32_t(mel.values.shape[0]));
  detail::put_u32_le(out, std::uint32_t(mel.values.shape[1]));
  for (float v : mel.values.data) detail::put_f32_le(out, v);
  detail::spill(path, out);
}

inline MelSpectrogram<float> read_mel_file(const std::string& path,
                                           std::size_t sample_rate = 22050,
                                           std::size_t hop = 256) {
  const std::string bytes = detail::slurp(path);
  detail::ByteReader r{bytes, 0, path};
  if (r.raw(4) != "MELF") {
    r.pos = 0;
    r.fail("bad magic, expected MELF");
  }
  const std::uint32_t f = r.u32();
  const std::uint32_t t = r.u32();
  if (f == 0 || t == 0) r.fail("degenerate dimensions " + std::to_string(f) +
                               "x" + std::to_string(t));
  if (bytes.size() != 12 + std::size_t(f) * t * 4) {
    r.fail("payload size " + std::to_string(bytes.size() - 12) +
           " does not match declared " + std::to_string(f) + "x" +
           std::to_string(t) + " floats");
  }
  MelSpectrogram<float> mel;
  mel.values = Tensor<float>({f, t});
  for (float& v : mel.values.data) v = r.f32();
  mel.sample_rate = sample_rate;
  mel.hop = hop;
  mel.n_mels = f;
  return mel;
}

inline nlohmann::ordered_json generator_config_to_json(
    const GeneratorConfig& cfg) {
  nlohmann::ordered_json j;
  j["upsample_rates"] = cfg.upsample_rates;
  j["upsample_kernels"] = cfg.upsample_kernels;
  j["input_channels"] = cfg.input_channels;
  j["output_channels"] = cfg.output_channels;
  j["istft_n_fft"] = cfg.istft_n_fft;
  j["istft_hop"] = cfg.istft_hop;
  j["n_mels"] = cfg.n_mels;
  j["mel_hop"] = cfg.mel_hop;
  j["sample_rate"] = cfg.sample_rate;
  j["conformer_layers"] = cfg.conformer_layers;
  j["conformer_heads"] = cfg.conformer_heads;
  j["depthwise_kernel"] = cfg.depthwise_kernel;
  j["dropout"] = cfg.dropout;
  j["ring_block_len"] = cfg.ring_block_len;
  j["seed"] = cfg.seed;
  return j;
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  try {
    if (j.contains("upsample_rates"))
      cfg.upsample_rates = j.at("upsample_rates").get<std::vector<std::size_t>>();
    if (j.contains("upsample_kernels"))
      cfg.upsample_kernels =
          j.at("upsample_kernels").get<std::vector<std::size_t>>();
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("input_channels", cfg.input_channels);
    opt("output_channels", cfg.output_channels);
    opt("istft_n_fft", cfg.istft_n_fft);
    opt("istft_hop", cfg.istft_hop);
    opt("n_mels", cfg.n_mels);
    opt("mel_hop", cfg.mel_hop);
    opt("sample_rate", cfg.sample_rate);
    opt("conformer_layers", cfg.conformer_layers);
    opt("conformer_heads", cfg.conformer_heads);
    opt("depthwise_kernel", cfg.depthwise_kernel);
    opt("dropout", cfg.dropout);
    opt("ring_block_len", cfg.ring_block_len);
    opt("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config json: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// RFW1: "RFW1", u32 LE config JSON length, the JSON, then named arrays in
// canonical order: u32 name length, UTF-8 name, u32 rank, u32 extents,
// f32 LE payload. Shapes must match the embedded config or the file is
// rejected.
inline void write_weight_file(const std::string& path,
                              const GeneratorWeights<float>& w) {
  std::string out;
  out += "RFW1";
  const std::string cfg_json = generator_config_to_json(w.config).dump();
  detail::put_u32_le(out, std::uint32_t(cfg_json.size()));
  out += cfg_json;
  for_each_generator_array(w, [&](const std::string& name,
                                  const Tensor<float>& t) {
    detail::put_u32_le(out, std::uint32_t(name.size()));
    out += name;
    detail::put_u32_le(out, std::uint32_t(t.rank()));
    for (std::size_t e : t.shape) detail::put_u32_le(out, std::uint32_t(e));
    for (float v : t.data) detail::put_f32_le(out, v);
  });
  detail::spill(path, out);
}

inline GeneratorWeights<float> read_weight_file(const std::string& path) {
  const std::string bytes = detail::slurp(path);
  detail::ByteReader r{bytes, 0, path};
  if (r.raw(4) != "RFW1") {
    r.pos = 0;
    r.fail("bad magic, expected RFW1");
  }
  const std::uint32_t cfg_len = r.u32();
  const std::string cfg_json = r.raw(cfg_len);
  GeneratorConfig cfg;
  try {
    cfg = generator_config_from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": embedded config is not valid JSON: " + e.what());
  }

  struct StoredArray {
    std::vector<std::size_t> shape;
    std::vector<float> data;
  };
  std::map<std::string, StoredArray> arrays;
  while (r.pos < bytes.size()) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.raw(name_len);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 3) r.fail("array '" + name + "' has rank " +
                                      std::to_string(rank));
    StoredArray arr;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      arr.shape.push_back(r.u32());
      count *= arr.shape.back();
    }
    arr.data.resize(count);
    for (float& v : arr.data) v = r.f32();
    arrays.emplace(name, std::move(arr));
  }

  GeneratorWeights<float> w = build_generator<float>(cfg);
  for_each_generator_array(w, [&](const std::string& name, Tensor<float>& t) {
    auto it = arrays.find(name);
    if (it == arrays.end()) {
      throw ConfigError(path + ": array '" + name +
                        "' required by the embedded config is missing");
    }
    if (it->second.shape != t.shape) {
      throw ConfigError(path + ": array '" + name + "' has shape " +
                        shape_str(it->second.shape) +
                        " but the embedded config derives " +
                        shape_str(t.shape));
    }
    t.data = std::move(it->second.data);
    arrays.erase(it);
  });
  if (!arrays.empty()) {
    throw ConfigError(path + ": file carries " + std::to_string(arrays.size()) +
                      " arrays not derivable from the embedded config (first: '" +
                      arrays.begin()->first + "')");
  }
  return w;
}

inline nlohmann::ordered_json loss_report_to_json(const LossReport& report) {
  nlohmann::ordered_json j;
  j["l_g"] = report.l_g;
  j["l_d"] = report.l_d;
  j["l_mag"] = report.l_mag;
  j["l_phase"] = report.l_phase;
  j["l_sd"] = report.l_sd;
  j["l_fm"] = report.l_fm;
  j["l_total"] = report.l_total;
  j["weights"] = {{"alpha", report.weights.alpha},
                  {"lambda_sd", report.weights.lambda_sd},
                  {"lambda_fm", report.weights.lambda_fm},
                  {"lambda_recon", report.weights.lambda_recon},
                  {"lambda_kl", report.weights.lambda_kl},
                  {"lambda_dur", report.weights.lambda_dur}};
  return j;
}

inline nlohmann::ordered_json metrics_report_to_json(
    const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["mcd_db"] = report.mcd_db;
  j["f0_pearson"] = report.f0_pearson;
  j["voiced_frames"] = report.voiced_frames;
  j["total_frames"] = report.total_frames;
  return j;
}

}  // namespace ringformer
