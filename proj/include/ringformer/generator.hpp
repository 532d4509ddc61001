#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ringformer/conformer.hpp"
#include "ringformer/dsp.hpp"
#include "ringformer/ring_attention.hpp"
#include "ringformer/tensor.hpp"

namespace ringformer {

struct GeneratorConfig {
  std::vector<std::size_t> upsample_rates{4, 4};
  std::vector<std::size_t> upsample_kernels{8, 8};
  std::size_t input_channels = 512;
  std::size_t output_channels = 66;
  std::size_t istft_n_fft = 64;
  std::size_t istft_hop = 16;
  std::size_t n_mels = 80;
  std::size_t mel_hop = 256;
  std::size_t sample_rate = 22050;
  std::size_t conformer_layers = 2;
  std::size_t conformer_heads = 8;
  std::size_t depthwise_kernel = 31;
  double dropout = 0.1;
  std::size_t ring_block_len = 512;
  std::size_t ring_devices_override = 0;
  std::uint64_t seed = 0;

  static constexpr std::size_t io_kernel = 7;  // input/output conv, padding 3

  std::size_t num_stages() const { return upsample_rates.size(); }

  // Channel width entering stage i (stage 0 sees input_channels).
  std::size_t stage_in_width(std::size_t i) const {
    return input_channels >> i;
  }
  std::size_t stage_out_width(std::size_t i) const {
    return input_channels >> (i + 1);
  }

  std::size_t total_upsample() const {
    std::size_t p = 1;
    for (std::size_t r : upsample_rates) p *= r;
    return p;
  }

  std::size_t stage_padding(std::size_t i) const {
    return (upsample_kernels[i] - upsample_rates[i]) / 2;
  }

  void validate() const {
    if (upsample_rates.empty() ||
        upsample_rates.size() != upsample_kernels.size()) {
      throw ConfigError("generator: upsample_rates and upsample_kernels must "
                        "be non-empty and equal length");
    }
    if (istft_n_fft == 0 || (istft_n_fft & (istft_n_fft - 1)) != 0) {
      throw ConfigError("generator: istft_n_fft must be a power of two, got " +
                        std::to_string(istft_n_fft));
    }
    const std::size_t expected_out = 2 * (istft_n_fft / 2 + 1);
    if (output_channels != expected_out) {
      throw ConfigError("generator: output_channels " +
                        std::to_string(output_channels) +
                        " must equal 2*(istft_n_fft/2+1) = " +
                        std::to_string(expected_out));
    }
    if (total_upsample() * istft_hop != mel_hop) {
      throw ConfigError("generator: product(upsample_rates)*istft_hop = " +
                        std::to_string(total_upsample() * istft_hop) +
                        " must equal the mel hop " + std::to_string(mel_hop));
    }
    for (std::size_t i = 0; i < num_stages(); ++i) {
      if (upsample_kernels[i] < upsample_rates[i] ||
          (upsample_kernels[i] - upsample_rates[i]) % 2 != 0) {
        throw ConfigError("generator: stage " + std::to_string(i) +
                          " kernel " + std::to_string(upsample_kernels[i]) +
                          " incompatible with rate " +
                          std::to_string(upsample_rates[i]) +
                          " (padding (k-u)/2 must be a whole number)");
      }
      const std::size_t width = stage_out_width(i);
      if (width == 0 || stage_in_width(i) != width * 2) {
        throw ConfigError("generator: input_channels " +
                          std::to_string(input_channels) +
                          " cannot halve cleanly at stage " +
                          std::to_string(i));
      }
      if (width % conformer_heads != 0) {
        throw ConfigError("generator: stage " + std::to_string(i) + " width " +
                          std::to_string(width) + " not divisible by " +
                          std::to_string(conformer_heads) + " heads");
      }
    }
    if (n_mels == 0) throw ConfigError("generator: n_mels must be >= 1");
  }

  ConformerConfig conformer_config(std::size_t stage) const {
    ConformerConfig c;
    c.dim = stage_out_width(stage);
    c.num_heads = conformer_heads;
    c.num_layers = conformer_layers;
    c.depthwise_kernel = depthwise_kernel;
    c.dropout = dropout;
    c.dropout_enabled = false;
    c.block_len = ring_block_len;
    c.ring_devices_override = ring_devices_override;
    return c;
  }
};

template <typename T = float>
struct GeneratorStageWeights {
  Tensor<T> upsample_w;  // [in x out x k]
  Tensor<T> upsample_b;  // [out]
  Tensor<T> snake_alpha;
  ConformerWeights<T> conformer;
};

template <typename T = float>
struct GeneratorWeights {
  GeneratorConfig config;
  Tensor<T> input_conv_w;  // [input_channels x n_mels x 7]
  Tensor<T> input_conv_b;
  std::vector<GeneratorStageWeights<T>> stages;
  Tensor<T> output_conv_w;  // [output_channels x last_width x 7]
  Tensor<T> output_conv_b;
};

// Deterministic seeded construction: same seed, bitwise-identical weights.
template <typename T = float>
GeneratorWeights<T> build_generator(const GeneratorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  GeneratorWeights<T> w;
  w.config = cfg;

  w.input_conv_w = init::conv_weight<T>(rng, cfg.input_channels, cfg.n_mels,
                                        GeneratorConfig::io_kernel);
  w.input_conv_b = init::uniform_fan_in<T>(
      rng, {cfg.input_channels}, cfg.n_mels * GeneratorConfig::io_kernel);

  for (std::size_t i = 0; i < cfg.num_stages(); ++i) {
    GeneratorStageWeights<T> stage;
    const std::size_t in = cfg.stage_in_width(i);
    const std::size_t out = cfg.stage_out_width(i);
    stage.upsample_w = init::uniform_fan_in<T>(
        rng, {in, out, cfg.upsample_kernels[i]}, in * cfg.upsample_kernels[i]);
    stage.upsample_b =
        init::uniform_fan_in<T>(rng, {out}, in * cfg.upsample_kernels[i]);
    stage.snake_alpha = Tensor<T>({out});
    std::fill(stage.snake_alpha.data.begin(), stage.snake_alpha.data.end(),
              T(1));
    stage.conformer = build_conformer<T>(rng, cfg.conformer_config(i));
    w.stages.push_back(std::move(stage));
  }

  const std::size_t last = cfg.stage_out_width(cfg.num_stages() - 1);
  w.output_conv_w = init::conv_weight<T>(rng, cfg.output_channels, last,
                                         GeneratorConfig::io_kernel);
  w.output_conv_b = init::uniform_fan_in<T>(
      rng, {cfg.output_channels}, last * GeneratorConfig::io_kernel);
  return w;
}

// Enumerates every learnable array in canonical order with a stable name;
// single source of truth for the weight file and parameter counting.
template <typename CW, typename F>
void for_each_conformer_array(CW& w, const std::string& prefix, F&& f) {
  std::size_t idx = 0;
  for (auto& block : w.blocks) {
    const std::string p = prefix + ".block" + std::to_string(idx++);
    auto ffn = [&](const std::string& name, auto& ff) {
      f(name + ".norm.gain", ff.norm.gain);
      f(name + ".norm.bias", ff.norm.bias);
      f(name + ".expand.weight", ff.expand.weight);
      f(name + ".expand.bias", ff.expand.bias);
      f(name + ".contract.weight", ff.contract.weight);
      f(name + ".contract.bias", ff.contract.bias);
    };
    ffn(p + ".ffn1", block.ffn1);
    f(p + ".mhsa.norm.gain", block.mhsa.norm.gain);
    f(p + ".mhsa.norm.bias", block.mhsa.norm.bias);
    f(p + ".mhsa.q.weight", block.mhsa.q.weight);
    f(p + ".mhsa.q.bias", block.mhsa.q.bias);
    f(p + ".mhsa.k.weight", block.mhsa.k.weight);
    f(p + ".mhsa.k.bias", block.mhsa.k.bias);
    f(p + ".mhsa.v.weight", block.mhsa.v.weight);
    f(p + ".mhsa.v.bias", block.mhsa.v.bias);
    f(p + ".mhsa.out.weight", block.mhsa.out.weight);
    f(p + ".mhsa.out.bias", block.mhsa.out.bias);
    f(p + ".conv.norm_in.gain", block.conv.norm_in.gain);
    f(p + ".conv.norm_in.bias", block.conv.norm_in.bias);
    f(p + ".conv.pointwise_in.weight", block.conv.pointwise_in_w);
    f(p + ".conv.pointwise_in.bias", block.conv.pointwise_in_b);
    f(p + ".conv.depthwise.weight", block.conv.depthwise_w);
    f(p + ".conv.depthwise.bias", block.conv.depthwise_b);
    f(p + ".conv.norm_mid.gain", block.conv.norm_mid.gain);
    f(p + ".conv.norm_mid.bias", block.conv.norm_mid.bias);
    f(p + ".conv.pointwise_out.weight", block.conv.pointwise_out_w);
    f(p + ".conv.pointwise_out.bias", block.conv.pointwise_out_b);
    ffn(p + ".ffn2", block.ffn2);
    f(p + ".norm_out.gain", block.norm_out.gain);
    f(p + ".norm_out.bias", block.norm_out.bias);
  }
}

template <typename GW, typename F>
void for_each_generator_array(GW& w, F&& f) {
  f("input_conv.weight", w.input_conv_w);
  f("input_conv.bias", w.input_conv_b);
  std::size_t idx = 0;
  for (auto& stage : w.stages) {
    const std::string p = "stage" + std::to_string(idx++);
    f(p + ".upsample.weight", stage.upsample_w);
    f(p + ".upsample.bias", stage.upsample_b);
    f(p + ".snake.alpha", stage.snake_alpha);
    for_each_conformer_array(stage.conformer, p, f);
  }
  f("output_conv.weight", w.output_conv_w);
  f("output_conv.bias", w.output_conv_b);
}

template <typename T>
std::size_t param_count(const GeneratorWeights<T>& w) {
  std::size_t n = 0;
  for_each_generator_array(w, [&](const std::string&, const Tensor<T>& t) {
    n += t.size();
  });
  return n;
}

namespace detail {

template <typename T>
Tensor<T> to_time_major(const Tensor<T>& channels) {
  return transpose(channels);
}

}  // namespace detail

// Mel spectrogram in, waveform out. Output length is exactly mel_hop * frames.
template <typename T>
Waveform<T> synthesize(const MelSpectrogram<T>& mel,
                       const GeneratorWeights<T>& w) {
  const GeneratorConfig& cfg = w.config;
  if (mel.values.rank() != 2 || mel.values.shape[0] != cfg.n_mels) {
    throw DimensionError("synthesize: mel input " + shape_str(mel.values.shape) +
                         " must be [" + std::to_string(cfg.n_mels) +
                         " x frames]");
  }
  const std::size_t frames_in = mel.frames();

  auto stage_check = [](const Tensor<T>& t, const std::string& name) {
    if (!all_finite(t)) {
      throw NumericError("synthesize: non-finite values after " + name);
    }
  };

  Conv1dOptions io_opt;
  io_opt.padding = (GeneratorConfig::io_kernel - 1) / 2;

  Tensor<T> x = conv1d(mel.values, w.input_conv_w, io_opt, &w.input_conv_b);
  stage_check(x, "input_conv");

  for (std::size_t i = 0; i < cfg.num_stages(); ++i) {
    const auto& stage = w.stages[i];
    const std::string name = "stage" + std::to_string(i);
    x = conv_transpose1d(x, stage.upsample_w, cfg.upsample_rates[i],
                         cfg.stage_padding(i), &stage.upsample_b);
    stage_check(x, name + ".upsample");
    x = snake(x, stage.snake_alpha);
    stage_check(x, name + ".snake");
    Tensor<T> tm = detail::to_time_major(x);
    tm = conformer_forward(tm, stage.conformer, cfg.conformer_config(i));
    x = transpose(tm);
    stage_check(x, name + ".conformer");
  }

  Tensor<T> head = conv1d(x, w.output_conv_w, io_opt, &w.output_conv_b);
  stage_check(head, "output_conv");

  const std::size_t bins = cfg.istft_n_fft / 2 + 1;
  const std::size_t head_frames = head.shape[1];
  // One replicated tail frame makes the overlap-add output land exactly on
  // mel_hop * frames_in samples.
  ComplexSpectrogram<T> spec;
  spec.n_fft = cfg.istft_n_fft;
  spec.hop = cfg.istft_hop;
  spec.sample_rate = cfg.sample_rate;
  spec.magnitude = Tensor<T>({bins, head_frames + 1});
  spec.phase = Tensor<T>({bins, head_frames + 1});
  for (std::size_t b = 0; b < bins; ++b) {
    for (std::size_t f = 0; f < head_frames; ++f) {
      const T m = std::min(head.at(b, f), T(6));
      spec.magnitude.at(b, f) = std::exp(m);
      spec.phase.at(b, f) =
          T(std::numbers::pi) * std::tanh(head.at(bins + b, f));
    }
    spec.magnitude.at(b, head_frames) = spec.magnitude.at(b, head_frames - 1);
    spec.phase.at(b, head_frames) = spec.phase.at(b, head_frames - 1);
  }
  stage_check(spec.magnitude, "magnitude_head");
  stage_check(spec.phase, "phase_head");

  Waveform<T> out = istft(spec);
  stage_check(out.samples, "istft_head");

  const std::size_t expected = cfg.mel_hop * frames_in;
  if (out.size() != expected) {
    throw Error("synthesize: produced " + std::to_string(out.size()) +
                " samples, expected " + std::to_string(expected));
  }
  return out;
}

struct BenchmarkReport {
  double wall_time_s = 0.0;
  double samples_per_sec = 0.0;
  double realtime_factor = 0.0;
  long long ring_peak_score_elements = 0;
  long long vanilla_peak_score_elements = 0;
  double ring_attention_ms = 0.0;
  double vanilla_attention_ms = 0.0;
  std::size_t output_samples = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_median_ms(std::size_t repeats, F&& fn) {
  std::vector<double> times;
  times.reserve(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return median(std::move(times));
}

}  // namespace detail

template <typename T = float>
BenchmarkReport benchmark_synthesis(const GeneratorConfig& cfg,
                                    std::size_t mel_frames,
                                    std::size_t repeats) {
  if (repeats < 3) {
    throw ArgumentError("benchmark: repeats must be >= 3 (median reported)");
  }
  const GeneratorWeights<T> w = build_generator<T>(cfg);
  MelSpectrogram<T> mel;
  mel.values = Tensor<T>({cfg.n_mels, mel_frames});
  mel.sample_rate = cfg.sample_rate;
  mel.hop = cfg.mel_hop;
  mel.n_mels = cfg.n_mels;
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_real_distribution<double> dist(-8.0, 0.0);
  for (T& v : mel.values.data) v = T(dist(rng));

  BenchmarkReport report;
  report.output_samples = cfg.mel_hop * mel_frames;
  const double wall_ms = detail::time_median_ms(
      repeats, [&] { (void)synthesize(mel, w); });
  report.wall_time_s = wall_ms / 1000.0;
  report.samples_per_sec = double(report.output_samples) / report.wall_time_s;
  report.realtime_factor =
      (double(report.output_samples) / double(cfg.sample_rate)) /
      report.wall_time_s;

  // ring vs vanilla micro-benchmark at the post-upsampling sequence length
  const std::size_t t_attn = mel_frames * cfg.total_upsample();
  const AttentionConfig attn(t_attn, cfg.ring_block_len, 1, 64);
  Tensor<T> q({t_attn, 64}), k({t_attn, 64}), v({t_attn, 64});
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto* tns : {&q, &k, &v}) {
    for (T& val : tns->data) val = T(unit(rng));
  }
  scorebuf::reset();
  report.ring_attention_ms = detail::time_median_ms(
      repeats, [&] { (void)ring_attention(q, k, v, attn); });
  report.ring_peak_score_elements = scorebuf::peak();
  scorebuf::reset();
  report.vanilla_attention_ms = detail::time_median_ms(
      repeats, [&] { (void)vanilla_attention(q, k, v); });
  report.vanilla_peak_score_elements = scorebuf::peak();
  return report;
}

}  // namespace ringformer
