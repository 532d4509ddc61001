// Command-line surface for the vocoder engine: mel extraction, synthesis,
// ring/vanilla attention benchmarks, loss and metric reports, self-test.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ringformer/ringformer.hpp"
#include "selftest.hpp"

namespace {

using namespace ringformer;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Waveform<float> load_wav(const std::string& path, std::size_t rate) {
  WavReadResult r = read_wav(path, rate);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(r.waveform);
}

int cmd_mel(const std::string& input, const std::string& output) {
  const Waveform<float> wav = load_wav(input, MelConfig{}.sample_rate);
  const MelSpectrogram<float> mel = mel_spectrogram(wav);
  write_mel_file(output, mel);
  std::printf("F=%zu T=%zu\n", mel.values.shape[0], mel.values.shape[1]);
  return 0;
}

struct VocodeOptions {
  std::string input;
  std::string output;
  std::string weights_path;
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t devices = 0;
  std::size_t block_len = 0;
};

int cmd_vocode(const VocodeOptions& opt) {
  GeneratorConfig cfg;
  if (!opt.config_path.empty()) {
    std::ifstream is(opt.config_path);
    if (!is) throw IoError(opt.config_path + ": cannot open config");
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(opt.config_path + ": " + e.what());
    }
    cfg = generator_config_from_json(j);
  }
  cfg.seed = opt.seed;

  GeneratorWeights<float> weights;
  if (!opt.weights_path.empty()) {
    weights = read_weight_file(opt.weights_path);
  } else {
    cfg.validate();
    weights = build_generator<float>(cfg);
  }
  if (opt.block_len > 0) weights.config.ring_block_len = opt.block_len;
  if (opt.devices > 0) weights.config.ring_devices_override = opt.devices;

  MelSpectrogram<float> mel;
  if (ends_with(opt.input, ".wav")) {
    const Waveform<float> wav =
        load_wav(opt.input, weights.config.sample_rate);
    MelConfig mel_cfg;
    mel_cfg.sample_rate = weights.config.sample_rate;
    mel_cfg.hop = weights.config.mel_hop;
    mel_cfg.n_mels = weights.config.n_mels;
    mel = mel_spectrogram(wav, mel_cfg);
  } else {
    mel = read_mel_file(opt.input, weights.config.sample_rate,
                        weights.config.mel_hop);
  }
  if (mel.values.shape[0] != weights.config.n_mels) {
    throw ConfigError(opt.input + ": " + std::to_string(mel.values.shape[0]) +
                      " mel bins, generator expects " +
                      std::to_string(weights.config.n_mels));
  }

  const Waveform<float> wav = synthesize(mel, weights);
  write_wav(opt.output, wav);
  std::printf("T=%zu frames -> %zu samples (%s)\n", mel.frames(), wav.size(),
              opt.output.c_str());
  return 0;
}

struct BenchOptions {
  std::string output;
  std::vector<std::size_t> seq_lens{512, 1024, 2048};
  std::vector<std::size_t> block_lens{128, 512};
  std::size_t repeats = 5;
};

int cmd_bench(const BenchOptions& opt) {
  if (opt.repeats < 3) {
    throw ArgumentError("bench: repeats must be >= 3 (median reported)");
  }
  std::ofstream os(opt.output);
  if (!os) throw IoError(opt.output + ": cannot open for write");
  os << "seq_len,block_len,mode,median_ms,peak_score_elements,realtime_factor\n";

  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const std::size_t head_dim = 64;
  const std::size_t token_hop = 16;  // final-stage frame advance in samples
  for (std::size_t t : opt.seq_lens) {
    Tensor<float> q({t, head_dim}), k({t, head_dim}), v({t, head_dim});
    for (auto* tns : {&q, &k, &v}) {
      for (float& val : tns->data) val = float(unit(rng));
    }
    for (std::size_t b : opt.block_lens) {
      const AttentionConfig cfg(t, b, 1, head_dim);
      const double audio_seconds = double(t * token_hop) / 22050.0;
      for (const char* mode : {"ring", "vanilla"}) {
        scorebuf::reset();
        const double ms = detail::time_median_ms(opt.repeats, [&] {
          if (mode[0] == 'r') {
            (void)ring_attention(q, k, v, cfg);
          } else {
            (void)vanilla_attention(q, k, v);
          }
        });
        os << t << ',' << b << ',' << mode << ',' << ms << ','
           << scorebuf::peak() << ',' << audio_seconds / (ms / 1000.0) << '\n';
      }
    }
  }
  if (!os.good()) throw IoError(opt.output + ": write failed");
  std::printf("bench: wrote %s\n", opt.output.c_str());
  return 0;
}

int cmd_losses(const std::string& real_path, const std::string& fake_path,
               const std::string& report_path, std::uint64_t seed,
               const ExternalLosses& external) {
  Waveform<float> real = load_wav(real_path, MelConfig{}.sample_rate);
  Waveform<float> fake = load_wav(fake_path, MelConfig{}.sample_rate);
  const std::size_t len = std::min(real.size(), fake.size());
  real.samples.data.resize(len);
  real.samples.shape = {len};
  fake.samples.data.resize(len);
  fake.samples.shape = {len};

  const LossReport report = evaluate_losses(real, fake, seed, external);
  std::ofstream os(report_path);
  if (!os) throw IoError(report_path + ": cannot open for write");
  os << loss_report_to_json(report).dump(2) << "\n";
  if (!os.good()) throw IoError(report_path + ": write failed");
  std::printf("l_total=%.6f (l_g=%.6f l_d=%.6f l_mag=%.6f l_phase=%.6f "
              "l_fm=%.6f)\n",
              report.l_total, report.l_g, report.l_d, report.l_mag,
              report.l_phase, report.l_fm);
  return 0;
}

int cmd_metrics(const std::string& ref_path, const std::string& hyp_path,
                const std::string& report_path) {
  const Waveform<float> ref = load_wav(ref_path, MelConfig{}.sample_rate);
  const Waveform<float> hyp = load_wav(hyp_path, MelConfig{}.sample_rate);
  if (ref.size() != hyp.size()) {
    throw ArgumentError("metrics: waveform lengths differ (" +
                        std::to_string(ref.size()) + " vs " +
                        std::to_string(hyp.size()) + ")");
  }
  const MetricsReport report = compute_metrics(ref, hyp);
  std::ofstream os(report_path);
  if (!os) throw IoError(report_path + ": cannot open for write");
  os << metrics_report_to_json(report).dump(2) << "\n";
  if (!os.good()) throw IoError(report_path + ": write failed");
  std::printf("mcd_db=%.6f f0_pearson=%.6f voiced=%zu/%zu\n", report.mcd_db,
              report.f0_pearson, report.voiced_frames, report.total_frames);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ringformer: ring-attention conformer vocoder engine"};
  app.require_subcommand(1);

  std::string mel_in, mel_out;
  auto* mel_cmd = app.add_subcommand("mel", "PCM16 WAV to MELF mel spectrogram");
  mel_cmd->add_option("input", mel_in, "input .wav")->required();
  mel_cmd->add_option("output", mel_out, "output .melf")->required();

  VocodeOptions voc;
  auto* voc_cmd = app.add_subcommand("vocode", "mel (or wav) to waveform");
  voc_cmd->add_option("input", voc.input, "input .melf or .wav")->required();
  voc_cmd->add_option("output", voc.output, "output .wav")->required();
  voc_cmd->add_option("--weights", voc.weights_path, "RFW1 weight file");
  voc_cmd->add_option("--config", voc.config_path, "generator config JSON");
  voc_cmd->add_option("--seed", voc.seed, "weight seed when no file given");
  voc_cmd->add_option("--devices", voc.devices, "ring device count override");
  voc_cmd->add_option("--block-len", voc.block_len, "ring block length");

  BenchOptions bench;
  auto* bench_cmd =
      app.add_subcommand("bench", "ring vs vanilla attention benchmark CSV");
  bench_cmd->add_option("output", bench.output, "output .csv")->required();
  bench_cmd->add_option("--seq-lens", bench.seq_lens, "sequence lengths")
      ->delimiter(',');
  bench_cmd->add_option("--block-lens", bench.block_lens, "ring block lengths")
      ->delimiter(',');
  bench_cmd->add_option("--repeats", bench.repeats, "timing repeats (>= 3)");

  std::string loss_real, loss_fake, loss_report;
  std::uint64_t loss_seed = 0;
  ringformer::ExternalLosses external;
  auto* loss_cmd =
      app.add_subcommand("losses", "loss report JSON for a wav pair");
  loss_cmd->add_option("real", loss_real, "reference .wav")->required();
  loss_cmd->add_option("fake", loss_fake, "generated .wav")->required();
  loss_cmd->add_option("report", loss_report, "output .json")->required();
  loss_cmd->add_option("--seed", loss_seed, "discriminator seed");
  loss_cmd->add_option("--recon", external.recon, "external L_recon scalar");
  loss_cmd->add_option("--kl", external.kl, "external L_KL scalar");
  loss_cmd->add_option("--dur", external.dur, "external L_dur scalar");

  std::string met_ref, met_hyp, met_report;
  auto* met_cmd =
      app.add_subcommand("metrics", "MCD and F0 correlation report JSON");
  met_cmd->add_option("ref", met_ref, "reference .wav")->required();
  met_cmd->add_option("hyp", met_hyp, "hypothesis .wav")->required();
  met_cmd->add_option("report", met_report, "output .json")->required();

  std::string corrupt_kernel;
  bool selftest_quick = false;
  auto* self_cmd =
      app.add_subcommand("selftest", "run the full invariant suite");
  self_cmd
      ->add_option("--corrupt-kernel", corrupt_kernel,
                   "fault-injection hook (matmul)")
      ->check(CLI::IsMember({"matmul"}));
  self_cmd->add_flag("--quick", selftest_quick,
                     "shrink the exactness grid for fast iteration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (mel_cmd->parsed()) return cmd_mel(mel_in, mel_out);
    if (voc_cmd->parsed()) return cmd_vocode(voc);
    if (bench_cmd->parsed()) return cmd_bench(bench);
    if (loss_cmd->parsed()) {
      return cmd_losses(loss_real, loss_fake, loss_report, loss_seed, external);
    }
    if (met_cmd->parsed()) return cmd_metrics(met_ref, met_hyp, met_report);
    if (self_cmd->parsed()) {
      if (corrupt_kernel == "matmul") {
        ringformer::testhook::corrupt_matmul.store(true);
      }
      return selftest::run_selftest(selftest_quick);
    }
  } catch (const ringformer::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ringformer::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 5;
  } catch (const ringformer::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
