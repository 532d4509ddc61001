#pragma once

// Runtime invariant suite behind `ringformer selftest`: ring/vanilla
// exactness, the score-memory law, reconstruction and loss identities,
// generator determinism, metric closed forms, and file round-trips. Every
// check prints one line; any failure names the violated invariant.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ringformer/ringformer.hpp"

namespace selftest {

using namespace ringformer;

struct CheckResult {
  std::string name;
  bool ok = true;
  std::string detail;
  double elapsed_ms = 0.0;
};

template <typename Fn>
void parallel_tasks(std::size_t count, Fn&& body) {
  // oversubscribe: tasks block on ring handoffs, so extra workers keep the
  // cores fed
  const std::size_t workers =
      std::max<std::size_t>(2, 2 * std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count;
           i = next.fetch_add(1)) {
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

// Worst ring-vs-vanilla deviation across every block length that fits the
// sequence. The vanilla result does not depend on the block partition, so it
// is evaluated once per (seq_len, heads, seed) draw.
template <typename T>
double ring_vs_vanilla(std::size_t seq_len,
                       const std::vector<std::size_t>& block_lens,
                       std::size_t heads, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const std::size_t head_dim = 64;
  double worst = 0.0;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor<T> q({seq_len, head_dim}), k({seq_len, head_dim}),
        v({seq_len, head_dim});
    for (auto* t : {&q, &k, &v}) {
      for (T& val : t->data) val = T(dist(rng));
    }
    const Tensor<T> exact = vanilla_attention(q, k, v);
    for (std::size_t b : block_lens) {
      if (b > seq_len) continue;
      const AttentionConfig cfg(seq_len, b, heads, head_dim);
      const Tensor<T> ring = ring_attention(q, k, v, cfg);
      for (std::size_t i = 0; i < ring.size(); ++i) {
        worst = std::max(
            worst, std::abs(double(ring.data[i]) - double(exact.data[i])));
      }
    }
  }
  return worst;
}

struct ExactnessGrid {
  std::vector<std::size_t> seq_lens{64, 512, 2048};
  std::vector<std::size_t> block_lens{32, 128, 512};
  std::vector<std::size_t> heads{1, 8};
  std::size_t seeds = 20;
  double tol_f32 = 1e-4;
  double tol_f64 = 1e-10;
};

inline CheckResult check_ring_exactness(const ExactnessGrid& grid = {}) {
  CheckResult res;
  res.name = "ring-exactness";
  struct Cell {
    std::size_t t, h;
    std::uint64_t seed;
    bool f64;
  };
  std::vector<Cell> cells;
  for (std::size_t t : grid.seq_lens) {
    for (std::size_t h : grid.heads) {
      for (std::size_t s = 0; s < grid.seeds; ++s) {
        cells.push_back({t, h, 1000 + s, false});
        cells.push_back({t, h, (1000 + s) ^ 0x5a5a, true});
      }
    }
  }
  std::atomic<double> worst32{0.0};
  std::atomic<double> worst64{0.0};
  auto raise = [](std::atomic<double>& slot, double v) {
    double cur = slot.load();
    while (v > cur && !slot.compare_exchange_weak(cur, v)) {
    }
  };
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;
  parallel_tasks(cells.size(), [&](std::size_t i) {
    const Cell& c = cells[i];
    try {
      if (c.f64) {
        raise(worst64,
              ring_vs_vanilla<double>(c.t, grid.block_lens, c.h, c.seed));
      } else {
        raise(worst32,
              ring_vs_vanilla<float>(c.t, grid.block_lens, c.h, c.seed));
      }
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lk(error_mutex);
      if (!failed.exchange(true)) first_error = e.what();
    }
  });
  std::ostringstream os;
  os << "max|ring-vanilla| f32=" << worst32.load() << " f64=" << worst64.load();
  res.detail = os.str();
  if (failed.load()) {
    res.ok = false;
    res.detail = "exception: " + first_error;
  } else if (worst32.load() >= grid.tol_f32 || worst64.load() >= grid.tol_f64) {
    res.ok = false;
  }
  return res;
}

inline CheckResult check_memory_law() {
  CheckResult res;
  res.name = "memory-law";
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> t_dist(16, 768);
  std::uniform_int_distribution<std::size_t> b_dist(8, 512);
  std::ostringstream os;
  for (int i = 0; i < 10; ++i) {
    const std::size_t t = t_dist(rng);
    const std::size_t b = b_dist(rng);
    const AttentionConfig cfg(t, b, 1, 16);
    Tensor<float> q({t, 16}), k({t, 16}), v({t, 16});
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (auto* tns : {&q, &k, &v}) {
      for (float& val : tns->data) val = float(unit(rng));
    }
    scorebuf::reset();
    (void)ring_attention(q, k, v, cfg);
    const long long ring_peak = scorebuf::peak();
    scorebuf::reset();
    (void)vanilla_attention(q, k, v);
    const long long vanilla_peak = scorebuf::peak();
    const long long ring_law = peak_score_elements(cfg, AttentionMode::ring);
    const long long vanilla_law =
        peak_score_elements(cfg, AttentionMode::vanilla);
    if (ring_peak != ring_law || vanilla_peak != vanilla_law) {
      res.ok = false;
      os << "T=" << t << " b=" << b << ": measured ring " << ring_peak
         << " vs law " << ring_law << ", vanilla " << vanilla_peak << " vs "
         << vanilla_law;
      res.detail = os.str();
      return res;
    }
  }
  const AttentionConfig big(4096, 512, 1, 64);
  const double ratio =
      double(peak_score_elements(big, AttentionMode::ring)) /
      double(peak_score_elements(big, AttentionMode::vanilla));
  if (ratio != 0.125) {
    res.ok = false;
    res.detail = "T=4096 b=512 ratio " + std::to_string(ratio) + " != 0.125";
    return res;
  }
  res.detail = "10 instrumented configs match N_d*b^2 / T^2; 4096/512 ratio 0.125";
  return res;
}

inline CheckResult check_istft_roundtrip() {
  CheckResult res;
  res.name = "istft-roundtrip";
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double worst = 1e9;
  for (const auto& [n_fft, hop] :
       std::vector<std::pair<std::size_t, std::size_t>>{{1024, 256}, {64, 16}}) {
    std::uniform_int_distribution<std::size_t> mult(4, 24);
    for (int i = 0; i < 100; ++i) {
      const std::size_t len = hop * mult(rng);
      Tensor<float> samples({len});
      for (float& v : samples.data) v = float(unit(rng));
      const Waveform<float> x(std::move(samples), 22050);
      const Waveform<float> y = istft(stft(x, n_fft, hop));
      double sig = 0.0, noise = 0.0;
      for (std::size_t n = 0; n < y.size(); ++n) {
        sig += double(x.samples.data[n]) * double(x.samples.data[n]);
        const double d = double(x.samples.data[n]) - double(y.samples.data[n]);
        noise += d * d;
      }
      const double snr = noise == 0.0 ? 300.0 : 10.0 * std::log10(sig / noise);
      worst = std::min(worst, snr);
    }
  }
  res.detail = "worst SNR " + std::to_string(worst) + " dB over 200 signals";
  res.ok = worst > 60.0;
  return res;
}

inline CheckResult check_generator_contracts() {
  CheckResult res;
  res.name = "generator-length-determinism";
  GeneratorConfig cfg;
  cfg.seed = 42;
  std::ostringstream os;
  for (std::size_t frames : {std::size_t(1), std::size_t(32), std::size_t(87)}) {
    std::mt19937_64 rng(7000 + frames);
    std::uniform_real_distribution<double> mel_range(-20.0, 20.0);
    MelSpectrogram<float> mel;
    mel.values = Tensor<float>({cfg.n_mels, frames});
    for (float& v : mel.values.data) v = float(mel_range(rng));
    mel.sample_rate = cfg.sample_rate;
    mel.hop = cfg.mel_hop;
    mel.n_mels = cfg.n_mels;

    const GeneratorWeights<float> w1 = build_generator<float>(cfg);
    const GeneratorWeights<float> w2 = build_generator<float>(cfg);
    const Waveform<float> a = synthesize(mel, w1);
    const Waveform<float> b = synthesize(mel, w2);
    if (a.size() != cfg.mel_hop * frames) {
      res.ok = false;
      os << "T=" << frames << ": length " << a.size() << " != "
         << cfg.mel_hop * frames;
      res.detail = os.str();
      return res;
    }
    if (a.samples.data != b.samples.data) {
      res.ok = false;
      res.detail = "same seed produced different waveforms at T=" +
                   std::to_string(frames);
      return res;
    }
    if (!all_finite(a.samples)) {
      res.ok = false;
      res.detail = "non-finite sample at T=" + std::to_string(frames);
      return res;
    }
  }
  res.detail = "length 256*T, bitwise determinism, finite for |mel|<=20";
  return res;
}

inline CheckResult check_loss_identities() {
  CheckResult res;
  res.name = "loss-identities";
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(-0.8, 0.8);
  Tensor<float> samples({4096});
  for (float& v : samples.data) v = float(unit(rng));
  const Waveform<float> x(samples, 22050);
  Tensor<float> neg = samples;
  for (float& v : neg.data) v = -v;
  const Waveform<float> minus_x(neg, 22050);

  auto expect = [&](bool cond, const std::string& what) {
    if (!cond && res.ok) {
      res.ok = false;
      res.detail = what;
    }
  };

  expect(magnitude_loss(x, x) == 0.0, "l_mag(x,x) != 0");
  expect(phase_loss(x, x) == 0.0, "l_phase(x,x) != 0");
  expect(std::abs(phase_loss(x, minus_x) - 2.0) <= 1e-6,
         "l_phase(x,-x) != 2");

  const MpdWeights<float> mpd = build_mpd<float>(5);
  const std::vector<DiscriminatorOutput<float>> d1{mpd_forward(x, 2, mpd)};
  const std::vector<DiscriminatorOutput<float>> d2{mpd_forward(x, 2, mpd)};
  expect(feature_matching_loss(d1, d2) == 0.0, "l_fm(identical) != 0");

  Tensor<float> half({2, 3});
  for (float& v : half.data) v = 0.5f;
  FamilyScores<float> fam;
  fam.theta = {half, half};
  fam.psi = {half};
  const AdversarialLosses adv = adversarial_losses(fam, fam, fam, 0.5);
  expect(std::abs(adv.generator_loss - 0.25) <= 1e-9,
         "L_G at all-0.5 scores != 0.25");
  expect(std::abs(adv.discriminator_loss - 0.5) <= 1e-9,
         "L_D at all-0.5 scores != 0.5");

  const LossWeights w;
  expect(w.lambda_sd == 0.7 && w.lambda_fm == 1.0 && w.lambda_recon == 45.0 &&
             w.lambda_kl == 1.0 && w.lambda_dur == 1.0,
         "default loss weights are not (0.7, 1, 45, 1, 1)");
  expect(total_loss(0, 1, 0, {}).total == 0.7, "sd=1 total != 0.7");
  expect(total_loss(0, 0, 0, {1.0, 0.0, 0.0}).total == 45.0,
         "recon=1 total != 45");

  if (res.ok) res.detail = "magnitude/phase/fm/adversarial/total identities hold";
  return res;
}

inline CheckResult check_metrics_identities() {
  CheckResult res;
  res.name = "metrics-identities";
  const std::size_t sr = 22050;
  Tensor<float> tone({sr});
  for (std::size_t i = 0; i < sr; ++i) {
    tone.data[i] =
        0.5f * float(std::sin(2.0 * std::numbers::pi * 220.0 * double(i) /
                              double(sr)));
  }
  const Waveform<float> x(tone, sr);

  std::ostringstream os;
  if (mcd(x, x) != 0.0) {
    res.ok = false;
    res.detail = "mcd(x,x) != 0";
    return res;
  }

  const Tensor<double> cep = mel_cepstra(x);
  Tensor<double> offset = cep;
  for (double& v : offset.data) v += 0.1;
  const double closed_form = (10.0 / std::log(10.0)) * 0.1 * std::sqrt(26.0);
  const double measured = mcd_from_cepstra(cep, offset);
  if (std::abs(measured - closed_form) > 1e-3) {
    res.ok = false;
    os << "cepstral offset mcd " << measured << " != closed form "
       << closed_form;
    res.detail = os.str();
    return res;
  }

  const F0Contour contour = f0_contour(x);
  for (std::size_t i = 1; i + 1 < contour.frames(); ++i) {
    if (!contour.voiced(i) || std::abs(contour.f0_hz[i] - 220.0) > 2.0) {
      res.ok = false;
      os << "220 Hz tone: frame " << i << " tracked at " << contour.f0_hz[i];
      res.detail = os.str();
      return res;
    }
  }

  std::vector<double> seq{101.0, 105.5, 103.25, 110.0, 99.0, 120.5};
  if (std::abs(pearson(seq, seq) - 1.0) > 1e-12) {
    res.ok = false;
    res.detail = "pearson(a,a) != 1";
    return res;
  }
  res.detail = "mcd identity, 2.2145 dB closed form, 220 Hz pitch, pearson";
  return res;
}

// Closed-form parameter count recomputed from the config's shape arithmetic,
// independently of the weight structs.
inline std::size_t expected_param_count(const GeneratorConfig& cfg) {
  auto linear_params = [](std::size_t out, std::size_t in) {
    return out * in + out;
  };
  auto block_params = [&](std::size_t d) {
    const std::size_t ffn = 2 * d + linear_params(d / 2, d) +
                            linear_params(d, d / 2);
    const std::size_t mhsa = 2 * d + 4 * linear_params(d, d);
    const std::size_t conv = 2 * d + (d * 2 * d + 2 * d) +
                             (d * cfg.depthwise_kernel + d) + 2 * d +
                             (d * d + d);
    return ffn + mhsa + conv + ffn + 2 * d;
  };
  std::size_t total = cfg.input_channels * cfg.n_mels * 7 + cfg.input_channels;
  for (std::size_t i = 0; i < cfg.num_stages(); ++i) {
    const std::size_t in = cfg.stage_in_width(i);
    const std::size_t out = cfg.stage_out_width(i);
    total += in * out * cfg.upsample_kernels[i] + out;  // transposed conv
    total += out;                                       // snake alpha
    total += cfg.conformer_layers * block_params(out);
  }
  const std::size_t last = cfg.stage_out_width(cfg.num_stages() - 1);
  total += cfg.output_channels * last * 7 + cfg.output_channels;
  return total;
}

inline CheckResult check_param_count_consistency() {
  CheckResult res;
  res.name = "param-count-consistency";
  GeneratorConfig cfg;
  const std::size_t counted = param_count(build_generator<float>(cfg));
  const std::size_t expected = expected_param_count(cfg);
  std::ostringstream os;
  os << "counted " << counted << ", closed form " << expected;
  res.detail = os.str();
  res.ok = counted == expected;
  return res;
}

inline CheckResult check_file_roundtrip() {
  CheckResult res;
  res.name = "file-roundtrip";
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("ringformer-selftest-" +
                                   std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)),
                       std::istreambuf_iterator<char>());
  };
  try {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(-11.0, 2.0);
    MelSpectrogram<float> mel;
    mel.values = Tensor<float>({80, 17});
    for (float& v : mel.values.data) v = float(unit(rng));
    const fs::path mel_a = dir / "a.melf";
    const fs::path mel_b = dir / "b.melf";
    write_mel_file(mel_a.string(), mel);
    write_mel_file(mel_b.string(), read_mel_file(mel_a.string()));
    if (slurp(mel_a) != slurp(mel_b)) {
      res.ok = false;
      res.detail = "MELF round trip is not byte-identical";
    }

    GeneratorConfig cfg;
    cfg.input_channels = 32;
    cfg.conformer_heads = 4;
    cfg.n_mels = 8;
    cfg.seed = 3;
    const GeneratorWeights<float> w = build_generator<float>(cfg);
    const fs::path w_a = dir / "a.rfw";
    const fs::path w_b = dir / "b.rfw";
    write_weight_file(w_a.string(), w);
    write_weight_file(w_b.string(), read_weight_file(w_a.string()));
    if (res.ok && slurp(w_a) != slurp(w_b)) {
      res.ok = false;
      res.detail = "RFW1 round trip is not byte-identical";
    }
    if (res.ok) res.detail = "MELF and RFW1 write-read-write byte-identical";
  } catch (const std::exception& e) {
    res.ok = false;
    res.detail = std::string("exception: ") + e.what();
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  return res;
}

inline int run_selftest(bool quick = false) {
  using clock = std::chrono::steady_clock;
  ExactnessGrid grid;
  if (quick) {
    grid.seq_lens = {64, 512};
    grid.seeds = 3;
  }
  std::vector<std::function<CheckResult()>> checks = {
      [grid] {
        CheckResult r = check_ring_exactness(grid);
        if (grid.seeds < 20) r.detail += " [quick grid]";
        return r;
      },
      [] { return check_memory_law(); },
      [] { return check_istft_roundtrip(); },
      [] { return check_generator_contracts(); },
      [] { return check_loss_identities(); },
      [] { return check_metrics_identities(); },
      [] { return check_param_count_consistency(); },
      [] { return check_file_roundtrip(); },
  };
  int failures = 0;
  for (auto& check : checks) {
    const auto t0 = clock::now();
    CheckResult r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r.name = "unknown";
      r.ok = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.elapsed_ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    std::printf("[%s] %-28s %s (%.0f ms)\n", r.ok ? "ok" : "FAIL",
                r.name.c_str(), r.detail.c_str(), r.elapsed_ms);
    if (!r.ok) ++failures;
  }
  if (failures > 0) {
    std::printf("selftest: %d invariant(s) violated\n", failures);
  } else {
    std::printf("selftest: all invariants hold\n");
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace selftest
