#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ringformer/dsp.hpp"
#include "ringformer/tensor.hpp"

namespace ringformer {

// STFT grid shared by the magnitude and phase losses.
struct LossStft {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
};

inline constexpr double kPhaseMagnitudeGate = 1e-8;

template <typename T = float>
struct DiscriminatorOutput {
  Tensor<T> score_map;                // final-layer logits
  std::vector<Tensor<T>> features;    // per-layer activations
};

struct MpdConfig {
  std::vector<std::size_t> periods{2, 3, 5, 7, 9};
  std::size_t kernel = 5;
  std::size_t stride = 3;
  std::vector<std::size_t> channels{32, 128, 512, 1024, 1024};
  std::size_t final_kernel = 3;
  double leaky_slope = 0.1;
};

template <typename T = float>
struct PeriodDiscriminatorWeights {
  std::size_t period = 1;
  std::vector<Tensor<T>> conv_w;  // [C_out x C_in x K] applied along the fold
  std::vector<Tensor<T>> conv_b;
  Tensor<T> final_w;
  Tensor<T> final_b;
};

template <typename T = float>
struct MpdWeights {
  MpdConfig config;
  std::vector<PeriodDiscriminatorWeights<T>> members;
};

template <typename T = float>
MpdWeights<T> build_mpd(std::uint64_t seed, const MpdConfig& cfg = {}) {
  if (cfg.channels.empty()) {
    throw ConfigError("mpd: channel stack must be non-empty");
  }
  std::mt19937_64 rng(seed);
  MpdWeights<T> w;
  w.config = cfg;
  for (std::size_t p : cfg.periods) {
    if (p < 1) throw ConfigError("mpd: period must be >= 1");
    PeriodDiscriminatorWeights<T> member;
    member.period = p;
    std::size_t in_ch = 1;
    for (std::size_t out_ch : cfg.channels) {
      member.conv_w.push_back(
          init::uniform_fan_in<T>(rng, {out_ch, in_ch, cfg.kernel},
                                  in_ch * cfg.kernel));
      member.conv_b.push_back(
          init::uniform_fan_in<T>(rng, {out_ch}, in_ch * cfg.kernel));
      in_ch = out_ch;
    }
    member.final_w = init::uniform_fan_in<T>(
        rng, {1, in_ch, cfg.final_kernel}, in_ch * cfg.final_kernel);
    member.final_b =
        init::uniform_fan_in<T>(rng, {1}, in_ch * cfg.final_kernel);
    w.members.push_back(std::move(member));
  }
  return w;
}

namespace detail {

// Conv with kernel (K,1) and stride (s,1) over a [C x H x W] map: each of the
// W fold columns is an independent 1-D conv along H.
template <typename T>
Tensor<T> conv_along_height(const Tensor<T>& x, const Tensor<T>& w,
                            const Tensor<T>& bias, std::size_t stride,
                            std::size_t padding) {
  const std::size_t c_in = x.shape[0];
  const std::size_t height = x.shape[1];
  const std::size_t width = x.shape[2];
  const std::size_t c_out = w.shape[0];
  Conv1dOptions opt;
  opt.stride = stride;
  opt.padding = padding;
  const std::size_t h_out = conv1d_output_length(height, w.shape[2], opt);

  Tensor<T> column({c_in, height});
  Tensor<T> out({c_out, h_out, width});
  for (std::size_t col = 0; col < width; ++col) {
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t h = 0; h < height; ++h) {
        column.at(c, h) = x.at(c, h, col);
      }
    }
    const Tensor<T> y = conv1d(column, w, opt, &bias);
    for (std::size_t c = 0; c < c_out; ++c) {
      for (std::size_t h = 0; h < h_out; ++h) out.at(c, h, col) = y.at(c, h);
    }
  }
  return out;
}

}  // namespace detail

// Fold the waveform at period p and run the strided conv stack; every
// intermediate activation is recorded for feature matching.
template <typename T>
DiscriminatorOutput<T> mpd_forward(const Waveform<T>& x, std::size_t period,
                                   const MpdWeights<T>& w) {
  if (period < 1) throw ArgumentError("mpd: period must be >= 1");
  const PeriodDiscriminatorWeights<T>* member = nullptr;
  for (const auto& m : w.members) {
    if (m.period == period) {
      member = &m;
      break;
    }
  }
  if (!member) {
    throw ArgumentError("mpd: no discriminator built for period " +
                        std::to_string(period));
  }
  const MpdConfig& cfg = w.config;

  const std::size_t len = x.size();
  const std::size_t padded = (len + period - 1) / period * period;
  const std::size_t height = padded / period;
  Tensor<T> map({1, height, period});
  for (std::size_t i = 0; i < len; ++i) {
    map.at(0, i / period, i % period) = x.samples.data[i];
  }

  DiscriminatorOutput<T> out;
  const std::size_t pad = (cfg.kernel - 1) / 2;
  for (std::size_t layer = 0; layer < member->conv_w.size(); ++layer) {
    map = detail::conv_along_height(map, member->conv_w[layer],
                                    member->conv_b[layer], cfg.stride, pad);
    map = leaky_relu(map, T(cfg.leaky_slope));
    out.features.push_back(map);
  }
  out.score_map = detail::conv_along_height(
      map, member->final_w, member->final_b, 1, (cfg.final_kernel - 1) / 2);
  return out;
}

// Score maps grouped by discriminator family: theta (MPD ensemble) weighted
// by alpha, psi (the second family) by 1-alpha.
template <typename T = float>
struct FamilyScores {
  std::vector<Tensor<T>> theta;
  std::vector<Tensor<T>> psi;
};

struct AdversarialLosses {
  double generator_loss = 0.0;
  double discriminator_loss = 0.0;
};

namespace detail {

template <typename T>
double mean_sq_dist_to(const Tensor<T>& scores, double target) {
  double acc = 0.0;
  for (T s : scores.data) {
    const double d = target - double(s);
    acc += d * d;
  }
  return acc / double(scores.size());
}

template <typename T>
double family_mean(const std::vector<Tensor<T>>& members,
                   double (*term)(const Tensor<T>&)) {
  double acc = 0.0;
  for (const auto& m : members) acc += term(m);
  return acc / double(members.size());
}

}  // namespace detail

// Least-squares GAN objective over the two discriminator families.
// L_G = a*E[(1-D_t(G))^2] + (1-a)*E[(1-D_p(G))^2]
// L_D = a*E[(1-D_t(x))^2 + D_t(G)^2] + (1-a)*(same for psi)
// Sub-discriminator losses are averaged within each family.
template <typename T>
AdversarialLosses adversarial_losses(const FamilyScores<T>& real,
                                     const FamilyScores<T>& fake_for_d,
                                     const FamilyScores<T>& fake_for_g,
                                     double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ArgumentError("adversarial: alpha must be in [0, 1]");
  }
  for (const auto* fs : {&real, &fake_for_d, &fake_for_g}) {
    if (fs->theta.empty() || fs->psi.empty()) {
      throw ArgumentError("adversarial: empty score list for a family");
    }
  }
  if (real.theta.size() != fake_for_d.theta.size() ||
      real.psi.size() != fake_for_d.psi.size()) {
    throw ArgumentError("adversarial: real/fake ensembles differ in size");
  }

  auto gen_term = [](const std::vector<Tensor<T>>& fakes) {
    double acc = 0.0;
    for (const auto& f : fakes) acc += detail::mean_sq_dist_to(f, 1.0);
    return acc / double(fakes.size());
  };
  auto disc_term = [](const std::vector<Tensor<T>>& reals,
                      const std::vector<Tensor<T>>& fakes) {
    double acc = 0.0;
    for (std::size_t i = 0; i < reals.size(); ++i) {
      acc += detail::mean_sq_dist_to(reals[i], 1.0) +
             detail::mean_sq_dist_to(fakes[i], 0.0);
    }
    return acc / double(reals.size());
  };

  AdversarialLosses out;
  out.generator_loss =
      alpha * gen_term(fake_for_g.theta) + (1.0 - alpha) * gen_term(fake_for_g.psi);
  out.discriminator_loss =
      alpha * disc_term(real.theta, fake_for_d.theta) +
      (1.0 - alpha) * disc_term(real.psi, fake_for_d.psi);
  return out;
}

// Mean absolute difference of STFT magnitudes over all time-frequency bins.
template <typename T>
double magnitude_loss(const Waveform<T>& x, const Waveform<T>& y,
                      const LossStft& grid = {}) {
  if (x.size() != y.size()) {
    throw ArgumentError("magnitude loss: lengths differ (" +
                        std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + "); trim before calling");
  }
  const auto sx = stft(x, grid.n_fft, grid.hop);
  const auto sy = stft(y, grid.n_fft, grid.hop);
  double acc = 0.0;
  for (std::size_t i = 0; i < sx.magnitude.size(); ++i) {
    acc += std::abs(double(sx.magnitude.data[i]) - double(sy.magnitude.data[i]));
  }
  return acc / double(sx.magnitude.size());
}

// Cosine distance between normalized complex spectra: mean(1 - cos(px - py))
// over bins where both magnitudes clear the gate.
template <typename T>
double phase_loss(const Waveform<T>& x, const Waveform<T>& y,
                  const LossStft& grid = {}) {
  if (x.size() != y.size()) {
    throw ArgumentError("phase loss: lengths differ (" +
                        std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + "); trim before calling");
  }
  const auto sx = stft(x, grid.n_fft, grid.hop);
  const auto sy = stft(y, grid.n_fft, grid.hop);
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < sx.magnitude.size(); ++i) {
    if (double(sx.magnitude.data[i]) < kPhaseMagnitudeGate ||
        double(sy.magnitude.data[i]) < kPhaseMagnitudeGate) {
      continue;
    }
    acc += 1.0 - std::cos(double(sx.phase.data[i]) - double(sy.phase.data[i]));
    ++used;
  }
  if (used == 0) {
    throw ArgumentError("phase loss: every bin below the magnitude gate; "
                        "inputs are degenerate (near-silent)");
  }
  return acc / double(used);
}

// Sum over layers of (1/N_i)*l1(real_i - fake_i), averaged over the ensemble.
template <typename T>
double feature_matching_loss(const std::vector<DiscriminatorOutput<T>>& real,
                             const std::vector<DiscriminatorOutput<T>>& fake) {
  if (real.empty() || real.size() != fake.size()) {
    throw ArgumentError("feature matching: ensembles must be non-empty and "
                        "equal size");
  }
  double acc = 0.0;
  for (std::size_t m = 0; m < real.size(); ++m) {
    if (real[m].features.size() != fake[m].features.size()) {
      throw ArgumentError("feature matching: member " + std::to_string(m) +
                          " layer counts differ");
    }
    for (std::size_t i = 0; i < real[m].features.size(); ++i) {
      const auto& a = real[m].features[i];
      const auto& b = fake[m].features[i];
      if (a.shape != b.shape) {
        throw ArgumentError("feature matching: member " + std::to_string(m) +
                            " layer " + std::to_string(i) + " shapes " +
                            shape_str(a.shape) + " vs " + shape_str(b.shape));
      }
      double l1 = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        l1 += std::abs(double(a.data[j]) - double(b.data[j]));
      }
      acc += l1 / double(a.size());
    }
  }
  return acc / double(real.size());
}

struct LossWeights {
  double alpha = 0.5;
  double lambda_sd = 0.7;
  double lambda_fm = 1.0;
  double lambda_recon = 45.0;
  double lambda_kl = 1.0;
  double lambda_dur = 1.0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ConfigError("loss weights: alpha must be in [0, 1]");
    }
    for (double l : {lambda_sd, lambda_fm, lambda_recon, lambda_kl, lambda_dur}) {
      if (!(l >= 0.0)) throw ConfigError("loss weights: lambdas must be >= 0");
    }
  }
};

// Components computed outside this engine and supplied as scalars.
struct ExternalLosses {
  double recon = 0.0;
  double kl = 0.0;
  double dur = 0.0;
};

struct TotalLossBreakdown {
  double total = 0.0;
  double adv = 0.0;
  double weighted_sd = 0.0;
  double weighted_fm = 0.0;
  double weighted_recon = 0.0;
  double weighted_kl = 0.0;
  double weighted_dur = 0.0;
};

inline TotalLossBreakdown total_loss(double adv, double sd, double fm,
                                     const ExternalLosses& external,
                                     const LossWeights& weights = {}) {
  weights.validate();
  for (double v : {adv, sd, fm, external.recon, external.kl, external.dur}) {
    if (v < 0.0) {
      throw ArgumentError("total loss: components must be nonnegative");
    }
  }
  TotalLossBreakdown b;
  b.adv = adv;
  b.weighted_sd = weights.lambda_sd * sd;
  b.weighted_fm = weights.lambda_fm * fm;
  b.weighted_recon = weights.lambda_recon * external.recon;
  b.weighted_kl = weights.lambda_kl * external.kl;
  b.weighted_dur = weights.lambda_dur * external.dur;
  b.total = b.adv + b.weighted_sd + b.weighted_fm + b.weighted_recon +
            b.weighted_kl + b.weighted_dur;
  return b;
}

struct LossReport {
  double l_g = 0.0;
  double l_d = 0.0;
  double l_mag = 0.0;
  double l_phase = 0.0;
  double l_sd = 0.0;
  double l_fm = 0.0;
  double l_total = 0.0;
  LossWeights weights;
};

// Full report for a (real, fake) waveform pair. Both discriminator families
// are seeded MPD stacks; the second stands in for the CQT family so the
// alpha/(1-alpha) weighting is exercised end to end.
template <typename T>
LossReport evaluate_losses(const Waveform<T>& real, const Waveform<T>& fake,
                           std::uint64_t seed,
                           const ExternalLosses& external = {},
                           const LossWeights& weights = {}) {
  weights.validate();
  if (real.size() != fake.size()) {
    throw ArgumentError("losses: waveform lengths differ; trim before calling");
  }
  const MpdWeights<T> theta = build_mpd<T>(seed);
  const MpdWeights<T> psi = build_mpd<T>(seed + 1);

  FamilyScores<T> real_scores, fake_scores;
  std::vector<DiscriminatorOutput<T>> real_feats, fake_feats;
  for (const auto& family : {&theta, &psi}) {
    for (std::size_t p : family->config.periods) {
      DiscriminatorOutput<T> r = mpd_forward(real, p, *family);
      DiscriminatorOutput<T> f = mpd_forward(fake, p, *family);
      auto& real_list = (family == &theta) ? real_scores.theta : real_scores.psi;
      auto& fake_list = (family == &theta) ? fake_scores.theta : fake_scores.psi;
      real_list.push_back(r.score_map);
      fake_list.push_back(f.score_map);
      real_feats.push_back(std::move(r));
      fake_feats.push_back(std::move(f));
    }
  }

  LossReport report;
  report.weights = weights;
  const AdversarialLosses adv =
      adversarial_losses(real_scores, fake_scores, fake_scores, weights.alpha);
  report.l_g = adv.generator_loss;
  report.l_d = adv.discriminator_loss;
  report.l_mag = magnitude_loss(real, fake);
  report.l_phase = phase_loss(real, fake);
  report.l_sd = report.l_mag + report.l_phase;
  report.l_fm = feature_matching_loss(real_feats, fake_feats);
  report.l_total = total_loss(report.l_g, report.l_sd, report.l_fm, external,
                              weights)
                       .total;
  return report;
}

}  // namespace ringformer
