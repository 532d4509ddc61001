#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "ringformer/dsp.hpp"
#include "ringformer/tensor.hpp"

namespace ringformer {

inline constexpr std::size_t kMcdCoefficients = 13;  // c1..c13, c0 excluded

// Orthonormal DCT-II of each mel column; rows are frames, columns c1..c13.
template <typename T>
Tensor<double> mel_cepstra(const Waveform<T>& x, const MelConfig& cfg = {}) {
  const MelSpectrogram<T> mel = mel_spectrogram(x, cfg);
  const std::size_t n = cfg.n_mels;
  const std::size_t frames = mel.frames();
  Tensor<double> cep({frames, kMcdCoefficients});
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 1; k <= kMcdCoefficients; ++k) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n; ++m) {
        acc += double(mel.values.at(m, f)) *
               std::cos(std::numbers::pi * double(k) * (double(m) + 0.5) /
                        double(n));
      }
      cep.at(f, k - 1) = acc * std::sqrt(2.0 / double(n));
    }
  }
  return cep;
}

// Frame-wise (10/ln10)*sqrt(2*sum_d (c_d - c'_d)^2), averaged over frames.
inline double mcd_from_cepstra(const Tensor<double>& a,
                               const Tensor<double>& b) {
  if (a.shape != b.shape) {
    throw ArgumentError("mcd: cepstra shapes differ " + shape_str(a.shape) +
                        " vs " + shape_str(b.shape));
  }
  const double scale = 10.0 / std::log(10.0);
  double acc = 0.0;
  const std::size_t frames = a.shape[0];
  for (std::size_t f = 0; f < frames; ++f) {
    double sq = 0.0;
    for (std::size_t d = 0; d < a.shape[1]; ++d) {
      const double diff = a.at(f, d) - b.at(f, d);
      sq += diff * diff;
    }
    acc += scale * std::sqrt(2.0 * sq);
  }
  return acc / double(frames);
}

// Mel-cepstral distortion in dB over aligned equal-length waveforms (no DTW).
template <typename T>
double mcd(const Waveform<T>& x, const Waveform<T>& y,
           const MelConfig& cfg = {}) {
  if (x.size() != y.size()) {
    throw ArgumentError("mcd: waveform lengths differ (" +
                        std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()) + ")");
  }
  return mcd_from_cepstra(mel_cepstra(x, cfg), mel_cepstra(y, cfg));
}

struct F0Options {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double f_min = 50.0;
  double f_max = 500.0;
  double voicing_threshold = 0.3;
  double rms_gate = 1e-4;
};

struct F0Contour {
  std::vector<double> f0_hz;  // 0 marks an unvoiced frame
  std::size_t hop_samples = 0;
  std::size_t frame_samples = 0;

  std::size_t frames() const { return f0_hz.size(); }
  bool voiced(std::size_t i) const { return f0_hz[i] > 0.0; }
};

// Normalized autocorrelation pitch tracker over the 50-500 Hz band with
// parabolic peak interpolation. To dodge octave errors the smallest lag
// within 1% of the best correlation wins.
template <typename T>
F0Contour f0_contour(const Waveform<T>& x, const F0Options& opt = {}) {
  const double sr = double(x.sample_rate);
  F0Contour contour;
  contour.frame_samples = std::size_t(sr * opt.frame_ms / 1000.0);
  contour.hop_samples = std::size_t(sr * opt.hop_ms / 1000.0);
  const std::size_t frame = contour.frame_samples;
  const std::size_t hop = contour.hop_samples;
  if (frame < 8 || hop == 0) {
    throw ConfigError("f0: frame/hop too small at sample rate " +
                      std::to_string(x.sample_rate));
  }
  if (x.size() < frame) return contour;

  std::size_t lag_min = std::size_t(std::floor(sr / opt.f_max));
  std::size_t lag_max = std::size_t(std::ceil(sr / opt.f_min));
  lag_min = std::max<std::size_t>(lag_min, 2);
  lag_max = std::min(lag_max, frame - 2);

  const std::size_t num_frames = (x.size() - frame) / hop + 1;
  std::vector<double> r(lag_max + 2, 0.0);
  for (std::size_t fi = 0; fi < num_frames; ++fi) {
    const T* s = x.samples.data.data() + fi * hop;

    double energy = 0.0;
    for (std::size_t n = 0; n < frame; ++n) energy += double(s[n]) * double(s[n]);
    const double rms = std::sqrt(energy / double(frame));
    if (rms < opt.rms_gate) {
      contour.f0_hz.push_back(0.0);
      continue;
    }

    double best = -2.0;
    std::size_t best_lag = lag_min;
    for (std::size_t lag = lag_min - 1; lag <= lag_max + 1 && lag < frame;
         ++lag) {
      double cross = 0.0, e0 = 0.0, e1 = 0.0;
      const std::size_t n_max = frame - lag;
      for (std::size_t n = 0; n < n_max; ++n) {
        cross += double(s[n]) * double(s[n + lag]);
        e0 += double(s[n]) * double(s[n]);
        e1 += double(s[n + lag]) * double(s[n + lag]);
      }
      r[lag] = (e0 > 0.0 && e1 > 0.0) ? cross / std::sqrt(e0 * e1) : 0.0;
      if (lag >= lag_min && lag <= lag_max && r[lag] > best) {
        best = r[lag];
        best_lag = lag;
      }
    }
    if (best < opt.voicing_threshold) {
      contour.f0_hz.push_back(0.0);
      continue;
    }

    // earliest local maximum competitive with the global peak; picking the
    // smallest such lag suppresses octave-down errors
    std::size_t pick = best_lag;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] &&
          r[lag] >= 0.9 * best) {
        pick = lag;
        break;
      }
    }
    double lag_star = double(pick);
    const double denom = r[pick - 1] - 2.0 * r[pick] + r[pick + 1];
    if (std::abs(denom) > 1e-12) {
      double delta = 0.5 * (r[pick - 1] - r[pick + 1]) / denom;
      delta = std::clamp(delta, -0.5, 0.5);
      lag_star += delta;
    }
    const double f0 = std::clamp(sr / lag_star, opt.f_min, opt.f_max);
    contour.f0_hz.push_back(f0);
  }
  return contour;
}

// Standard sample correlation; throws on fewer than two points or a
// zero-variance argument.
inline double pearson(const std::vector<double>& a,
                      const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ArgumentError("pearson: sequence lengths differ");
  }
  const std::size_t n = a.size();
  if (n < 2) {
    throw ArgumentError("pearson: need at least 2 points, got " +
                        std::to_string(n));
  }
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) {
    throw ArgumentError("pearson: zero variance input (degenerate)");
  }
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

// Correlation over jointly voiced frames of two contours.
inline double pearson(const F0Contour& a, const F0Contour& b) {
  std::vector<double> va, vb;
  const std::size_t n = std::min(a.frames(), b.frames());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.voiced(i) && b.voiced(i)) {
      va.push_back(a.f0_hz[i]);
      vb.push_back(b.f0_hz[i]);
    }
  }
  return pearson(va, vb);
}

struct MetricsReport {
  double mcd_db = 0.0;
  double f0_pearson = 0.0;
  std::size_t voiced_frames = 0;
  std::size_t total_frames = 0;
};

// MCD plus F0 correlation for a reference/hypothesis pair. Identical voiced
// contours with no variance count as perfectly correlated.
template <typename T>
MetricsReport compute_metrics(const Waveform<T>& ref, const Waveform<T>& hyp) {
  MetricsReport report;
  report.mcd_db = mcd(ref, hyp);
  const F0Contour cr = f0_contour(ref);
  const F0Contour ch = f0_contour(hyp);
  report.total_frames = std::min(cr.frames(), ch.frames());
  std::vector<double> a, b;
  for (std::size_t i = 0; i < report.total_frames; ++i) {
    if (cr.voiced(i) && ch.voiced(i)) {
      a.push_back(cr.f0_hz[i]);
      b.push_back(ch.f0_hz[i]);
    }
  }
  report.voiced_frames = a.size();
  try {
    report.f0_pearson = pearson(a, b);
  } catch (const ArgumentError&) {
    if (!a.empty() && a == b) {
      report.f0_pearson = 1.0;
    } else {
      throw;
    }
  }
  return report;
}

}  // namespace ringformer
