#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "ringformer/tensor.hpp"

namespace ringformer {

enum class WindowKind { hann };

template <typename T = float>
struct Waveform {
  Tensor<T> samples;  // [L]
  std::size_t sample_rate = 22050;

  Waveform() = default;
  Waveform(Tensor<T> s, std::size_t sr) : samples(std::move(s)), sample_rate(sr) {
    if (samples.rank() != 1) {
      throw DimensionError("waveform: samples must be rank-1, got " +
                           shape_str(samples.shape));
    }
  }
  std::size_t size() const { return samples.size(); }
};

// One-sided STFT coefficients in polar form, [bins x frames].
template <typename T = float>
struct ComplexSpectrogram {
  Tensor<T> magnitude;
  Tensor<T> phase;
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  std::size_t sample_rate = 22050;
  WindowKind window = WindowKind::hann;

  std::size_t bins() const { return magnitude.shape[0]; }
  std::size_t frames() const { return magnitude.shape[1]; }

  void validate() const {
    if (magnitude.rank() != 2 || phase.rank() != 2 ||
        magnitude.shape != phase.shape) {
      throw DimensionError("spectrogram: magnitude " + shape_str(magnitude.shape) +
                           " and phase " + shape_str(phase.shape) +
                           " must be equal rank-2 shapes");
    }
    if (magnitude.shape[0] != n_fft / 2 + 1) {
      throw DimensionError("spectrogram: " + std::to_string(magnitude.shape[0]) +
                           " bins inconsistent with n_fft " +
                           std::to_string(n_fft));
    }
    for (T m : magnitude.data) {
      if (m < T{}) throw NumericError("spectrogram: negative magnitude");
    }
  }
};

// Log-amplitude mel spectrogram, [n_mels x frames].
template <typename T = float>
struct MelSpectrogram {
  Tensor<T> values;
  std::size_t sample_rate = 22050;
  std::size_t hop = 256;
  std::size_t n_mels = 80;

  std::size_t frames() const { return values.shape[1]; }
};

struct MelConfig {
  std::size_t sample_rate = 22050;
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
};

inline constexpr double kMelFloor = 1e-5;

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

template <typename T>
std::vector<T> hann_window(std::size_t n) {
  std::vector<T> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = T(0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(i) / double(n))));
  }
  return w;
}

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 transform; length must be a power of two. Twiddles are
// evaluated in double regardless of T.
template <typename T>
void fft_inplace(std::vector<std::complex<T>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang =
        (inverse ? 2.0 : -2.0) * std::numbers::pi / double(len);
    const std::complex<double> step(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u(a[i + j]);
        const std::complex<double> v = std::complex<double>(a[i + j + len / 2]) * w;
        a[i + j] = std::complex<T>(u + v);
        a[i + j + len / 2] = std::complex<T>(u - v);
        w *= step;
      }
    }
  }
  if (inverse) {
    const T inv = T(1) / T(n);
    for (auto& z : a) z *= inv;
  }
}

inline std::size_t reflect_index(std::ptrdiff_t idx, std::size_t length) {
  if (length == 1) return 0;
  const std::ptrdiff_t period = 2 * std::ptrdiff_t(length) - 2;
  std::ptrdiff_t j = idx % period;
  if (j < 0) j += period;
  if (j >= std::ptrdiff_t(length)) j = period - j;
  return std::size_t(j);
}

// Steady-state squared-window overlap. Perfect reconstruction needs this to
// stay bounded away from zero at every offset.
template <typename T>
double min_window_overlap(const std::vector<T>& window, std::size_t hop) {
  const std::size_t n = window.size();
  double min_sum = -1.0;
  for (std::size_t offset = 0; offset < hop; ++offset) {
    double sum = 0.0;
    for (std::size_t pos = offset; pos < n; pos += hop) {
      sum += double(window[pos]) * double(window[pos]);
    }
    if (min_sum < 0.0 || sum < min_sum) min_sum = sum;
  }
  return min_sum;
}

}  // namespace detail

// Centered STFT with reflect padding of n_fft/2; frame count floor(L/hop)+1.
template <typename T>
ComplexSpectrogram<T> stft(const Waveform<T>& x, std::size_t n_fft,
                           std::size_t hop,
                           WindowKind window = WindowKind::hann) {
  if (!detail::is_power_of_two(n_fft)) {
    throw ConfigError("stft: n_fft must be a power of two, got " +
                      std::to_string(n_fft));
  }
  if (hop == 0 || hop > n_fft) {
    throw ConfigError("stft: hop " + std::to_string(hop) +
                      " must be in [1, n_fft=" + std::to_string(n_fft) + "]");
  }
  const std::size_t length = x.size();
  const std::size_t pad = n_fft / 2;
  const std::size_t frames = length / hop + 1;
  const std::size_t bins = n_fft / 2 + 1;
  const std::vector<T> win = hann_window<T>(n_fft);

  ComplexSpectrogram<T> out;
  out.magnitude = Tensor<T>({bins, frames});
  out.phase = Tensor<T>({bins, frames});
  out.n_fft = n_fft;
  out.hop = hop;
  out.sample_rate = x.sample_rate;
  out.window = window;

  std::vector<std::complex<T>> buf(n_fft);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::ptrdiff_t start = std::ptrdiff_t(f * hop) - std::ptrdiff_t(pad);
    for (std::size_t i = 0; i < n_fft; ++i) {
      const std::size_t src =
          detail::reflect_index(start + std::ptrdiff_t(i), length);
      buf[i] = std::complex<T>(x.samples.data[src] * win[i], T{});
    }
    detail::fft_inplace(buf, false);
    for (std::size_t k = 0; k < bins; ++k) {
      out.magnitude.at(k, f) = std::abs(buf[k]);
      out.phase.at(k, f) = std::atan2(buf[k].imag(), buf[k].real());
    }
  }
  require_finite(out.magnitude, "stft");
  require_finite(out.phase, "stft");
  return out;
}

// Overlap-add synthesis with squared-window normalization. Returns
// hop*(frames-1) samples, the center padding removed.
template <typename T>
Waveform<T> istft(const ComplexSpectrogram<T>& s) {
  s.validate();
  const std::size_t n_fft = s.n_fft;
  const std::size_t hop = s.hop;
  if (!detail::is_power_of_two(n_fft)) {
    throw ConfigError("istft: n_fft must be a power of two, got " +
                      std::to_string(n_fft));
  }
  if (hop == 0 || hop > n_fft) {
    throw ConfigError("istft: hop " + std::to_string(hop) +
                      " must be in [1, n_fft=" + std::to_string(n_fft) + "]");
  }
  const std::vector<T> win = hann_window<T>(n_fft);
  if (detail::min_window_overlap(win, hop) < 1e-6) {
    throw ConfigError("istft: window/hop (" + std::to_string(n_fft) + "/" +
                      std::to_string(hop) +
                      ") violate the constant-overlap-add condition");
  }

  const std::size_t frames = s.frames();
  const std::size_t bins = s.bins();
  const std::size_t padded_len = (frames - 1) * hop + n_fft;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> norm(padded_len, 0.0);

  std::vector<std::complex<T>> buf(n_fft);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) {
      const T m = s.magnitude.at(k, f);
      const T p = s.phase.at(k, f);
      buf[k] = std::polar(m, p);
    }
    for (std::size_t k = bins; k < n_fft; ++k) {
      buf[k] = std::conj(buf[n_fft - k]);
    }
    detail::fft_inplace(buf, true);
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < n_fft; ++i) {
      acc[start + i] += double(buf[i].real()) * double(win[i]);
      norm[start + i] += double(win[i]) * double(win[i]);
    }
  }

  const std::size_t pad = n_fft / 2;
  const std::size_t out_len = hop * (frames - 1);
  Tensor<T> samples({std::max<std::size_t>(out_len, 1)});
  if (out_len == 0) {
    samples.data[0] = T{};
  }
  for (std::size_t i = 0; i < out_len; ++i) {
    const double d = norm[pad + i];
    samples.data[i] = T(acc[pad + i] / (d > 1e-10 ? d : 1e-10));
  }
  Waveform<T> out(std::move(samples), s.sample_rate);
  require_finite(out.samples, "istft");
  return out;
}

// Triangular filters uniformly spaced on the HTK mel scale, [n_mels x bins].
template <typename T>
Tensor<T> mel_filterbank(std::size_t sample_rate, std::size_t n_fft,
                         std::size_t n_mels, double f_min, double f_max) {
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= double(sample_rate) / 2.0)) {
    throw ConfigError("mel_filterbank: need 0 <= f_min < f_max <= sr/2, got " +
                      std::to_string(f_min) + ".." + std::to_string(f_max) +
                      " at sr " + std::to_string(sample_rate));
  }
  if (n_mels == 0) throw ConfigError("mel_filterbank: n_mels must be >= 1");
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) /
                                      double(n_mels + 1));
  }

  Tensor<T> fb({n_mels, bins});
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * double(sample_rate) / double(n_fft);
      double wgt = 0.0;
      if (f > left && f < right) {
        wgt = (f <= center) ? (f - left) / (center - left)
                            : (right - f) / (right - center);
      }
      if (wgt > 0.0) any = true;
      fb.at(m, k) = T(wgt);
    }
    if (!any) {
      throw ConfigError("mel_filterbank: filter " + std::to_string(m) +
                        " has no nonzero weight (band too narrow for n_fft " +
                        std::to_string(n_fft) + ")");
    }
  }
  return fb;
}

// log(max(filterbank * |STFT|, 1e-5))
template <typename T>
MelSpectrogram<T> mel_spectrogram(const Waveform<T>& x,
                                  const MelConfig& cfg = {}) {
  if (x.sample_rate != cfg.sample_rate) {
    throw ConfigError("mel_spectrogram: waveform sample rate " +
                      std::to_string(x.sample_rate) +
                      " does not match configured rate " +
                      std::to_string(cfg.sample_rate));
  }
  const ComplexSpectrogram<T> s = stft(x, cfg.n_fft, cfg.hop);
  const Tensor<T> fb = mel_filterbank<T>(cfg.sample_rate, cfg.n_fft,
                                         cfg.n_mels, cfg.f_min, cfg.f_max);
  Tensor<T> power = matmul(fb, s.magnitude);
  for (T& v : power.data) {
    v = std::log(std::max(v, T(kMelFloor)));
  }
  MelSpectrogram<T> mel;
  mel.values = std::move(power);
  mel.sample_rate = cfg.sample_rate;
  mel.hop = cfg.hop;
  mel.n_mels = cfg.n_mels;
  require_finite(mel.values, "mel_spectrogram");
  return mel;
}

}  // namespace ringformer
