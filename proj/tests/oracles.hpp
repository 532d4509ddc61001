#pragma once

// Independent brute-force references the library is checked against. These
// stay deliberately naive: direct loops straight from the definitions, no
// shared code with the implementation paths they verify.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "ringformer/tensor.hpp"

namespace oracle {

using ringformer::Tensor;

template <typename T>
Tensor<T> random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape,
                        double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (T& v : t.data) v = T(dist(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
  }
  return m;
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& ref) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(1.0, std::abs(double(ref.data[i])));
    m = std::max(m, std::abs(double(a.data[i]) - double(ref.data[i])) / denom);
  }
  return m;
}

// Triple-loop textbook matmul.
template <typename T>
Tensor<T> matmul_ref(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> c({a.shape[0], b.shape[1]});
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    for (std::size_t j = 0; j < b.shape[1]; ++j) {
      T acc{};
      for (std::size_t p = 0; p < a.shape[1]; ++p) {
        acc += a.at(i, p) * b.at(p, j);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

// Direct per-output-position summation for grouped dilated conv1d.
template <typename T>
Tensor<T> conv1d_ref(const Tensor<T>& x, const Tensor<T>& w,
                     std::size_t stride, std::size_t padding,
                     std::size_t dilation, std::size_t groups) {
  const std::size_t c_in = x.shape[0];
  const std::size_t length = x.shape[1];
  const std::size_t c_out = w.shape[0];
  const std::size_t kernel = w.shape[2];
  const std::size_t group_in = c_in / groups;
  const std::size_t group_out = c_out / groups;
  const std::size_t l_out =
      (length + 2 * padding - (dilation * (kernel - 1) + 1)) / stride + 1;
  Tensor<T> y({c_out, l_out});
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    const std::size_t g = oc / group_out;
    for (std::size_t t = 0; t < l_out; ++t) {
      T acc{};
      for (std::size_t ic = 0; ic < group_in; ++ic) {
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t pos = std::ptrdiff_t(t * stride + k * dilation) -
                                     std::ptrdiff_t(padding);
          if (pos >= 0 && pos < std::ptrdiff_t(length)) {
            acc += x.at(g * group_in + ic, std::size_t(pos)) * w.at(oc, ic, k);
          }
        }
      }
      y.at(oc, t) = acc;
    }
  }
  return y;
}

// Gather form of the transposed conv: for every output position, collect the
// (input, tap) pairs that scatter onto it.
template <typename T>
Tensor<T> conv_transpose1d_ref(const Tensor<T>& x, const Tensor<T>& w,
                               std::size_t stride, std::size_t padding) {
  const std::size_t c_in = x.shape[0];
  const std::size_t length = x.shape[1];
  const std::size_t c_out = w.shape[1];
  const std::size_t kernel = w.shape[2];
  const std::size_t l_out = (length - 1) * stride + kernel - 2 * padding;
  Tensor<T> y({c_out, l_out});
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    for (std::size_t t_out = 0; t_out < l_out; ++t_out) {
      T acc{};
      for (std::size_t t_in = 0; t_in < length; ++t_in) {
        for (std::size_t k = 0; k < kernel; ++k) {
          if (t_in * stride + k == t_out + padding) {
            for (std::size_t ic = 0; ic < c_in; ++ic) {
              acc += x.at(ic, t_in) * w.at(ic, oc, k);
            }
          }
        }
      }
      y.at(oc, t_out) = acc;
    }
  }
  return y;
}

// O(n^2) DFT straight from the definition.
template <typename T>
std::vector<std::complex<double>> dft_ref(const std::vector<T>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * double(k) * double(i) /
                         double(n);
      acc += double(x[i]) * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<double> idft_real_ref(
    const std::vector<std::complex<double>>& spectrum) {
  const std::size_t n = spectrum.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const double ang =
          2.0 * std::numbers::pi * double(k) * double(i) / double(n);
      acc += spectrum[k] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[i] = acc.real() / double(n);
  }
  return out;
}

inline double snr_db(const std::vector<double>& reference,
                     const std::vector<double>& reconstructed) {
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    signal += reference[i] * reference[i];
    const double d = reference[i] - reconstructed[i];
    noise += d * d;
  }
  if (noise == 0.0) return 300.0;
  return 10.0 * std::log10(signal / noise);
}

}  // namespace oracle
