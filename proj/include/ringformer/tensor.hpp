#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "ringformer/common.hpp"
#include "ringformer/fastmath.hpp"

namespace ringformer {

// Dense row-major real tensor, rank 1..3. The single numeric carrier for
// every module: waveforms are [L], matrices [rows x cols], conv kernels
// [out x in x k].
template <typename T = float>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    validate_shape();
    data.assign(element_count(shape), T{});
  }

  Tensor(std::vector<std::size_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    validate_shape();
    if (element_count(shape) != data.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " declares " +
                           std::to_string(element_count(shape)) +
                           " elements but payload holds " +
                           std::to_string(data.size()));
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return s.empty() ? 0 : n;
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  std::size_t extent(std::size_t axis) const {
    if (axis >= shape.size()) {
      throw DimensionError("tensor: axis " + std::to_string(axis) +
                           " out of range for shape " + shape_str(shape));
    }
    return shape[axis];
  }

  T& at(std::size_t i) { return data[i]; }
  T at(std::size_t i) const { return data[i]; }
  T& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  T at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  T at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  // Pointer to row i of a rank-2 tensor.
  T* row(std::size_t i) { return data.data() + i * shape[1]; }
  const T* row(std::size_t i) const { return data.data() + i * shape[1]; }

 private:
  void validate_shape() const {
    if (shape.empty() || shape.size() > 3) {
      throw DimensionError("tensor: rank must be 1..3, got shape " +
                           shape_str(shape));
    }
    for (std::size_t e : shape) {
      if (e == 0) {
        throw DimensionError("tensor: extents must be positive, got shape " +
                             shape_str(shape));
      }
    }
  }
};

namespace detail {

// Exponent-field test instead of std::isfinite so the scan vectorizes.
inline bool finite_span(const float* p, std::size_t n) {
  std::uint32_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(p[i]);
    bad |= std::uint32_t((bits & 0x7f800000u) == 0x7f800000u);
  }
  return bad == 0;
}

inline bool finite_span(const double* p, std::size_t n) {
  std::uint64_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(p[i]);
    bad |= std::uint64_t((bits & 0x7ff0000000000000ull) ==
                         0x7ff0000000000000ull);
  }
  return bad == 0;
}

}  // namespace detail

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return detail::finite_span(t.data.data(), t.data.size());
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  if (!all_finite(t)) {
    throw NumericError(std::string(op) + ": non-finite value in result");
  }
}

namespace detail {

// C (+)= A * B without allocation or checks; shared inner kernel for the
// public matmul and the attention score/value accumulations. Row-streaming
// with a 2x2 (row, depth) block so B rows are reused and the inner loop
// stays contiguous and vectorizable.
template <typename T>
void matmul_into(T* __restrict c, const T* __restrict a, const T* __restrict b,
                 std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{});
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    const T* __restrict a0 = a + i * k;
    const T* __restrict a1 = a0 + k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const T a00 = a0[p], a01 = a0[p + 1], a02 = a0[p + 2], a03 = a0[p + 3];
      const T a10 = a1[p], a11 = a1[p + 1], a12 = a1[p + 2], a13 = a1[p + 3];
      const T* __restrict b0 = b + p * n;
      const T* __restrict b1 = b0 + n;
      const T* __restrict b2 = b1 + n;
      const T* __restrict b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        c0[j] += (a00 * b0[j] + a01 * b1[j]) + (a02 * b2[j] + a03 * b3[j]);
        c1[j] += (a10 * b0[j] + a11 * b1[j]) + (a12 * b2[j] + a13 * b3[j]);
      }
    }
    for (; p < k; ++p) {
      const T a0v = a0[p], a1v = a1[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        c0[j] += a0v * brow[j];
        c1[j] += a1v * brow[j];
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* __restrict arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T apv = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
  if (testhook::corrupt_matmul.load(std::memory_order_relaxed) && m * n > 0) {
    c[0] += T(1e-3);
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) +
                         " and " + shape_str(b.shape));
  }
  Tensor<T> c({a.shape[0], b.shape[1]});
  detail::matmul_into(c.data.data(), a.data.data(), b.data.data(), a.shape[0],
                      a.shape[1], b.shape[1], false);
  require_finite(c, "matmul");
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose: rank-2 tensor required, got " +
                         shape_str(a.shape));
  }
  Tensor<T> t({a.shape[1], a.shape[0]});
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    for (std::size_t j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
  }
  return t;
}

// Row-wise softmax with max-subtraction, stable for logits of any magnitude.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) {
    throw DimensionError("softmax_rows: rank-2 tensor required, got " +
                         shape_str(x.shape));
  }
  Tensor<T> y = x;
  const std::size_t n = x.shape[1];
  for (std::size_t i = 0; i < x.shape[0]; ++i) {
    T* row = y.row(i);
    T m = row[0];
    for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
    T sum = T{};
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = fast_exp(row[j] - m);
      sum += row[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
  require_finite(y, "softmax_rows");
  return y;
}

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

inline std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                        const Conv1dOptions& opt) {
  const std::size_t span = opt.dilation * (kernel - 1) + 1;
  if (length + 2 * opt.padding < span) {
    throw DimensionError("conv1d: input length " + std::to_string(length) +
                         " with padding " + std::to_string(opt.padding) +
                         " shorter than kernel span " + std::to_string(span));
  }
  return (length + 2 * opt.padding - span) / opt.stride + 1;
}

// Cross-correlation (no kernel flip). x: [C_in x L], w: [C_out x C_in/g x K].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w,
                 const Conv1dOptions& opt = {},
                 const Tensor<T>* bias = nullptr) {
  if (x.rank() != 2 || w.rank() != 3) {
    throw DimensionError("conv1d: expected input [C_in x L] and kernel "
                         "[C_out x C_in/groups x K], got " +
                         shape_str(x.shape) + " and " + shape_str(w.shape));
  }
  const std::size_t c_in = x.shape[0];
  const std::size_t length = x.shape[1];
  const std::size_t c_out = w.shape[0];
  const std::size_t kernel = w.shape[2];
  if (opt.groups == 0 || c_in % opt.groups != 0 || c_out % opt.groups != 0) {
    throw ConfigError("conv1d: channels (" + std::to_string(c_in) + " in, " +
                      std::to_string(c_out) + " out) not divisible by groups " +
                      std::to_string(opt.groups));
  }
  if (w.shape[1] != c_in / opt.groups) {
    throw DimensionError("conv1d: kernel " + shape_str(w.shape) +
                         " inconsistent with " + std::to_string(c_in) +
                         " input channels over " + std::to_string(opt.groups) +
                         " groups");
  }
  if (bias && bias->size() != c_out) {
    throw DimensionError("conv1d: bias length " + std::to_string(bias->size()) +
                         " != output channels " + std::to_string(c_out));
  }
  if (opt.stride == 0 || opt.dilation == 0) {
    throw ConfigError("conv1d: stride and dilation must be >= 1");
  }
  const std::size_t l_out = conv1d_output_length(length, kernel, opt);
  const std::size_t group_in = c_in / opt.groups;
  const std::size_t group_out = c_out / opt.groups;

  Tensor<T> y({c_out, l_out});
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    const std::size_t g = oc / group_out;
    T* yrow = y.row(oc);
    const T b = bias ? bias->data[oc] : T{};
    for (std::size_t t = 0; t < l_out; ++t) yrow[t] = b;
    for (std::size_t ic = 0; ic < group_in; ++ic) {
      const T* xrow = x.row(g * group_in + ic);
      const T* wrow = &w.data[(oc * group_in + ic) * kernel];
      for (std::size_t t = 0; t < l_out; ++t) {
        const std::ptrdiff_t base =
            std::ptrdiff_t(t * opt.stride) - std::ptrdiff_t(opt.padding);
        T acc = T{};
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t pos = base + std::ptrdiff_t(k * opt.dilation);
          if (pos >= 0 && pos < std::ptrdiff_t(length)) {
            acc += xrow[pos] * wrow[k];
          }
        }
        yrow[t] += acc;
      }
    }
  }
  require_finite(y, "conv1d");
  return y;
}

// Transposed convolution (fractionally strided). x: [C_in x L],
// w: [C_in x C_out x K]. L_out = (L-1)*stride - 2*padding + K.
template <typename T>
Tensor<T> conv_transpose1d(const Tensor<T>& x, const Tensor<T>& w,
                           std::size_t stride, std::size_t padding,
                           const Tensor<T>* bias = nullptr) {
  if (x.rank() != 2 || w.rank() != 3 || x.shape[0] != w.shape[0]) {
    throw DimensionError("conv_transpose1d: expected input [C_in x L] and "
                         "kernel [C_in x C_out x K], got " +
                         shape_str(x.shape) + " and " + shape_str(w.shape));
  }
  if (stride == 0) throw ConfigError("conv_transpose1d: stride must be >= 1");
  const std::size_t c_in = x.shape[0];
  const std::size_t length = x.shape[1];
  const std::size_t c_out = w.shape[1];
  const std::size_t kernel = w.shape[2];
  const std::ptrdiff_t l_out_signed =
      std::ptrdiff_t((length - 1) * stride + kernel) -
      2 * std::ptrdiff_t(padding);
  if (l_out_signed <= 0) {
    throw ConfigError("conv_transpose1d: computed output length " +
                      std::to_string(l_out_signed) + " not positive (L=" +
                      std::to_string(length) + ", stride=" +
                      std::to_string(stride) + ", padding=" +
                      std::to_string(padding) + ", K=" +
                      std::to_string(kernel) + ")");
  }
  const std::size_t l_out = std::size_t(l_out_signed);
  if (bias && bias->size() != c_out) {
    throw DimensionError("conv_transpose1d: bias length " +
                         std::to_string(bias->size()) +
                         " != output channels " + std::to_string(c_out));
  }

  Tensor<T> y({c_out, l_out});
  if (bias) {
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      T* yrow = y.row(oc);
      std::fill(yrow, yrow + l_out, bias->data[oc]);
    }
  }
  for (std::size_t ic = 0; ic < c_in; ++ic) {
    const T* xrow = x.row(ic);
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      const T* wrow = &w.data[(ic * c_out + oc) * kernel];
      T* yrow = y.row(oc);
      for (std::size_t t = 0; t < length; ++t) {
        const T xv = xrow[t];
        const std::ptrdiff_t base =
            std::ptrdiff_t(t * stride) - std::ptrdiff_t(padding);
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t pos = base + std::ptrdiff_t(k);
          if (pos >= 0 && pos < std::ptrdiff_t(l_out)) {
            yrow[pos] += xv * wrow[k];
          }
        }
      }
    }
  }
  require_finite(y, "conv_transpose1d");
  return y;
}

// Periodicity-inducing activation x + (1/a)*sin^2(a*x), one alpha per channel.
template <typename T>
Tensor<T> snake(const Tensor<T>& x, const Tensor<T>& alpha) {
  if (x.rank() != 2 || alpha.rank() != 1 || alpha.size() != x.shape[0]) {
    throw DimensionError("snake: expected x [C x L] and alpha [C], got " +
                         shape_str(x.shape) + " and " + shape_str(alpha.shape));
  }
  for (T a : alpha.data) {
    if (!(a > T{})) {
      throw ConfigError("snake: alpha must be positive");
    }
  }
  Tensor<T> y = x;
  for (std::size_t c = 0; c < x.shape[0]; ++c) {
    const T a = alpha.data[c];
    const T inv_a = T(1) / a;
    T* row = y.row(c);
    for (std::size_t t = 0; t < x.shape[1]; ++t) {
      const T s = std::sin(a * row[t]);
      row[t] += inv_a * s * s;
    }
  }
  require_finite(y, "snake");
  return y;
}

// Normalization over the last axis; x is [d] or [T x d].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps = T(1e-5)) {
  if (x.rank() > 2) {
    throw DimensionError("layer_norm: rank-1 or rank-2 input required, got " +
                         shape_str(x.shape));
  }
  const std::size_t d = x.shape.back();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain/bias length must be " +
                         std::to_string(d) + ", got " +
                         std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()));
  }
  Tensor<T> y = x;
  const std::size_t rows = x.rank() == 2 ? x.shape[0] : 1;
  for (std::size_t i = 0; i < rows; ++i) {
    T* row = y.data.data() + i * d;
    T mean = T{};
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T{};
    for (std::size_t j = 0; j < d; ++j) {
      const T c = row[j] - mean;
      var += c * c;
    }
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = (row[j] - mean) * inv * gain.data[j] + bias.data[j];
    }
  }
  require_finite(y, "layer_norm");
  return y;
}

// y = x * W^T + b with W stored [out x in]; the plumbing behind every
// projection in the conformer and generator.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w,
                 const Tensor<T>* bias = nullptr) {
  if (x.rank() != 2 || w.rank() != 2 || x.shape[1] != w.shape[1]) {
    throw DimensionError("linear: incompatible shapes " + shape_str(x.shape) +
                         " and weight " + shape_str(w.shape));
  }
  const std::size_t rows = x.shape[0];
  const std::size_t in = x.shape[1];
  const std::size_t out = w.shape[0];
  if (bias && bias->size() != out) {
    throw DimensionError("linear: bias length " + std::to_string(bias->size()) +
                         " != output width " + std::to_string(out));
  }
  Tensor<T> y({rows, out});
  for (std::size_t i = 0; i < rows; ++i) {
    const T* __restrict xrow = x.row(i);
    T* __restrict yrow = y.row(i);
    if (bias) {
      std::copy(bias->data.begin(), bias->data.end(), yrow);
    }
    const T* __restrict wp = w.data.data();
    for (std::size_t o = 0; o < out; ++o) {
      const T* __restrict wrow = wp + o * in;
      T acc = T{};
      for (std::size_t p = 0; p < in; ++p) acc += xrow[p] * wrow[p];
      yrow[o] += acc;
    }
  }
  require_finite(y, "linear");
  return y;
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Tensor<T> swish(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.data) v *= sigmoid(v);
  require_finite(y, "swish");
  return y;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y = x;
  for (T& v : y.data) {
    if (v < T{}) v *= slope;
  }
  require_finite(y, "leaky_relu");
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
  Tensor<T> y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
  require_finite(y, "add");
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> y = a;
  for (T& v : y.data) v *= factor;
  require_finite(y, "scale");
  return y;
}

namespace init {

// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) fill; the draw order is
// fixed by construction order so a seed pins the weights bitwise.
template <typename T>
Tensor<T> uniform_fan_in(std::mt19937_64& rng, std::vector<std::size_t> shape,
                         std::size_t fan_in) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : t.data) v = T(dist(rng));
  return t;
}

}  // namespace init

}  // namespace ringformer
