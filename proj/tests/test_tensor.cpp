#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "ringformer/tensor.hpp"

using namespace ringformer;

TEST_CASE("matmul identity and scalar cases") {
  Tensor<float> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
  std::mt19937_64 rng(1);
  const auto a = oracle::random_tensor<float>(rng, {3, 5});
  const auto prod = matmul(eye, a);
  CHECK(oracle::max_abs_diff(prod, a) == 0.0);

  const Tensor<float> two({1, 1}, {2.0f});
  const Tensor<float> three({1, 1}, {3.0f});
  CHECK(matmul(two, three).at(0, 0) == doctest::Approx(6.0f));
}

TEST_CASE("matmul matches the triple-loop reference") {
  std::mt19937_64 rng(2);
  const auto a = oracle::random_tensor<float>(rng, {7, 5});
  const auto b = oracle::random_tensor<float>(rng, {5, 4});
  CHECK(oracle::max_rel_diff(matmul(a, b), oracle::matmul_ref(a, b)) < 1e-6);
}

TEST_CASE("matmul matches the reference on randomized shapes") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 24);
  for (int i = 0; i < 100; ++i) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const auto a = oracle::random_tensor<double>(rng, {m, k});
    const auto b = oracle::random_tensor<double>(rng, {k, n});
    CHECK(oracle::max_rel_diff(matmul(a, b), oracle::matmul_ref(a, b)) < 1e-6);
  }
}

TEST_CASE("matmul reports both shapes on mismatch") {
  const Tensor<float> a({2, 3});
  const Tensor<float> b({4, 2});
  try {
    (void)matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
    CHECK(what.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("matmul surfaces non-finite results") {
  Tensor<float> a({1, 1}, {std::numeric_limits<float>::infinity()});
  Tensor<float> b({1, 1}, {0.0f});
  CHECK_THROWS_AS((void)matmul(a, b), NumericError);
}

TEST_CASE("softmax rows: uniformity, shift invariance, analytic case") {
  Tensor<float> equal({2, 4});
  for (float& v : equal.data) v = 0.7f;
  const auto uni = softmax_rows(equal);
  for (float v : uni.data) CHECK(v == doctest::Approx(0.25f).epsilon(1e-6));

  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor<float>(rng, {3, 6}, -2.0, 2.0);
  auto shifted = x;
  for (float& v : shifted.data) v += 11.5f;
  CHECK(oracle::max_abs_diff(softmax_rows(x), softmax_rows(shifted)) < 1e-6);

  const Tensor<float> pair({1, 2}, {0.0f, std::log(3.0f)});
  const auto p = softmax_rows(pair);
  CHECK(p.at(0, 0) == doctest::Approx(0.25f).epsilon(1e-6));
  CHECK(p.at(0, 1) == doctest::Approx(0.75f).epsilon(1e-6));
}

TEST_CASE("softmax rows sum to one for huge logits") {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor<float>(rng, {8, 16}, -1e4, 1e4);
  const auto y = softmax_rows(x);
  for (std::size_t i = 0; i < 8; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 16; ++j) sum += y.at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("conv1d identity kernel and analytic example") {
  const Tensor<float> x({1, 3}, {1.0f, 2.0f, 3.0f});
  const Tensor<float> unit({1, 1, 1}, {1.0f});
  CHECK(oracle::max_abs_diff(conv1d(x, unit), x) == 0.0);

  const Tensor<float> w({1, 1, 2}, {1.0f, 1.0f});
  const auto y = conv1d(x, w);
  REQUIRE(y.shape[1] == 2);
  CHECK(y.at(0, 0) == doctest::Approx(3.0f));
  CHECK(y.at(0, 1) == doctest::Approx(5.0f));
}

TEST_CASE("depthwise conv1d matches per-channel direct summation") {
  std::mt19937_64 rng(6);
  const std::size_t channels = 5;
  const auto x = oracle::random_tensor<float>(rng, {channels, 20});
  const auto w = oracle::random_tensor<float>(rng, {channels, 1, 3});
  Conv1dOptions opt;
  opt.padding = 1;
  opt.groups = channels;
  const auto y = conv1d(x, w, opt);
  const auto ref = oracle::conv1d_ref(x, w, 1, 1, 1, channels);
  CHECK(oracle::max_rel_diff(y, ref) < 1e-6);
}

TEST_CASE("conv1d matches the reference on randomized settings") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> small(1, 4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t groups = small(rng);
    const std::size_t c_in = groups * small(rng);
    const std::size_t c_out = groups * small(rng);
    const std::size_t kernel = small(rng);
    const std::size_t dilation = small(rng);
    const std::size_t stride = small(rng);
    const std::size_t pad = small(rng) - 1;
    const std::size_t span = dilation * (kernel - 1) + 1;
    std::uniform_int_distribution<std::size_t> len_dist(span, span + 20);
    const std::size_t length = len_dist(rng);
    const auto x = oracle::random_tensor<double>(rng, {c_in, length});
    const auto w =
        oracle::random_tensor<double>(rng, {c_out, c_in / groups, kernel});
    Conv1dOptions opt{stride, pad, dilation, groups};
    const auto y = conv1d(x, w, opt);
    const auto ref = oracle::conv1d_ref(x, w, stride, pad, dilation, groups);
    REQUIRE(y.shape == ref.shape);
    CHECK(oracle::max_rel_diff(y, ref) < 1e-6);
  }
}

TEST_CASE("conv1d rejects indivisible groups") {
  const Tensor<float> x({3, 8});
  const Tensor<float> w({2, 1, 3});
  Conv1dOptions opt;
  opt.groups = 2;
  CHECK_THROWS_AS((void)conv1d(x, w, opt), ConfigError);
}

TEST_CASE("conv_transpose1d length law and impulse response") {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_tensor<float>(rng, {2, 32});
  const auto w = oracle::random_tensor<float>(rng, {2, 3, 8});
  const auto y = conv_transpose1d(x, w, 4, 2);
  CHECK(y.shape[0] == 3);
  CHECK(y.shape[1] == 128);

  // one sample in, unit kernel out: the kernel is copied into the output
  const Tensor<float> impulse({1, 1}, {1.0f});
  const Tensor<float> kernel({1, 1, 5}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f});
  const auto copy = conv_transpose1d(impulse, kernel, 4, 0);
  REQUIRE(copy.shape[1] == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(copy.at(0, k) == doctest::Approx(kernel.at(0, 0, k)));
  }
}

TEST_CASE("conv_transpose1d matches the scatter-accumulate reference") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> small(1, 4);
  for (int i = 0; i < 100; ++i) {
    const std::size_t c_in = small(rng);
    const std::size_t c_out = small(rng);
    const std::size_t stride = small(rng);
    const std::size_t kernel = stride + 2 * (small(rng) - 1);
    const std::size_t pad = (kernel - stride) / 2;
    std::uniform_int_distribution<std::size_t> len_dist(1, 16);
    const std::size_t length = len_dist(rng);
    const auto x = oracle::random_tensor<double>(rng, {c_in, length});
    const auto w = oracle::random_tensor<double>(rng, {c_in, c_out, kernel});
    const auto y = conv_transpose1d(x, w, stride, pad);
    const auto ref = oracle::conv_transpose1d_ref(x, w, stride, pad);
    REQUIRE(y.shape == ref.shape);
    CHECK(oracle::max_rel_diff(y, ref) < 1e-6);
    CHECK(y.shape[1] == length * stride);
  }
}

TEST_CASE("conv_transpose1d rejects non-positive output lengths") {
  const Tensor<float> x({1, 1});
  const Tensor<float> w({1, 1, 2});
  CHECK_THROWS_AS((void)conv_transpose1d(x, w, 1, 4), ConfigError);
}

TEST_CASE("conv_transpose1d with k8 u4 p2 always quadruples the length") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> len_dist(1, 40);
  for (int i = 0; i < 20; ++i) {
    const std::size_t length = len_dist(rng);
    const auto x = oracle::random_tensor<float>(rng, {1, length});
    const auto w = oracle::random_tensor<float>(rng, {1, 1, 8});
    CHECK(conv_transpose1d(x, w, 4, 2).shape[1] == 4 * length);
  }
}

TEST_CASE("snake activation analytic values and periodic deviation") {
  Tensor<float> alpha({1}, {1.0f});
  const Tensor<float> zero({1, 1}, {0.0f});
  CHECK(snake(zero, alpha).at(0, 0) == doctest::Approx(0.0f));

  const Tensor<float> half_pi({1, 1}, {float(std::numbers::pi / 2)});
  CHECK(snake(half_pi, alpha).at(0, 0) ==
        doctest::Approx(2.5707963f).epsilon(1e-6));

  // deviation from identity repeats with period pi/alpha
  const Tensor<float> a2({1}, {2.5f});
  std::mt19937_64 rng(11);
  const auto x = oracle::random_tensor<float>(rng, {1, 16}, -3.0, 3.0);
  auto shifted = x;
  for (float& v : shifted.data) v += float(std::numbers::pi) / 2.5f;
  const auto dev_x = snake(x, a2);
  const auto dev_s = snake(shifted, a2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float lhs = dev_s.data[i] - shifted.data[i];
    const float rhs = dev_x.data[i] - x.data[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
  }
}

TEST_CASE("snake rejects non-positive alpha") {
  const Tensor<float> x({1, 2});
  const Tensor<float> alpha({1}, {0.0f});
  CHECK_THROWS_AS((void)snake(x, alpha), ConfigError);
}

TEST_CASE("layer_norm constant input, moments, analytic pair") {
  Tensor<float> gain({4});
  std::fill(gain.data.begin(), gain.data.end(), 1.0f);
  const Tensor<float> bias({4});

  Tensor<float> constant({2, 4});
  for (float& v : constant.data) v = 3.5f;
  const auto zeroed = layer_norm(constant, gain, bias);
  for (float v : zeroed.data) CHECK(v == doctest::Approx(0.0f).epsilon(1e-6));

  std::mt19937_64 rng(12);
  Tensor<float> g64({64}), b64({64});
  std::fill(g64.data.begin(), g64.data.end(), 1.0f);
  const auto x = oracle::random_tensor<float>(rng, {3, 64}, -2.0, 5.0);
  const auto y = layer_norm(x, g64, b64);
  for (std::size_t i = 0; i < 3; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 64; ++j) mean += y.at(i, j);
    mean /= 64.0;
    for (std::size_t j = 0; j < 64; ++j) {
      var += (y.at(i, j) - mean) * (y.at(i, j) - mean);
    }
    var /= 64.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  Tensor<float> g2({2}), b2({2});
  std::fill(g2.data.begin(), g2.data.end(), 1.0f);
  const Tensor<float> pair({1, 2}, {1.0f, 3.0f});
  const auto n = layer_norm(pair, g2, b2, 0.0f);
  CHECK(n.at(0, 0) == doctest::Approx(-1.0f).epsilon(1e-6));
  CHECK(n.at(0, 1) == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("tensor invariants: payload must match shape") {
  CHECK_THROWS_AS((Tensor<float>({2, 3}, {1.0f})), DimensionError);
  CHECK_THROWS_AS((Tensor<float>({0})), DimensionError);
  CHECK_THROWS_AS((Tensor<float>({1, 1, 1, 1})), DimensionError);
}
