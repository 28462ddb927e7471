#include <cmath>
#include <random>

#include "doctest.h"
#include "gsan/error.hpp"
#include "gsan/ops.hpp"
#include "oracles.hpp"

using namespace gsan;

TEST_SUITE("tensor-core") {

TEST_CASE("tensor shape contract") {
  Tensor4 t({2, 3, 4, 5}, 1.5f);
  CHECK(t.size() == 120);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  CHECK(t.offset(1, 0, 0, 0) == 60);
  CHECK_THROWS_AS(Tensor4({0, 1, 1, 1}), DimensionError);
  CHECK_THROWS_AS(Tensor4({1, 1, 2, 2}, std::vector<float>(3)), DimensionError);
  CHECK_THROWS_AS(t.reshaped({1, 1, 1, 7}), DimensionError);
}

TEST_CASE("conv2d small cases") {
  const ConvGeometry unit{1, 1, 0, 1, 1, 1};
  const Tensor4 x({1, 1, 1, 1}, std::vector<float>{3.0f});
  const std::vector<float> w{2.0f};
  CHECK(conv2d(x, w, {}, unit)[0] == 6.0f);

  const ConvGeometry g3{3, 1, 0, 1, 1, 1};
  const Tensor4 ones({1, 1, 3, 3}, 1.0f);
  const std::vector<float> w9(9, 1.0f);
  const Tensor4 y = conv2d(ones, w9, {}, g3);
  CHECK(y.shape() == Shape4{1, 1, 1, 1});
  CHECK(y[0] == 9.0f);
}

TEST_CASE("conv2d matches the six-loop oracle") {
  std::mt19937_64 rng(11);
  const ConvGeometry g{3, 1, 1, 3, 4, 1};
  const Tensor4 x = oracle::random_tensor({2, 3, 8, 8}, rng);
  const auto w = oracle::random_vector(g.weight_count(), rng);
  const auto b = oracle::random_vector(4, rng);
  CHECK(oracle::max_abs_diff(conv2d(x, w, b, g), oracle::conv2d(x, w, b, g)) < 1e-5);
}

TEST_CASE("conv2d oracle sweep up to 2x4x9x9") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> ch(1, 4), sp(3, 9), kk(0, 2), st(1, 2), pad(0, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const int k = 2 * kk(rng) + 1;
    const int size = std::max(sp(rng), k);
    const int ci = ch(rng);
    const int co = ch(rng);
    const int groups = (trial % 5 == 0 && ci == co) ? ci : 1;
    const ConvGeometry g{k, st(rng), pad(rng), ci, co, groups};
    const Tensor4 x = oracle::random_tensor({2, ci, size, size}, rng);
    const auto w = oracle::random_vector(g.weight_count(), rng);
    const auto b = oracle::random_vector(co, rng);
    const Tensor4 y = conv2d(x, w, b, g);
    CHECK(y.shape() == g.output_shape(x.shape()));
    CHECK(oracle::max_abs_diff(y, oracle::conv2d(x, w, b, g)) < 1e-5);
  }
}

TEST_CASE("conv2d shape errors name the axis") {
  const ConvGeometry g{3, 1, 1, 2, 2, 1};
  const Tensor4 x({1, 3, 5, 5});
  try {
    conv2d(x, std::vector<float>(g.weight_count()), {}, g);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "channels");
  }
  CHECK_THROWS_AS(conv2d(Tensor4({1, 2, 5, 5}), std::vector<float>(5), {}, g), DimensionError);
  const ConvGeometry too_big{7, 1, 0, 1, 1, 1};
  CHECK_THROWS_AS(conv2d(Tensor4({1, 1, 5, 5}), std::vector<float>(49), {}, too_big),
                  DimensionError);
}

TEST_CASE("conv2d backward against finite differences") {
  std::mt19937_64 rng(13);
  const ConvGeometry g{3, 2, 1, 2, 3, 1};
  Tensor4 x = oracle::random_tensor({2, 2, 5, 5}, rng);
  auto w = oracle::random_vector(g.weight_count(), rng);
  auto b = oracle::random_vector(3, rng);
  const Tensor4 r = oracle::random_tensor(g.output_shape(x.shape()), rng);
  const ConvGrads grads = conv2d_backward(x, w, g, r);
  auto loss = [&] { return oracle::dot(conv2d(x, w, b, g), r); };
  CHECK(oracle::gradient_rel_error(loss, x.data().data(), x.size(), grads.input.storage()) < 1e-3);
  CHECK(oracle::gradient_rel_error(loss, w.data(), w.size(), grads.weights) < 1e-3);
  CHECK(oracle::gradient_rel_error(loss, b.data(), b.size(), grads.bias) < 1e-3);
}

TEST_CASE("maxpool2d") {
  const Tensor4 x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(maxpool2d(x, 2, 2)[0] == 4.0f);

  const Tensor4 c({1, 2, 6, 6}, 2.5f);
  const Tensor4 pc = maxpool2d(c, 2, 2);
  CHECK(pc.shape() == Shape4{1, 2, 3, 3});
  for (float v : pc.data()) CHECK(v == 2.5f);

  std::mt19937_64 rng(14);
  const Tensor4 r = oracle::random_tensor({1, 2, 6, 6}, rng);
  CHECK(oracle::bit_identical(maxpool2d(r, 2, 2), oracle::maxpool(r, 2, 2)));
  CHECK_THROWS_AS(maxpool2d(Tensor4({1, 1, 2, 2}), 3, 1), DimensionError);
}

TEST_CASE("maxpool2d backward against finite differences") {
  std::mt19937_64 rng(15);
  Tensor4 x = oracle::random_tensor({1, 2, 4, 4}, rng);
  const Tensor4 r = oracle::random_tensor({1, 2, 2, 2}, rng);
  const Tensor4 dx = maxpool2d_backward(x, 2, 2, r);
  auto loss = [&] { return oracle::dot(maxpool2d(x, 2, 2), r); };
  CHECK(oracle::gradient_rel_error(loss, x.data().data(), x.size(), dx.storage()) < 1e-3);
}

TEST_CASE("batch norm eval with identity parameters") {
  std::mt19937_64 rng(16);
  const Tensor4 x = oracle::random_tensor({2, 3, 4, 4}, rng);
  const BatchNormState s = BatchNormState::identity(3);
  const Tensor4 y = batch_norm_eval(x, s);
  CHECK(oracle::max_abs_diff(x, y) < 1e-4);
}

TEST_CASE("batch norm train normalizes each channel") {
  std::mt19937_64 rng(17);
  const Tensor4 x = oracle::random_tensor({4, 3, 5, 5}, rng, -3.0f, 7.0f);
  BatchNormState s = BatchNormState::identity(3);
  const Tensor4 y = batch_norm(x, s, Mode::train);
  std::vector<float> mean, var;
  oracle::channel_stats(y, mean, var);
  for (int c = 0; c < 3; ++c) {
    CHECK(std::fabs(mean[c]) < 1e-5);
    CHECK(std::fabs(var[c] - 1.0f) < 1e-4);
  }
}

TEST_CASE("batch norm train on a fixed batch") {
  const Tensor4 x({2, 1, 2, 2}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  BatchNormState s = BatchNormState::identity(1);
  const Tensor4 y = batch_norm(x, s, Mode::train);
  // mean 4.5, biased variance 5.25
  const double sd = std::sqrt(5.25 + 1e-5);
  for (int i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx((i + 1 - 4.5) / sd).epsilon(1e-6));
  // running stats: 0.9 * old + 0.1 * batch, unbiased variance 6.0
  CHECK(s.running_mean[0] == doctest::Approx(0.45).epsilon(1e-6));
  CHECK(s.running_var[0] == doctest::Approx(0.9 + 0.1 * 6.0).epsilon(1e-6));
}

TEST_CASE("batch norm affine reconstruction") {
  std::mt19937_64 rng(18);
  const Tensor4 x = oracle::random_tensor({3, 2, 4, 4}, rng, -2.0f, 5.0f);
  std::vector<float> mean, var;
  oracle::channel_stats(x, mean, var);
  BatchNormState s = BatchNormState::identity(2);
  for (int c = 0; c < 2; ++c) {
    s.scale[c] = std::sqrt(var[c] + s.epsilon);
    s.shift[c] = mean[c];
  }
  CHECK(oracle::max_abs_diff(batch_norm(x, s, Mode::train), x) < 1e-4);
}

TEST_CASE("batch norm backward against finite differences") {
  std::mt19937_64 rng(19);
  Tensor4 x = oracle::random_tensor({2, 2, 3, 3}, rng);
  const BatchNormState base = [&] {
    BatchNormState s = BatchNormState::identity(2);
    s.scale = {1.3f, 0.7f};
    s.shift = {0.2f, -0.4f};
    return s;
  }();
  const Tensor4 r = oracle::random_tensor(x.shape(), rng);
  BatchNormState st = base;
  BatchNormCache cache;
  batch_norm(x, st, Mode::train, &cache);
  const BatchNormGrads g = batch_norm_backward(cache, base, r);
  BatchNormState probe = base;
  auto loss = [&] {
    BatchNormState tmp = probe;
    return oracle::dot(batch_norm(x, tmp, Mode::train), r);
  };
  CHECK(oracle::gradient_rel_error(loss, x.data().data(), x.size(), g.input.storage()) < 1e-3);
  CHECK(oracle::gradient_rel_error(loss, probe.scale.data(), 2, g.scale) < 1e-3);
  CHECK(oracle::gradient_rel_error(loss, probe.shift.data(), 2, g.shift) < 1e-3);
}

TEST_CASE("activations") {
  const Tensor4 x({1, 1, 1, 2}, std::vector<float>{-1.0f, 2.0f});
  const Tensor4 y = relu(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 2.0f);
  CHECK(hard_swish(0.0f) == 0.0f);
  CHECK(hard_swish(3.0f) == 3.0f);
  CHECK(hard_swish(-3.0f) == 0.0f);
  CHECK(std::fabs(hard_swish(1.0f) - 4.0f / 6.0f) < 1e-4);
}

TEST_CASE("hard-swish and relu backward against finite differences") {
  std::mt19937_64 rng(20);
  // keep samples away from the kinks at -3, 0 and 3
  Tensor4 x = oracle::random_tensor({1, 2, 3, 3}, rng, -5.0f, 5.0f);
  for (float& v : x.data()) {
    for (float kink : {-3.0f, 0.0f, 3.0f}) {
      if (std::fabs(v - kink) < 0.05f) v = kink + 0.1f;
    }
  }
  const Tensor4 r = oracle::random_tensor(x.shape(), rng);
  const Tensor4 dh = hard_swish_backward(x, r);
  auto loss_h = [&] { return oracle::dot(hard_swish(x), r); };
  CHECK(oracle::gradient_rel_error(loss_h, x.data().data(), x.size(), dh.storage()) < 1e-3);
  const Tensor4 dr = relu_backward(x, r);
  auto loss_r = [&] { return oracle::dot(relu(x), r); };
  CHECK(oracle::gradient_rel_error(loss_r, x.data().data(), x.size(), dr.storage()) < 1e-3);
}

TEST_CASE("global average pool and its backward") {
  std::mt19937_64 rng(21);
  Tensor4 x = oracle::random_tensor({2, 3, 4, 4}, rng);
  const Tensor4 y = global_avg_pool(x);
  CHECK(y.shape() == Shape4{2, 3, 1, 1});
  double s = 0.0;
  for (int h = 0; h < 4; ++h)
    for (int w = 0; w < 4; ++w) s += x.at(1, 2, h, w);
  CHECK(y.at(1, 2, 0, 0) == doctest::Approx(s / 16.0).epsilon(1e-6));
  const Tensor4 r = oracle::random_tensor(y.shape(), rng);
  const Tensor4 dx = global_avg_pool_backward(x.shape(), r);
  auto loss = [&] { return oracle::dot(global_avg_pool(x), r); };
  CHECK(oracle::gradient_rel_error(loss, x.data().data(), x.size(), dx.storage()) < 1e-3);
}

TEST_CASE("concat and slice are inverse") {
  std::mt19937_64 rng(22);
  const Tensor4 a = oracle::random_tensor({2, 2, 3, 3}, rng);
  const Tensor4 b = oracle::random_tensor({2, 3, 3, 3}, rng);
  const Tensor4 c = concat_channels(a, b);
  CHECK(c.shape() == Shape4{2, 5, 3, 3});
  CHECK(c.at(1, 2, 1, 1) == b.at(1, 0, 1, 1));
  auto [a2, b2] = slice_channels(c, 2);
  CHECK(oracle::bit_identical(a, a2));
  CHECK(oracle::bit_identical(b, b2));
  CHECK_THROWS_AS(concat_channels(a, Tensor4({2, 1, 4, 3})), DimensionError);
}

TEST_CASE("linear forward and backward") {
  std::mt19937_64 rng(23);
  Tensor4 x = oracle::random_tensor({3, 2, 2, 2}, rng);
  auto w = oracle::random_vector(5 * 8, rng);
  auto b = oracle::random_vector(5, rng);
  const Tensor4 y = linear(x, w, b, 5);
  CHECK(y.shape() == Shape4{3, 5, 1, 1});
  double expect = b[4];
  for (int f = 0; f < 8; ++f) expect += double(w[4 * 8 + f]) * x[2 * 8 + f];
  CHECK(y.at(2, 4, 0, 0) == doctest::Approx(expect).epsilon(1e-6));

  const Tensor4 r = oracle::random_tensor(y.shape(), rng);
  const LinearGrads g = linear_backward(x, w, 5, r);
  auto loss = [&] { return oracle::dot(linear(x, w, b, 5), r); };
  CHECK(oracle::gradient_rel_error(loss, x.data().data(), x.size(), g.input.storage()) < 1e-3);
  CHECK(oracle::gradient_rel_error(loss, w.data(), w.size(), g.weights) < 1e-3);
  CHECK(oracle::gradient_rel_error(loss, b.data(), b.size(), g.bias) < 1e-3);
}

TEST_CASE("softmax cross-entropy") {
  const Tensor4 uniform({1, 10, 1, 1}, 0.0f);
  const std::vector<int> label{3};
  CHECK(std::fabs(softmax_cross_entropy(uniform, label).loss - std::log(10.0)) < 1e-4);

  Tensor4 sure({1, 10, 1, 1}, 0.0f);
  sure[3] = 100.0f;
  CHECK(softmax_cross_entropy(sure, label).loss < 1e-6);

  const std::vector<int> bad{10};
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, bad), ValidationError);
  const std::vector<int> negative{-1};
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, negative), ValidationError);
}

TEST_CASE("softmax cross-entropy gradient against finite differences") {
  std::mt19937_64 rng(24);
  Tensor4 logits = oracle::random_tensor({4, 10, 1, 1}, rng, -3.0f, 3.0f);
  const std::vector<int> labels{0, 9, 4, 4};
  const LossAndGrad lg = softmax_cross_entropy(logits, labels);
  auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
  CHECK(oracle::gradient_rel_error(loss, logits.data().data(), logits.size(), lg.grad.storage()) <
        1e-4);
}

TEST_CASE("argmax takes the first maximum") {
  const Tensor4 l({2, 3, 1, 1}, std::vector<float>{1, 5, 5, -1, -2, -0.5f});
  const auto a = argmax_classes(l);
  CHECK(a[0] == 1);
  CHECK(a[1] == 2);
}

}  // TEST_SUITE
