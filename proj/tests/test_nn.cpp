// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sgr/nn.hpp"

using namespace sgr;
using namespace sgr::testing;

TEST_CASE("parameter counts of the published layers") {
  CHECK(conv2d_param_count(3, 3, 3, 32) == 896);
  CHECK(conv2d_param_count(3, 3, 32, 64) == 18496);
  CHECK(conv2d_param_count(3, 3, 64, 128) == 73856);
  CHECK(conv2d_param_count(3, 3, 128, 256) == 295168);
  CHECK(batchnorm_param_count(32) == 128);
  CHECK(batchnorm_param_count(256) == 1024);
  CHECK(bilstm_param_count(273, 256) == 1085440);
  CHECK(bilstm_param_count(512, 256) == 1574912);
  CHECK(dense_param_count(512, 20) == 10260);
  CHECK(pooled_extent(261, 2) == 130);
  CHECK(pooled_extent(1, 2) == 0);
}

TEST_CASE("conv2d matches nested-loop reference") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> d(1, 5);
    const std::size_t k = 2 * (trial % 2) + 1 + 2 * (trial % 3 == 0);
    const Tensor x = random_tensor({d(rng), d(rng), d(rng), d(rng)}, rng);
    const Tensor w = random_tensor({k, k, x.dim(3), d(rng)}, rng);
    const Tensor b = random_tensor({w.dim(3)}, rng);
    CHECK(max_abs_diff(conv2d_forward(x, w, b), ref_conv2d(x, w, b)) <= 1e-10);
  }
}

TEST_CASE("conv2d rejects even kernels and channel mismatch") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({1, 3, 3, 2}, rng);
  CHECK_THROWS_AS(conv2d_forward(x, Tensor({2, 2, 2, 1}), Tensor({1})), ShapeError);
  CHECK_THROWS_AS(conv2d_forward(x, Tensor({3, 3, 3, 1}), Tensor({1})), ShapeError);
}

TEST_CASE("maxpool picks the first maximum and vanishing outputs fail") {
  Tensor x({1, 2, 2, 1}, std::vector<double>{1.0, 3.0, 3.0, 2.0});
  const auto r = maxpool2d_forward(x, 2, 2);
  CHECK(r.output[0] == 3.0);
  CHECK(r.argmax[0] == 1);
  const Tensor dx = maxpool2d_backward(Tensor({1, 1, 1, 1}, 1.0), r.argmax, x.shape());
  CHECK(dx[1] == 1.0);
  CHECK(dx[2] == 0.0);
  CHECK_THROWS_AS(maxpool2d_forward(Tensor({1, 1, 4, 1}), 2, 2), ShapeError);

  std::mt19937_64 rng(5);
  const Tensor y = random_tensor({2, 5, 7, 3}, rng);
  CHECK(max_abs_diff(maxpool2d_forward(y, 2, 2).output, ref_maxpool(y, 2, 2)) == 0.0);
  CHECK(max_abs_diff(maxpool2d_forward(y, 1, 2).output, ref_maxpool(y, 1, 2)) == 0.0);
}

TEST_CASE("batchnorm training and inference modes") {
  std::mt19937_64 rng(3);
  BatchNorm<double> bn("bn", 3, 0.9, 1e-5);
  bn.gamma().value = random_tensor({3}, rng);
  bn.beta().value = random_tensor({3}, rng);
  const Tensor x = random_tensor({4, 2, 5, 3}, rng, -2.0, 3.0);
  const Tensor y = bn.forward(x, Mode::kTrain);
  CHECK(max_abs_diff(y, ref_batchnorm(x, bn.gamma().value, bn.beta().value, 1e-5)) <= 1e-10);

  // running = 0.9 * running + 0.1 * batch (running starts at mean 0, var 1)
  double mean0 = 0.0;
  for (std::size_t r = 0; r < x.size() / 3; ++r) mean0 += x[r * 3];
  mean0 /= static_cast<double>(x.size() / 3);
  CHECK(bn.running_mean().value[0] == doctest::Approx(0.1 * mean0).epsilon(1e-12));

  const Tensor yi = bn.forward(x, Mode::kInfer);
  const double expect = bn.gamma().value[1] * (x[1] - bn.running_mean().value[1]) /
                            std::sqrt(bn.running_var().value[1] + 1e-5) +
                        bn.beta().value[1];
  CHECK(yi[1] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dense over the last axis") {
  std::mt19937_64 rng(9);
  Dense<double> d("d", 4, 3);
  d.init(rng);
  d.bias().value = random_tensor({3}, rng);
  const Tensor x = random_tensor({2, 5, 4}, rng);
  const Tensor y = d.forward(x, Mode::kInfer);
  CHECK(y.shape() == Shape{2, 5, 3});
  CHECK(max_abs_diff(y, ref_dense(x, d.weight().value, d.bias().value)) <= 1e-12);
}

TEST_CASE("softmax cross-entropy") {
  Tensor logits({2, 3}, std::vector<double>{1000.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  const auto p = softmax(logits);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[3] == doctest::Approx(1.0 / 3.0));
  const auto r = softmax_xent(logits, std::vector<std::size_t>{0, 2}, {1.0, 1.0, 2.0});
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss == doctest::Approx(0.5 * 2.0 * std::log(3.0)));
  // grad = w (p - y) / N
  CHECK(r.grad_logits[5] == doctest::Approx(2.0 * (1.0 / 3.0 - 1.0) / 2.0));
  Tensor onehot({2, 3}, std::vector<double>{1, 0, 0, 0, 0, 1});
  CHECK(softmax_xent(logits, onehot, {1.0, 1.0, 2.0}).loss == doctest::Approx(r.loss));
}

TEST_CASE("dropout is inverted and identity at inference") {
  Dropout<double> d("drop", 0.5, 42);
  const Tensor x({1000}, 1.0);
  CHECK(d.forward(x, Mode::kInfer) == x);
  const Tensor y = d.forward(x, Mode::kTrain);
  double sum = 0.0;
  std::size_t kept = 0;
  for (double v : y.storage()) {
    CHECK((v == 0.0 || v == 2.0));
    sum += v;
    kept += v != 0.0;
  }
  CHECK(kept == d.kept());
  CHECK(sum / 1000.0 == doctest::Approx(1.0).epsilon(0.15));
  d.reseed(7);
  const Tensor a = d.forward(x, Mode::kTrain);
  d.reseed(7);
  CHECK(d.forward(x, Mode::kTrain) == a);
}

TEST_CASE("learning rate step decay") {
  AdamConfig c;
  CHECK(learning_rate(c, 0) == 0.001);
  CHECK(learning_rate(c, 49) == 0.001);
  CHECK(learning_rate(c, 50) == 0.001 * std::pow(0.1, 1));
  CHECK(learning_rate(c, 100) == 0.001 * std::pow(0.1, 2));
  CHECK(learning_rate(c, 149) == 0.001 * std::pow(0.1, 2));
}

TEST_CASE("adam first step moves each weight by lr against the gradient sign") {
  Parameter<double> p("w", {3});
  p.value = Tensor({3}, std::vector<double>{1.0, 2.0, 3.0});
  p.grad = Tensor({3}, std::vector<double>{0.5, -2.0, 0.0});
  AdamState<double> st;
  adam_step<double>({&p}, st, 0);
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
  CHECK(p.value[1] == doctest::Approx(2.0 + 0.001).epsilon(1e-9));
  CHECK(p.value[2] == 3.0);
}

TEST_CASE("layer gradients match finite differences") {
  auto each_seed = [](auto&& fn) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed);
      const auto res = fn(rng);
      CHECK(res.max_rel_error < 1e-5);
      CHECK(res.checked > 0);
    }
  };
  SUBCASE("conv2d") {
    each_seed([](std::mt19937_64& rng) {
      Conv2D<double> c("c", 2, 3, 3, 3);
      c.init(rng);
      c.bias().value = random_tensor({3}, rng);
      return check_layer(c, random_tensor({2, 4, 5, 2}, rng), rng);
    });
  }
  SUBCASE("batchnorm") {
    each_seed([](std::mt19937_64& rng) {
      BatchNorm<double> b("b", 3);
      b.gamma().value = random_tensor({3}, rng, 0.5, 1.5);
      return check_layer(b, random_tensor({3, 2, 2, 3}, rng), rng);
    });
  }
  SUBCASE("relu") {
    each_seed([](std::mt19937_64& rng) {
      ReLU<double> r("r");
      return check_layer(r, random_tensor({2, 3, 4}, rng), rng);
    });
  }
  SUBCASE("maxpool") {
    each_seed([](std::mt19937_64& rng) {
      MaxPool2D<double> m("m", 2, 2);
      return check_layer(m, random_tensor({2, 4, 6, 2}, rng), rng);
    });
  }
  SUBCASE("dense") {
    each_seed([](std::mt19937_64& rng) {
      Dense<double> d("d", 5, 4);
      d.init(rng);
      return check_layer(d, random_tensor({2, 3, 5}, rng), rng);
    });
  }
  SUBCASE("bilstm sequences") {
    each_seed([](std::mt19937_64& rng) {
      BiLSTM<double> l("l", 3, 4, true);
      l.init(rng);
      return check_layer(l, random_tensor({2, 5, 3}, rng), rng);
    });
  }
  SUBCASE("bilstm last step") {
    each_seed([](std::mt19937_64& rng) {
      BiLSTM<double> l("l", 3, 4, false);
      l.init(rng);
      return check_layer(l, random_tensor({2, 5, 3}, rng), rng);
    });
  }
  SUBCASE("dropout") {
    each_seed([](std::mt19937_64& rng) {
      Dropout<double> d("d", 0.3);
      return check_layer(d, random_tensor({4, 6}, rng), rng, Mode::kTrain, [&] { d.reseed(99); });
    });
  }
}

TEST_CASE("bilstm last-step output joins forward end and backward start") {
  std::mt19937_64 rng(4);
  BiLSTM<double> seq("s", 2, 3, true), last("l", 2, 3, false);
  seq.init(rng);
  auto p1 = seq.parameters();
  auto p2 = last.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) p2[i]->value = p1[i]->value;
  const Tensor x = random_tensor({1, 4, 2}, rng);
  const Tensor ys = seq.forward(x, Mode::kInfer);
  const Tensor yl = last.forward(x, Mode::kInfer);
  for (std::size_t u = 0; u < 3; ++u) {
    CHECK(yl.at(0, u) == ys.at(0, 3, u));
    CHECK(yl.at(0, 3 + u) == ys.at(0, 0, 3 + u));
  }
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(0.0, 1e-9) == doctest::Approx(1e-3));
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
}
