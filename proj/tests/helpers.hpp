// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sgr/keypoints.hpp"
#include "sgr/model.hpp"
#include "sgr/nn.hpp"
#include "sgr/synth.hpp"
#include "sgr/tensor.hpp"

namespace sgr::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("sgr_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Holistic frame with every landmark at a seeded random position and the
/// shoulders placed `width` apart.
inline KeypointFrame random_frame(std::int64_t t, std::mt19937_64& rng, double width = 0.3) {
  const auto layout = LayoutSpec::holistic543();
  KeypointFrame f;
  f.t = t;
  f.layout = layout;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  f.landmarks.resize(layout->total_landmarks());
  for (auto& l : f.landmarks) l = {u(rng), u(rng), u(rng) * 0.1};
  f.landmarks[layout->index_of("body", 12)] = {0.3, 0.5, 0.0};
  f.landmarks[layout->index_of("body", 11)] = {0.3 + width, 0.5, 0.0};
  return f;
}

inline GestureSequence random_sequence(std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GestureSequence s;
  for (std::size_t i = 0; i < length; ++i) s.frames.push_back(random_frame(static_cast<std::int64_t>(i), rng));
  return s;
}

/// Small time-preserving spec used by gradient and streaming tests.
inline ModelSpec tiny_spec(std::uint64_t seed = 1) {
  ModelSpec s;
  s.frames = 8;
  s.keypoints = 8;
  s.conv_filters = {2, 3};
  s.lstm_units = 3;
  s.lstm_proj_dim = 4;
  s.classes = 3;
  s.seed = seed;
  s.layout = "holistic543";
  s.input_selection = {"left_hand:8"};
  return s;
}

/// Scaled desk model over hands + upper body (K = 63).
inline ModelSpec scaled_spec(std::size_t classes, std::uint64_t seed = 1) {
  ModelSpec s;
  s.conv_filters = {8, 16};
  s.lstm_units = 32;
  s.lstm_proj_dim = 32;
  s.classes = classes;
  s.seed = seed;
  s.keypoints = 63;
  s.input_selection = {"left_hand", "right_hand", "body:21"};
  return s;
}

// --- brute-force references --------------------------------------------------

inline Tensor ref_conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  Tensor y({n, h, w, cout});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t o = 0; o < cout; ++o) {
          double acc = b[o];
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t bb = 0; bb < kw; ++bb) {
              const long rr = static_cast<long>(r) + static_cast<long>(a) - ph;
              const long cc = static_cast<long>(c) + static_cast<long>(bb) - pw;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
              for (std::size_t q = 0; q < cin; ++q)
                acc += x.at(i, rr, cc, q) * k.at(a, bb, q, o);
            }
          y.at(i, r, c, o) = acc;
        }
  return y;
}

inline Tensor ref_maxpool(const Tensor& x, std::size_t ph, std::size_t pw) {
  const std::size_t n = x.dim(0), h = x.dim(1) / ph, w = x.dim(2) / pw, ch = x.dim(3);
  Tensor y({n, h, w, ch});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c)
        for (std::size_t q = 0; q < ch; ++q) {
          double m = -INFINITY;
          for (std::size_t a = 0; a < ph; ++a)
            for (std::size_t bb = 0; bb < pw; ++bb) m = std::max(m, x.at(i, r * ph + a, c * pw + bb, q));
          y.at(i, r, c, q) = m;
        }
  return y;
}

/// Training-mode batch normalization over all axes but the last.
inline Tensor ref_batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t ch = x.shape().back();
  const std::size_t rows = x.size() / ch;
  Tensor y(x.shape());
  for (std::size_t q = 0; q < ch; ++q) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += x[r * ch + q];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) var += (x[r * ch + q] - mean) * (x[r * ch + q] - mean);
    var /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      y[r * ch + q] = gamma[q] * (x[r * ch + q] - mean) / std::sqrt(var + eps) + beta[q];
  }
  return y;
}

inline Tensor ref_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t din = w.dim(0), dout = w.dim(1);
  const std::size_t rows = x.size() / din;
  Shape s = x.shape();
  s.back() = dout;
  Tensor y(s);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < din; ++i) acc += x[r * din + i] * w.at(i, o);
      y[r * dout + o] = acc;
    }
  return y;
}

// --- gradient checks ---------------------------------------------------------

/// Checks a layer's input and parameter gradients for loss = sum(y * r).
/// `before_forward` runs ahead of every forward pass (e.g. dropout reseeding).
inline GradCheckResult check_layer(Layer<double>& layer, Tensor x, std::mt19937_64& rng,
                                   Mode mode = Mode::kTrain,
                                   const std::function<void()>& before_forward = {}) {
  if (before_forward) before_forward();
  const Tensor y0 = layer.forward(x, mode);
  const Tensor r = random_tensor(y0.shape(), rng);
  for (auto* p : layer.parameters()) p->zero_grad();
  const Tensor dx = layer.backward(r);

  auto loss = [&] {
    if (before_forward) before_forward();
    const Tensor y = layer.forward(x, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  auto signature = [&] {
    std::vector<std::size_t> sig;
    layer.append_signature(sig);
    return sig;
  };
  std::vector<std::pair<double*, const double*>> coords;
  for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({&x[i], &dx[i]});
  std::vector<Tensor> grads;
  for (auto* p : layer.parameters()) grads.push_back(p->grad);
  const auto params = layer.parameters();
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i)
      coords.push_back({&params[k]->value[i], &grads[k][i]});
  return grad_check(loss, coords, 1e-4, signature);
}

/// End-to-end check of the full model on a batch with class-weighted
/// cross-entropy. At most `max_coords` parameter coordinates (spread evenly)
/// plus every `input_stride`-th input coordinate are perturbed.
inline GradCheckResult check_model(Model<double>& model, Tensor x, const std::vector<std::size_t>& labels,
                                   const std::vector<double>& weights, std::uint64_t dropout_seed,
                                   std::size_t max_coords = 400, std::size_t input_stride = 7) {
  auto run = [&] {
    model.reseed_dropout(dropout_seed);
    return softmax_xent(model.forward(x, Mode::kTrain), labels, weights);
  };
  model.zero_grad();
  const auto base = run();
  const Tensor dx = model.backward(base.grad_logits);
  std::vector<Tensor> grads;
  const auto params = model.parameters();
  for (auto* p : params) grads.push_back(p->grad);

  std::vector<std::pair<double*, const double*>> all;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k]->value.size(); ++i)
      all.push_back({&params[k]->value[i], &grads[k][i]});
  std::vector<std::pair<double*, const double*>> coords;
  const std::size_t step = std::max<std::size_t>(1, all.size() / max_coords);
  for (std::size_t i = 0; i < all.size(); i += step) coords.push_back(all[i]);
  for (std::size_t i = 0; i < x.size(); i += input_stride) coords.push_back({&x[i], &dx[i]});
  return grad_check([&] { return run().loss; }, coords, 1e-4,
                    [&] { return model.activation_signature(); });
}

}  // namespace sgr::testing
