// SPDX-License-Identifier: Apache-2.0
//
// Layer set of the hybrid convolutional/recurrent classifier. Every layer
// provides a forward pass, an analytic backward pass and a parameter count.
// Activations are batch-major: images are (N, H, W, C), sequences (N, T, D).
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sgr/tensor.hpp"

namespace sgr {

enum class Mode { kTrain, kInfer };

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(T{0}); }
};

// --- parameter counting ------------------------------------------------------

constexpr std::size_t conv2d_param_count(std::size_t kh, std::size_t kw, std::size_t cin,
                                         std::size_t cout) {
  return kh * kw * cin * cout + cout;
}
/// gamma, beta, running mean, running variance.
constexpr std::size_t batchnorm_param_count(std::size_t channels) { return 4 * channels; }
constexpr std::size_t lstm_param_count(std::size_t din, std::size_t units) {
  return 4 * ((din + units) * units + units);
}
constexpr std::size_t bilstm_param_count(std::size_t din, std::size_t units) {
  return 2 * lstm_param_count(din, units);
}
constexpr std::size_t dense_param_count(std::size_t din, std::size_t dout) {
  return din * dout + dout;
}

/// Floor-division pooling output extent; a trailing odd element is dropped.
constexpr std::size_t pooled_extent(std::size_t n, std::size_t pool) { return n / pool; }

// --- functional kernels ------------------------------------------------------

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input, kernel, bias;
};

/// Same-padded stride-1 cross-correlation. x (N,H,W,Cin), kernel (KH,KW,Cin,Cout)
/// with odd KH/KW, bias (Cout).
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                              const BasicTensor<T>& bias);
template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                               const BasicTensor<T>& dy);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping max pooling with window (ph, pw) over (N,H,W,C). Ties go to
/// the first element in row-major window scan order.
template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, std::size_t ph, std::size_t pw);
template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& dy, const std::vector<std::size_t>& argmax,
                                  const Shape& input_shape);

/// y = x W + b over the last axis. x (..., Din), W (Din, Dout), b (Dout).
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& b);

template <typename T>
struct SoftmaxXent {
  double loss = 0.0;
  BasicTensor<T> probs;
  BasicTensor<T> grad_logits;
};

/// Row softmax with max subtraction.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Class-weighted mean cross-entropy: (1/N) sum_i w[y_i] * -log p[i, y_i].
template <typename T>
SoftmaxXent<T> softmax_xent(const BasicTensor<T>& logits, const std::vector<std::size_t>& labels,
                            const std::vector<double>& class_weights);
/// Same, with one-hot target rows.
template <typename T>
SoftmaxXent<T> softmax_xent(const BasicTensor<T>& logits, const BasicTensor<T>& one_hot,
                            const std::vector<double>& class_weights);

// --- layers ------------------------------------------------------------------

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  /// Output shape for a batched input shape.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) = 0;
  /// Gradient w.r.t. the last forward input; accumulates parameter grads.
  virtual BasicTensor<T> backward(const BasicTensor<T>& dy) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  /// Non-trainable state that is checkpointed (running statistics).
  virtual std::vector<Parameter<T>*> buffers() { return {}; }
  /// Parameter count including non-trainable buffers.
  virtual std::size_t param_count() const { return 0; }
  /// Appends the discrete activation pattern of the last forward pass
  /// (ReLU signs, pooling winners). Used to detect kinks in gradient checks.
  virtual void append_signature(std::vector<std::size_t>& /*out*/) const {}

 private:
  std::string name_;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv2D final : public Layer<T> {
 public:
  Conv2D(std::string name, std::size_t cin, std::size_t cout, std::size_t kh = 3,
         std::size_t kw = 3);
  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<Parameter<T>*> parameters() override { return {&kernel_, &bias_}; }
  std::size_t param_count() const override { return conv2d_param_count(kh_, kw_, cin_, cout_); }
  void init(std::mt19937_64& rng);

  Parameter<T>& kernel() { return kernel_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t cin_, cout_, kh_, kw_;
  Parameter<T> kernel_, bias_;
  BasicTensor<T> input_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::string name, std::size_t channels, double momentum = 0.9, double eps = 1e-5);
  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Parameter<T>*> buffers() override { return {&running_mean_, &running_var_}; }
  std::size_t param_count() const override { return batchnorm_param_count(channels_); }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Parameter<T>& running_mean() { return running_mean_; }
  Parameter<T>& running_var() { return running_var_; }

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter<T> gamma_, beta_, running_mean_, running_var_;
  Mode mode_ = Mode::kInfer;
  BasicTensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  void append_signature(std::vector<std::size_t>& out) const override;

 private:
  std::vector<bool> active_;
};

template <typename T>
class MaxPool2D final : public Layer<T> {
 public:
  MaxPool2D(std::string name, std::size_t ph, std::size_t pw)
      : Layer<T>(std::move(name)), ph_(ph), pw_(pw) {}
  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  void append_signature(std::vector<std::size_t>& out) const override;

 private:
  std::size_t ph_, pw_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

/// (N, d1, d2, ...) -> (N, d1*d2*...)
template <typename T>
class Flatten final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;

 private:
  Shape input_shape_;
};

/// Keeps the leading `keep` axes and reshapes the rest to `target`.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  Reshape(std::string name, std::size_t keep, Shape target)
      : Layer<T>(std::move(name)), keep_(keep), target_(std::move(target)) {}
  std::string kind() const override { return "reshape"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;

 private:
  std::size_t keep_;
  Shape target_;
  Shape input_shape_;
};

/// Affine map over the last axis; leading axes are treated as batch.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, std::size_t din, std::size_t dout);
  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::size_t param_count() const override { return dense_param_count(din_, dout_); }
  void init(std::mt19937_64& rng);

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t din_, dout_;
  Parameter<T> weight_, bias_;
  BasicTensor<T> input_;
};

/// Bidirectional LSTM with gate order (i, f, g, o). Input (N, T, Din); output
/// (N, T, 2U) for sequence mode or (N, 2U) for last-step mode, where the
/// backward direction's last step is t = 0.
template <typename T>
class BiLSTM final : public Layer<T> {
 public:
  BiLSTM(std::string name, std::size_t din, std::size_t units, bool return_sequences);
  std::string kind() const override { return "bilstm"; }
  Shape output_shape(const Shape& in) const override;
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  std::vector<Parameter<T>*> parameters() override;
  std::size_t param_count() const override { return bilstm_param_count(din_, units_); }
  void init(std::mt19937_64& rng);

  struct Direction {
    Parameter<T> wx;  // (Din, 4U)
    Parameter<T> wh;  // (U, 4U)
    Parameter<T> b;   // (4U)
    // per-step caches, indexed by processing step
    std::vector<T> gates, cells, tanh_cells, hidden;
  };
  Direction& forward_dir() { return dirs_[0]; }
  Direction& backward_dir() { return dirs_[1]; }

 private:
  void run_direction(Direction& d, bool reverse, const BasicTensor<T>& x);
  void backprop_direction(Direction& d, bool reverse, const std::vector<T>& dh_steps,
                          BasicTensor<T>& dx);

  std::size_t din_, units_;
  bool return_sequences_;
  Direction dirs_[2];
  BasicTensor<T> input_;
};

/// Inverted dropout: kept activations are scaled by 1/(1-rate) in training,
/// inference is the identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::string name, double rate, std::uint64_t seed = 0);
  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& dy) override;
  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  double rate() const { return rate_; }
  /// Number of elements kept by the last training-mode forward.
  std::size_t kept() const { return kept_; }

 private:
  double rate_;
  std::mt19937_64 rng_;
  std::vector<T> scale_;
  std::size_t kept_ = 0;
};

// --- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double lr0 = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay_factor = 0.1;
  int decay_every = 50;
};

/// lr0 * decay_factor^floor(epoch / decay_every), epochs counted from 0.
double learning_rate(const AdamConfig& cfg, int epoch);

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<BasicTensor<T>> m, v;
};

/// One bias-corrected Adam update at the learning rate of `epoch`.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, int epoch);

// --- gradient checking -------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates skipped because the perturbation crossed a kink.
  std::size_t skipped = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Fourth-order central differences (steps +-eps, +-2 eps) of `loss` w.r.t.
/// each entry of `values`, compared against `analytic`. If `signature` is given, coordinates whose
/// perturbed forward passes change the activation pattern are skipped.
GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::vector<std::pair<double*, const double*>>& coords,
                           double eps = 1e-4,
                           const std::function<std::vector<std::size_t>()>& signature = {});

template <typename T>
void glorot_uniform(BasicTensor<T>& w, std::size_t fan_in, std::size_t fan_out,
                    std::mt19937_64& rng);

}  // namespace sgr
