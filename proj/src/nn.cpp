// SPDX-License-Identifier: Apache-2.0
#include "sgr/nn.hpp"

#include <cmath>
#include <limits>

namespace sgr {

namespace {

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

std::size_t fnv1a(const std::vector<std::size_t>& v) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t x : v) {
    h ^= static_cast<std::uint64_t>(x);
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h);
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank)
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
}

}  // namespace

// --- conv2d ------------------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                              const BasicTensor<T>& bias) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin)
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, kernel expects " +
                     std::to_string(kernel.dim(2)));
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  expect_shape(bias, {cout}, "conv2d bias");

  BasicTensor<T> y({n, h, w, cout});
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        T* out = &y[((b * h + i) * w + j) * cout];
        std::copy(bias.data(), bias.data() + cout, out);
        for (std::size_t u = 0; u < kh; ++u) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - ph;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t v = 0; v < kw; ++v) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - pw;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
            const T* in = &x[((b * h + ii) * w + jj) * cin];
            const T* k = &kernel[(u * kw + v) * cin * cout];
            gemm_nn<T>(1, cout, cin, in, k, out);
          }
        }
      }
  return y;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                               const BasicTensor<T>& dy) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  expect_shape(dy, {n, h, w, cout}, "conv2d output gradient");
  Conv2dGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(kernel.shape()),
                   BasicTensor<T>({cout})};
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const T* d = &dy[((b * h + i) * w + j) * cout];
        for (std::size_t c = 0; c < cout; ++c) g.bias[c] += d[c];
        for (std::size_t u = 0; u < kh; ++u) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - ph;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t v = 0; v < kw; ++v) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - pw;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t in_off = ((b * h + ii) * w + jj) * cin;
            const std::size_t k_off = (u * kw + v) * cin * cout;
            // dK[u,v,:,:] += x_row^T d ; dx_row += K[u,v] d^T
            gemm_tn<T>(cin, cout, 1, &x[in_off], d, &g.kernel[k_off]);
            gemm_nt<T>(1, cin, cout, d, &kernel[k_off], &g.input[in_off]);
          }
        }
      }
  return g;
}

// --- maxpool -----------------------------------------------------------------

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, std::size_t ph, std::size_t pw) {
  require_rank(x.shape(), 4, "maxpool2d input");
  if (ph == 0 || pw == 0) throw ShapeError("maxpool2d: pool extents must be positive");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t ho = pooled_extent(h, ph), wo = pooled_extent(w, pw);
  if (ho == 0 || wo == 0)
    throw ShapeError("maxpool2d: input " + shape_string(x.shape()) + " vanishes under pooling");
  PoolResult<T> r{BasicTensor<T>({n, ho, wo, c}), std::vector<std::size_t>(n * ho * wo * c)};
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j)
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = ((b * h + i * ph) * w + j * pw) * c + ch;
          for (std::size_t u = 0; u < ph; ++u)
            for (std::size_t v = 0; v < pw; ++v) {
              const std::size_t idx = ((b * h + i * ph + u) * w + j * pw + v) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          r.output[o] = x[best];
          r.argmax[o] = best;
        }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& dy, const std::vector<std::size_t>& argmax,
                                  const Shape& input_shape) {
  if (dy.size() != argmax.size()) throw ShapeError("maxpool2d: gradient/argmax size mismatch");
  BasicTensor<T> dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

// --- dense -------------------------------------------------------------------

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& b) {
  require_rank(w.shape(), 2, "dense weight");
  const std::size_t din = w.dim(0), dout = w.dim(1);
  if (x.rank() == 0 || x.shape().back() != din)
    throw ShapeError("dense: input " + shape_string(x.shape()) + " does not end in " +
                     std::to_string(din));
  expect_shape(b, {dout}, "dense bias");
  const std::size_t m = x.size() / din;
  Shape out = x.shape();
  out.back() = dout;
  BasicTensor<T> y(out);
  for (std::size_t r = 0; r < m; ++r) std::copy(b.data(), b.data() + dout, &y[r * dout]);
  gemm_nn<T>(m, dout, din, x.data(), w.data(), y.data());
  return y;
}

// --- softmax / loss ----------------------------------------------------------

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  BasicTensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = &logits[i * c];
    T* q = &p[i * c];
    const T zmax = *std::max_element(z, z + c);
    T sum{0};
    for (std::size_t j = 0; j < c; ++j) sum += (q[j] = std::exp(z[j] - zmax));
    for (std::size_t j = 0; j < c; ++j) q[j] /= sum;
  }
  return p;
}

template <typename T>
SoftmaxXent<T> softmax_xent(const BasicTensor<T>& logits, const std::vector<std::size_t>& labels,
                            const std::vector<double>& class_weights) {
  require_rank(logits.shape(), 2, "softmax_xent logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_xent: one label per row required");
  if (class_weights.size() != c) throw ShapeError("softmax_xent: one weight per class required");
  for (double w : class_weights)
    if (!(w > 0.0)) throw ValueError("class weights must be positive");

  SoftmaxXent<T> r{0.0, softmax(logits), BasicTensor<T>(logits.shape())};
  if (n == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = labels[i];
    if (y >= c) throw LabelError("label index " + std::to_string(y) + " out of range");
    const T* z = &logits[i * c];
    const double zmax = static_cast<double>(*std::max_element(z, z + c));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j]) - zmax);
    const double nll = std::log(sum) + zmax - static_cast<double>(z[y]);
    const double wy = class_weights[y];
    r.loss += wy * nll * inv_n;
    for (std::size_t j = 0; j < c; ++j) {
      const double target = j == y ? 1.0 : 0.0;
      r.grad_logits[i * c + j] =
          static_cast<T>(wy * (static_cast<double>(r.probs[i * c + j]) - target) * inv_n);
    }
  }
  return r;
}

template <typename T>
SoftmaxXent<T> softmax_xent(const BasicTensor<T>& logits, const BasicTensor<T>& one_hot,
                            const std::vector<double>& class_weights) {
  expect_shape(one_hot, logits.shape(), "softmax_xent targets");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hot = c;
    for (std::size_t j = 0; j < c; ++j) {
      const T v = one_hot[i * c + j];
      if (v == T{1} && hot == c) hot = j;
      else if (v != T{0}) throw ValueError("target row " + std::to_string(i) + " is not one-hot");
    }
    if (hot == c) throw ValueError("target row " + std::to_string(i) + " is not one-hot");
    labels[i] = hot;
  }
  return softmax_xent(logits, labels, class_weights);
}

// --- Conv2D layer ------------------------------------------------------------

template <typename T>
Conv2D<T>::Conv2D(std::string name, std::size_t cin, std::size_t cout, std::size_t kh,
                  std::size_t kw)
    : Layer<T>(std::move(name)), cin_(cin), cout_(cout), kh_(kh), kw_(kw),
      kernel_(this->name() + ".kernel", {kh, kw, cin, cout}),
      bias_(this->name() + ".bias", {cout}) {
  if (cin == 0 || cout == 0) throw ConfigError("conv2d channels must be positive");
}

template <typename T>
Shape Conv2D<T>::output_shape(const Shape& in) const {
  require_rank(in, 4, "conv2d input");
  if (in[3] != cin_) throw ShapeError(this->name() + ": channel mismatch");
  return {in[0], in[1], in[2], cout_};
}

template <typename T>
void Conv2D<T>::init(std::mt19937_64& rng) {
  glorot_uniform(kernel_.value, kh_ * kw_ * cin_, kh_ * kw_ * cout_, rng);
  bias_.value.fill(T{0});
}

template <typename T>
BasicTensor<T> Conv2D<T>::forward(const BasicTensor<T>& x, Mode) {
  input_ = x;
  return conv2d_forward(x, kernel_.value, bias_.value);
}

template <typename T>
BasicTensor<T> Conv2D<T>::backward(const BasicTensor<T>& dy) {
  auto g = conv2d_backward(input_, kernel_.value, dy);
  for (std::size_t i = 0; i < g.kernel.size(); ++i) kernel_.grad[i] += g.kernel[i];
  for (std::size_t i = 0; i < g.bias.size(); ++i) bias_.grad[i] += g.bias[i];
  return std::move(g.input);
}

// --- BatchNorm ---------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, std::size_t channels, double momentum, double eps)
    : Layer<T>(std::move(name)), channels_(channels), momentum_(momentum), eps_(eps),
      gamma_(this->name() + ".gamma", {channels}), beta_(this->name() + ".beta", {channels}),
      running_mean_(this->name() + ".running_mean", {channels}),
      running_var_(this->name() + ".running_var", {channels}) {
  if (channels == 0) throw ConfigError("batchnorm channels must be positive");
  if (!(eps > 0.0)) throw ConfigError("batchnorm eps must be positive");
  gamma_.value.fill(T{1});
  running_var_.value.fill(T{1});
}

template <typename T>
BasicTensor<T> BatchNorm<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.rank() == 0 || x.shape().back() != channels_)
    throw ShapeError(this->name() + ": expected last axis " + std::to_string(channels_) + ", got " +
                     shape_string(x.shape()));
  const std::size_t c = channels_;
  const std::size_t m = x.size() / c;
  mode_ = mode;
  inv_std_.assign(c, T{0});
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::kTrain) {
    if (m == 0) throw EmptyError(this->name() + ": empty batch");
    // Welford accumulation per channel
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = static_cast<double>(x[r * c + ch]);
        const double delta = v - mean[ch];
        mean[ch] += delta / static_cast<double>(r + 1);
        var[ch] += delta * (v - mean[ch]);
      }
    for (std::size_t ch = 0; ch < c; ++ch) {
      var[ch] /= static_cast<double>(m);
      running_mean_.value[ch] = static_cast<T>(
          momentum_ * static_cast<double>(running_mean_.value[ch]) + (1.0 - momentum_) * mean[ch]);
      running_var_.value[ch] = static_cast<T>(
          momentum_ * static_cast<double>(running_var_.value[ch]) + (1.0 - momentum_) * var[ch]);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = static_cast<double>(running_mean_.value[ch]);
      var[ch] = static_cast<double>(running_var_.value[ch]);
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) inv_std_[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + eps_));

  BasicTensor<T> y(x.shape());
  xhat_ = BasicTensor<T>(x.shape());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      const T xh = (x[i] - static_cast<T>(mean[ch])) * inv_std_[ch];
      xhat_[i] = xh;
      y[i] = gamma_.value[ch] * xh + beta_.value[ch];
    }
  return y;
}

template <typename T>
BasicTensor<T> BatchNorm<T>::backward(const BasicTensor<T>& dy) {
  expect_shape(dy, xhat_.shape(), "batchnorm output gradient");
  const std::size_t c = channels_;
  const std::size_t m = dy.size() / c;
  std::vector<T> sum_dy(c, T{0}), sum_dy_xhat(c, T{0});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      sum_dy[ch] += dy[i];
      sum_dy_xhat[ch] += dy[i] * xhat_[i];
    }
  for (std::size_t ch = 0; ch < c; ++ch) {
    gamma_.grad[ch] += sum_dy_xhat[ch];
    beta_.grad[ch] += sum_dy[ch];
  }
  BasicTensor<T> dx(dy.shape());
  if (mode_ == Mode::kInfer) {
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < c; ++ch)
        dx[r * c + ch] = dy[r * c + ch] * gamma_.value[ch] * inv_std_[ch];
    return dx;
  }
  const T inv_m = T{1} / static_cast<T>(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      dx[i] = gamma_.value[ch] * inv_std_[ch] * inv_m *
              (static_cast<T>(m) * dy[i] - sum_dy[ch] - xhat_[i] * sum_dy_xhat[ch]);
    }
  return dx;
}

// --- ReLU --------------------------------------------------------------------

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T>& x, Mode) {
  BasicTensor<T> y(x.shape());
  active_.assign(x.size(), false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > T{0}) {
      y[i] = x[i];
      active_[i] = true;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const BasicTensor<T>& dy) {
  if (dy.size() != active_.size()) throw ShapeError(this->name() + ": gradient size mismatch");
  BasicTensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (active_[i]) dx[i] = dy[i];
  return dx;
}

template <typename T>
void ReLU<T>::append_signature(std::vector<std::size_t>& out) const {
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < active_.size(); ++i)
    if (active_[i]) on.push_back(i);
  out.push_back(fnv1a(on));
}

// --- MaxPool2D ---------------------------------------------------------------

template <typename T>
Shape MaxPool2D<T>::output_shape(const Shape& in) const {
  require_rank(in, 4, "maxpool2d input");
  const std::size_t ho = pooled_extent(in[1], ph_), wo = pooled_extent(in[2], pw_);
  if (ho == 0 || wo == 0)
    throw ShapeError(this->name() + ": input " + shape_string(in) + " vanishes under pooling");
  return {in[0], ho, wo, in[3]};
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::forward(const BasicTensor<T>& x, Mode) {
  input_shape_ = x.shape();
  auto r = maxpool2d_forward(x, ph_, pw_);
  argmax_ = std::move(r.argmax);
  return std::move(r.output);
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::backward(const BasicTensor<T>& dy) {
  return maxpool2d_backward(dy, argmax_, input_shape_);
}

template <typename T>
void MaxPool2D<T>::append_signature(std::vector<std::size_t>& out) const {
  out.push_back(fnv1a(argmax_));
}

// --- Flatten / Reshape -------------------------------------------------------

template <typename T>
Shape Flatten<T>::output_shape(const Shape& in) const {
  if (in.empty()) throw ShapeError("flatten: scalar input");
  return {in[0], shape_size(in) / std::max<std::size_t>(in[0], 1)};
}

template <typename T>
BasicTensor<T> Flatten<T>::forward(const BasicTensor<T>& x, Mode) {
  input_shape_ = x.shape();
  return x.reshaped(output_shape(x.shape()));
}

template <typename T>
BasicTensor<T> Flatten<T>::backward(const BasicTensor<T>& dy) {
  return dy.reshaped(input_shape_);
}

template <typename T>
Shape Reshape<T>::output_shape(const Shape& in) const {
  if (in.size() < keep_) throw ShapeError(this->name() + ": input rank too small");
  Shape out(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(keep_));
  out.insert(out.end(), target_.begin(), target_.end());
  if (shape_size(out) != shape_size(in))
    throw ShapeError(this->name() + ": cannot reshape " + shape_string(in) + " to " +
                     shape_string(out));
  return out;
}

template <typename T>
BasicTensor<T> Reshape<T>::forward(const BasicTensor<T>& x, Mode) {
  input_shape_ = x.shape();
  return x.reshaped(output_shape(x.shape()));
}

template <typename T>
BasicTensor<T> Reshape<T>::backward(const BasicTensor<T>& dy) {
  return dy.reshaped(input_shape_);
}

// --- Dense -------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(std::string name, std::size_t din, std::size_t dout)
    : Layer<T>(std::move(name)), din_(din), dout_(dout),
      weight_(this->name() + ".weight", {din, dout}), bias_(this->name() + ".bias", {dout}) {
  if (din == 0 || dout == 0) throw ConfigError("dense dimensions must be positive");
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& in) const {
  if (in.empty() || in.back() != din_)
    throw ShapeError(this->name() + ": input " + shape_string(in) + " does not end in " +
                     std::to_string(din_));
  Shape out = in;
  out.back() = dout_;
  return out;
}

template <typename T>
void Dense<T>::init(std::mt19937_64& rng) {
  glorot_uniform(weight_.value, din_, dout_, rng);
  bias_.value.fill(T{0});
}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T>& x, Mode) {
  input_ = x;
  return dense_forward(x, weight_.value, bias_.value);
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T>& dy) {
  const std::size_t m = input_.size() / din_;
  if (dy.size() != m * dout_) throw ShapeError(this->name() + ": gradient size mismatch");
  gemm_tn<T>(din_, dout_, m, input_.data(), dy.data(), weight_.grad.data());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < dout_; ++j) bias_.grad[j] += dy[r * dout_ + j];
  BasicTensor<T> dx(input_.shape());
  gemm_nt<T>(m, din_, dout_, dy.data(), weight_.value.data(), dx.data());
  return dx;
}

// --- BiLSTM ------------------------------------------------------------------

template <typename T>
BiLSTM<T>::BiLSTM(std::string name, std::size_t din, std::size_t units, bool return_sequences)
    : Layer<T>(std::move(name)), din_(din), units_(units), return_sequences_(return_sequences) {
  if (din == 0 || units == 0) throw ConfigError("bilstm dimensions must be positive");
  const char* tags[2] = {".fwd", ".bwd"};
  for (int d = 0; d < 2; ++d) {
    const std::string base = this->name() + tags[d];
    dirs_[d].wx = Parameter<T>(base + ".wx", {din, 4 * units});
    dirs_[d].wh = Parameter<T>(base + ".wh", {units, 4 * units});
    dirs_[d].b = Parameter<T>(base + ".b", {4 * units});
  }
}

template <typename T>
Shape BiLSTM<T>::output_shape(const Shape& in) const {
  require_rank(in, 3, "bilstm input");
  if (in[2] != din_)
    throw ShapeError(this->name() + ": input width " + std::to_string(in[2]) + ", expected " +
                     std::to_string(din_));
  if (return_sequences_) return {in[0], in[1], 2 * units_};
  return {in[0], 2 * units_};
}

template <typename T>
std::vector<Parameter<T>*> BiLSTM<T>::parameters() {
  return {&dirs_[0].wx, &dirs_[0].wh, &dirs_[0].b, &dirs_[1].wx, &dirs_[1].wh, &dirs_[1].b};
}

template <typename T>
void BiLSTM<T>::init(std::mt19937_64& rng) {
  for (auto& d : dirs_) {
    glorot_uniform(d.wx.value, din_, 4 * units_, rng);
    glorot_uniform(d.wh.value, units_, 4 * units_, rng);
    d.b.value.fill(T{0});
    for (std::size_t u = 0; u < units_; ++u) d.b.value[units_ + u] = T{1};
  }
}

template <typename T>
void BiLSTM<T>::run_direction(Direction& d, bool reverse, const BasicTensor<T>& x) {
  const std::size_t n = x.dim(0), steps = x.dim(1), u4 = 4 * units_, u = units_;
  d.gates.assign(steps * n * u4, T{0});
  d.cells.assign(steps * n * u, T{0});
  d.tanh_cells.assign(steps * n * u, T{0});
  d.hidden.assign(steps * n * u, T{0});
  std::vector<T> xt(n * din_), a(n * u4);
  const std::vector<T> zeros(n * u, T{0});
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(&x[(b * steps + t) * din_], din_, &xt[b * din_]);
    for (std::size_t b = 0; b < n; ++b) std::copy_n(d.b.value.data(), u4, &a[b * u4]);
    gemm_nn<T>(n, u4, din_, xt.data(), d.wx.value.data(), a.data());
    const T* h_prev = s == 0 ? zeros.data() : &d.hidden[(s - 1) * n * u];
    const T* c_prev = s == 0 ? zeros.data() : &d.cells[(s - 1) * n * u];
    gemm_nn<T>(n, u4, u, h_prev, d.wh.value.data(), a.data());
    T* gates = &d.gates[s * n * u4];
    T* cells = &d.cells[s * n * u];
    T* tcell = &d.tanh_cells[s * n * u];
    T* hid = &d.hidden[s * n * u];
    for (std::size_t b = 0; b < n; ++b) {
      const T* ab = &a[b * u4];
      T* gb = &gates[b * u4];
      for (std::size_t k = 0; k < u; ++k) {
        const T ig = sigmoid(ab[k]);
        const T fg = sigmoid(ab[u + k]);
        const T gg = std::tanh(ab[2 * u + k]);
        const T og = sigmoid(ab[3 * u + k]);
        gb[k] = ig;
        gb[u + k] = fg;
        gb[2 * u + k] = gg;
        gb[3 * u + k] = og;
        const T c = fg * c_prev[b * u + k] + ig * gg;
        const T tc = std::tanh(c);
        cells[b * u + k] = c;
        tcell[b * u + k] = tc;
        hid[b * u + k] = og * tc;
      }
    }
  }
}

template <typename T>
BasicTensor<T> BiLSTM<T>::forward(const BasicTensor<T>& x, Mode) {
  output_shape(x.shape());
  input_ = x;
  const std::size_t n = x.dim(0), steps = x.dim(1), u = units_;
  run_direction(dirs_[0], false, x);
  run_direction(dirs_[1], true, x);
  if (return_sequences_) {
    BasicTensor<T> y({n, steps, 2 * u});
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t b = 0; b < n; ++b) {
        T* out = &y[(b * steps + t) * 2 * u];
        std::copy_n(&dirs_[0].hidden[(t * n + b) * u], u, out);
        std::copy_n(&dirs_[1].hidden[((steps - 1 - t) * n + b) * u], u, out + u);
      }
    return y;
  }
  BasicTensor<T> y({n, 2 * u});
  for (std::size_t b = 0; b < n; ++b) {
    std::copy_n(&dirs_[0].hidden[((steps - 1) * n + b) * u], u, &y[b * 2 * u]);
    std::copy_n(&dirs_[1].hidden[((steps - 1) * n + b) * u], u, &y[b * 2 * u + u]);
  }
  return y;
}

template <typename T>
void BiLSTM<T>::backprop_direction(Direction& d, bool reverse, const std::vector<T>& dh_steps,
                                   BasicTensor<T>& dx) {
  const std::size_t n = input_.dim(0), steps = input_.dim(1), u4 = 4 * units_, u = units_;
  std::vector<T> dh_next(n * u, T{0}), dc_next(n * u, T{0}), da(n * u4), xt(n * din_),
      dxt(n * din_);
  const std::vector<T> zeros(n * u, T{0});
  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    const T* gates = &d.gates[s * n * u4];
    const T* tcell = &d.tanh_cells[s * n * u];
    const T* c_prev = s == 0 ? zeros.data() : &d.cells[(s - 1) * n * u];
    const T* h_prev = s == 0 ? zeros.data() : &d.hidden[(s - 1) * n * u];
    const T* dh_out = &dh_steps[s * n * u];
    for (std::size_t b = 0; b < n; ++b) {
      const T* g = &gates[b * u4];
      T* dab = &da[b * u4];
      for (std::size_t k = 0; k < u; ++k) {
        const std::size_t j = b * u + k;
        const T ig = g[k], fg = g[u + k], gg = g[2 * u + k], og = g[3 * u + k];
        const T tc = tcell[j];
        const T dh = dh_out[j] + dh_next[j];
        const T dout = dh * tc;
        const T dc = dh * og * (T{1} - tc * tc) + dc_next[j];
        dab[k] = dc * gg * ig * (T{1} - ig);
        dab[u + k] = dc * c_prev[j] * fg * (T{1} - fg);
        dab[2 * u + k] = dc * ig * (T{1} - gg * gg);
        dab[3 * u + k] = dout * og * (T{1} - og);
        dc_next[j] = dc * fg;
      }
    }
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t k = 0; k < u4; ++k) d.b.grad[k] += da[b * u4 + k];
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(&input_[(b * steps + t) * din_], din_, &xt[b * din_]);
    gemm_tn<T>(din_, u4, n, xt.data(), da.data(), d.wx.grad.data());
    gemm_tn<T>(u, u4, n, h_prev, da.data(), d.wh.grad.data());
    std::fill(dxt.begin(), dxt.end(), T{0});
    gemm_nt<T>(n, din_, u4, da.data(), d.wx.value.data(), dxt.data());
    for (std::size_t b = 0; b < n; ++b) {
      T* row = &dx[(b * steps + t) * din_];
      for (std::size_t k = 0; k < din_; ++k) row[k] += dxt[b * din_ + k];
    }
    std::fill(dh_next.begin(), dh_next.end(), T{0});
    gemm_nt<T>(n, u, u4, da.data(), d.wh.value.data(), dh_next.data());
  }
}

template <typename T>
BasicTensor<T> BiLSTM<T>::backward(const BasicTensor<T>& dy) {
  const std::size_t n = input_.dim(0), steps = input_.dim(1), u = units_;
  expect_shape(dy, output_shape(input_.shape()), "bilstm output gradient");
  std::vector<T> dh_f(steps * n * u, T{0}), dh_b(steps * n * u, T{0});
  if (return_sequences_) {
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t b = 0; b < n; ++b) {
        const T* g = &dy[(b * steps + t) * 2 * u];
        std::copy_n(g, u, &dh_f[(t * n + b) * u]);
        std::copy_n(g + u, u, &dh_b[((steps - 1 - t) * n + b) * u]);
      }
  } else {
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(&dy[b * 2 * u], u, &dh_f[((steps - 1) * n + b) * u]);
      std::copy_n(&dy[b * 2 * u + u], u, &dh_b[((steps - 1) * n + b) * u]);
    }
  }
  BasicTensor<T> dx(input_.shape());
  backprop_direction(dirs_[0], false, dh_f, dx);
  backprop_direction(dirs_[1], true, dh_b, dx);
  return dx;
}

// --- Dropout -----------------------------------------------------------------

template <typename T>
Dropout<T>::Dropout(std::string name, double rate, std::uint64_t seed)
    : Layer<T>(std::move(name)), rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
}

template <typename T>
BasicTensor<T> Dropout<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (mode == Mode::kInfer || rate_ == 0.0) {
    scale_.clear();
    kept_ = x.size();
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
  std::bernoulli_distribution keep(1.0 - rate_);
  scale_.assign(x.size(), T{0});
  kept_ = 0;
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (keep(rng_)) {
      scale_[i] = keep_scale;
      y[i] = x[i] * keep_scale;
      ++kept_;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> Dropout<T>::backward(const BasicTensor<T>& dy) {
  if (scale_.empty()) return dy;
  BasicTensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * scale_[i];
  return dx;
}

// --- Adam --------------------------------------------------------------------

double learning_rate(const AdamConfig& cfg, int epoch) {
  if (epoch < 0) throw ConfigError("epoch must be non-negative");
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, int epoch) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: parameter list changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->grad.shape() != params[k]->value.shape() ||
        state.m[k].shape() != params[k]->value.shape())
      throw ShapeError("adam: shape mismatch for '" + params[k]->name + "'");
  }
  const auto& cfg = state.config;
  ++state.step;
  const double lr = learning_rate(cfg, epoch);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) -
                                  lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// --- gradient checking -------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<double()>& loss,
                           const std::vector<std::pair<double*, const double*>>& coords,
                           double eps, const std::function<std::vector<std::size_t>()>& signature) {
  GradCheckResult r;
  std::vector<std::size_t> base;
  if (signature) {
    loss();
    base = signature();
  }
  for (const auto& [value, analytic] : coords) {
    const double orig = *value;
    double f[4];
    bool kink = false;
    const double steps[4] = {eps, -eps, 2.0 * eps, -2.0 * eps};
    for (int k = 0; k < 4; ++k) {
      *value = orig + steps[k];
      f[k] = loss();
      kink = kink || (signature && signature() != base);
    }
    *value = orig;
    if (kink) {
      ++r.skipped;
      continue;
    }
    // fourth-order central difference
    const double numeric = (8.0 * (f[0] - f[1]) - (f[2] - f[3])) / (12.0 * eps);
    r.max_rel_error = std::max(r.max_rel_error, relative_error(*analytic, numeric));
    ++r.checked;
  }
  return r;
}

template <typename T>
void glorot_uniform(BasicTensor<T>& w, std::size_t fan_in, std::size_t fan_out,
                    std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : w.storage()) v = static_cast<T>(dist(rng));
}

// --- instantiations ----------------------------------------------------------

#define SGR_INSTANTIATE_NN(T)                                                                  \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                         const BasicTensor<T>&);                               \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                          const BasicTensor<T>&);                              \
  template PoolResult<T> maxpool2d_forward(const BasicTensor<T>&, std::size_t, std::size_t);   \
  template BasicTensor<T> maxpool2d_backward(const BasicTensor<T>&,                            \
                                             const std::vector<std::size_t>&, const Shape&);   \
  template BasicTensor<T> dense_forward(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                        const BasicTensor<T>&);                                \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                      \
  template SoftmaxXent<T> softmax_xent(const BasicTensor<T>&, const std::vector<std::size_t>&, \
                                       const std::vector<double>&);                            \
  template SoftmaxXent<T> softmax_xent(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                       const std::vector<double>&);                            \
  template void adam_step(const std::vector<Parameter<T>*>&, AdamState<T>&, int);              \
  template void glorot_uniform(BasicTensor<T>&, std::size_t, std::size_t, std::mt19937_64&);   \
  template class Conv2D<T>;                                                                    \
  template class BatchNorm<T>;                                                                 \
  template class ReLU<T>;                                                                      \
  template class MaxPool2D<T>;                                                                 \
  template class Flatten<T>;                                                                   \
  template class Reshape<T>;                                                                   \
  template class Dense<T>;                                                                     \
  template class BiLSTM<T>;                                                                    \
  template class Dropout<T>;

SGR_INSTANTIATE_NN(float)
SGR_INSTANTIATE_NN(double)

#undef SGR_INSTANTIATE_NN

}  // namespace sgr
