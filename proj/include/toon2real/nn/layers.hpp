#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "toon2real/nn/gemm.hpp"
#include "toon2real/nn/module.hpp"
#include "toon2real/rng.hpp"

namespace toon2real::nn {

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

/// 2-D convolution, square kernel, weight layout [out, in, k, k].
template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad, bool bias)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", ParamKind::ConvWeight, Shape{out_channels, in_channels, kernel, kernel}) {
    if (bias) bias_.emplace(name + ".bias", ParamKind::Bias, Shape{out_channels, 1, 1, 1});
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != in_) {
      fail(ErrorCategory::ShapeError, "Conv2d " + weight_.name + ": expected " + std::to_string(in_) +
                                          " input channels, got " + to_string(x.shape()));
    }
    const ConvGeometry g = geometry(x);
    if (x.h() + 2 * pad_ < kernel_ || x.w() + 2 * pad_ < kernel_) {
      fail(ErrorCategory::ShapeError, "Conv2d " + weight_.name + ": input smaller than kernel");
    }
    Tensor<T> out(x.n(), out_, g.out_h(), g.out_w());
    const std::size_t cols_n = g.col_cols(), rows = g.col_rows();
    if (!pointwise()) cols_.resize(rows * cols_n);
    for (std::size_t i = 0; i < x.n(); ++i) {
      const T* cols = x.sample(i);
      if (!pointwise()) {
        im2col(x.sample(i), g, cols_.data());
        cols = cols_.data();
      }
      gemm<T>(Trans::No, Trans::No, out_, cols_n, rows, T(1), weight_.value.data(), cols, T(0), out.sample(i));
      if (bias_) add_bias(out.sample(i), cols_n);
    }
    if (this->grad_enabled_) input_ = x;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!input_.empty(), "Conv2d");
    const ConvGeometry g = geometry(input_);
    const std::size_t cols_n = g.col_cols(), rows = g.col_rows();
    Tensor<T> grad_in(input_.shape());
    std::vector<T> dcols(rows * cols_n);
    if (!pointwise()) cols_.resize(rows * cols_n);
    for (std::size_t i = 0; i < input_.n(); ++i) {
      const T* go = grad_out.sample(i);
      const T* cols = input_.sample(i);
      if (!pointwise()) {
        im2col(input_.sample(i), g, cols_.data());
        cols = cols_.data();
      }
      gemm<T>(Trans::No, Trans::Yes, out_, rows, cols_n, T(1), go, cols, T(1), weight_.grad.data());
      if (bias_) {
        for (std::size_t o = 0; o < out_; ++o) {
          T s{};
          for (std::size_t j = 0; j < cols_n; ++j) s += go[o * cols_n + j];
          bias_->grad[o] += s;
        }
      }
      if (pointwise()) {
        gemm<T>(Trans::Yes, Trans::No, rows, cols_n, out_, T(1), weight_.value.data(), go, T(0), grad_in.sample(i));
      } else {
        gemm<T>(Trans::Yes, Trans::No, rows, cols_n, out_, T(1), weight_.value.data(), go, T(0), dcols.data());
        col2im(dcols.data(), g, grad_in.sample(i));
      }
    }
    return grad_in;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

  Parameter<T>& weight() { return weight_; }
  bool has_bias() const { return bias_.has_value(); }

 private:
  bool pointwise() const { return kernel_ == 1 && stride_ == 1 && pad_ == 0; }

  ConvGeometry geometry(const Tensor<T>& x) const { return {in_, x.h(), x.w(), kernel_, stride_, pad_}; }

  void add_bias(T* out, std::size_t plane) const {
    for (std::size_t o = 0; o < out_; ++o) {
      const T b = bias_->value[o];
      for (std::size_t j = 0; j < plane; ++j) out[o * plane + j] += b;
    }
  }

  std::size_t in_, out_, kernel_, stride_, pad_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
  std::vector<T> cols_;
};

/// Transposed convolution (adjoint of Conv2d), weight layout [in, out, k, k].
/// Output extent is (H - 1) * stride - 2 * pad + kernel.
template <typename T>
class ConvTranspose2d : public Module<T> {
 public:
  ConvTranspose2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t pad, bool bias)
      : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad),
        weight_(name + ".weight", ParamKind::ConvWeight, Shape{in_channels, out_channels, kernel, kernel}) {
    if (bias) bias_.emplace(name + ".bias", ParamKind::Bias, Shape{out_channels, 1, 1, 1});
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != in_) {
      fail(ErrorCategory::ShapeError, "ConvTranspose2d " + weight_.name + ": expected " + std::to_string(in_) +
                                          " input channels, got " + to_string(x.shape()));
    }
    const ConvGeometry g = out_geometry(x);
    const std::size_t hw = x.h() * x.w(), rows = g.col_rows();
    Tensor<T> out(x.n(), out_, g.height, g.width);
    cols_.resize(rows * hw);
    for (std::size_t i = 0; i < x.n(); ++i) {
      gemm<T>(Trans::Yes, Trans::No, rows, hw, in_, T(1), weight_.value.data(), x.sample(i), T(0), cols_.data());
      col2im(cols_.data(), g, out.sample(i));
      if (bias_) {
        const std::size_t plane = g.height * g.width;
        T* o = out.sample(i);
        for (std::size_t c = 0; c < out_; ++c) {
          const T b = bias_->value[c];
          for (std::size_t j = 0; j < plane; ++j) o[c * plane + j] += b;
        }
      }
    }
    if (this->grad_enabled_) input_ = x;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!input_.empty(), "ConvTranspose2d");
    const ConvGeometry g = out_geometry(input_);
    const std::size_t hw = input_.h() * input_.w(), rows = g.col_rows();
    Tensor<T> grad_in(input_.shape());
    cols_.resize(rows * hw);
    for (std::size_t i = 0; i < input_.n(); ++i) {
      const T* go = grad_out.sample(i);
      im2col(go, g, cols_.data());
      gemm<T>(Trans::No, Trans::No, in_, hw, rows, T(1), weight_.value.data(), cols_.data(), T(0),
              grad_in.sample(i));
      gemm<T>(Trans::No, Trans::Yes, in_, rows, hw, T(1), input_.sample(i), cols_.data(), T(1),
              weight_.grad.data());
      if (bias_) {
        const std::size_t plane = g.height * g.width;
        for (std::size_t c = 0; c < out_; ++c) {
          T s{};
          for (std::size_t j = 0; j < plane; ++j) s += go[c * plane + j];
          bias_->grad[c] += s;
        }
      }
    }
    return grad_in;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

  Parameter<T>& weight() { return weight_; }

 private:
  ConvGeometry out_geometry(const Tensor<T>& x) const {
    const std::size_t oh = (x.h() - 1) * stride_ + kernel_ - 2 * pad_;
    const std::size_t ow = (x.w() - 1) * stride_ + kernel_ - 2 * pad_;
    return {out_, oh, ow, kernel_, stride_, pad_};
  }

  std::size_t in_, out_, kernel_, stride_, pad_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
  std::vector<T> cols_;
};

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Batch normalization over (N, H, W) per channel. Training mode normalises with
/// the biased batch variance and folds the unbiased one into the running estimate.
template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  BatchNorm2d(const std::string& name, std::size_t channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels), eps_(eps), momentum_(momentum),
        gamma_(name + ".weight", ParamKind::NormScale, Shape{channels, 1, 1, 1}, T(1)),
        beta_(name + ".bias", ParamKind::NormShift, Shape{channels, 1, 1, 1}, T(0)),
        running_mean_(name + ".running_mean", ParamKind::RunningMean, Shape{channels, 1, 1, 1}, T(0)),
        running_var_(name + ".running_var", ParamKind::RunningVar, Shape{channels, 1, 1, 1}, T(1)) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != channels_) fail(ErrorCategory::ShapeError, "BatchNorm2d " + gamma_.name + ": channel mismatch");
    const std::size_t plane = x.h() * x.w(), m = x.n() * plane;
    Tensor<T> out(x.shape());
    std::vector<double> inv_std(channels_);
    Tensor<T> xhat;
    const bool keep = this->grad_enabled_;
    if (keep) xhat = Tensor<T>(x.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      double mean, var;
      if (this->training_) {
        double s = 0.0;
        for (std::size_t n = 0; n < x.n(); ++n) {
          const T* p = x.sample(n) + c * plane;
          for (std::size_t j = 0; j < plane; ++j) s += p[j];
        }
        mean = s / static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t n = 0; n < x.n(); ++n) {
          const T* p = x.sample(n) + c * plane;
          for (std::size_t j = 0; j < plane; ++j) {
            const double d = p[j] - mean;
            ss += d * d;
          }
        }
        var = ss / static_cast<double>(m);
        const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
        running_mean_.value[c] = static_cast<T>((1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean);
        running_var_.value[c] = static_cast<T>((1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
      } else {
        mean = running_mean_.value[c];
        var = running_var_.value[c];
      }
      inv_std[c] = 1.0 / std::sqrt(var + eps_);
      const double g = gamma_.value[c], b = beta_.value[c];
      for (std::size_t n = 0; n < x.n(); ++n) {
        const T* p = x.sample(n) + c * plane;
        T* o = out.sample(n) + c * plane;
        T* h = keep ? xhat.sample(n) + c * plane : nullptr;
        for (std::size_t j = 0; j < plane; ++j) {
          const double xh = (p[j] - mean) * inv_std[c];
          o[j] = static_cast<T>(g * xh + b);
          if (h) h[j] = static_cast<T>(xh);
        }
      }
    }
    if (keep) {
      xhat_ = std::move(xhat);
      inv_std_ = std::move(inv_std);
      cached_training_ = this->training_;
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!xhat_.empty(), "BatchNorm2d");
    const std::size_t plane = xhat_.h() * xhat_.w(), m = xhat_.n() * plane;
    Tensor<T> grad_in(xhat_.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      double dgamma = 0.0, dbeta = 0.0;
      for (std::size_t n = 0; n < xhat_.n(); ++n) {
        const T* g = grad_out.sample(n) + c * plane;
        const T* h = xhat_.sample(n) + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          dgamma += static_cast<double>(g[j]) * h[j];
          dbeta += g[j];
        }
      }
      gamma_.grad[c] += static_cast<T>(dgamma);
      beta_.grad[c] += static_cast<T>(dbeta);
      const double scale = gamma_.value[c] * inv_std_[c];
      const double md = static_cast<double>(m);
      for (std::size_t n = 0; n < xhat_.n(); ++n) {
        const T* g = grad_out.sample(n) + c * plane;
        const T* h = xhat_.sample(n) + c * plane;
        T* d = grad_in.sample(n) + c * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          if (cached_training_) {
            d[j] = static_cast<T>(scale / md * (md * g[j] - dbeta - h[j] * dgamma));
          } else {
            d[j] = static_cast<T>(scale * g[j]);
          }
        }
      }
    }
    return grad_in;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Parameter<T> gamma_, beta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  bool cached_training_ = true;
};

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

template <typename T>
class LeakyReLU : public Module<T> {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
    if (this->grad_enabled_) input_ = x;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    this->require_cache(!input_.empty(), "LeakyReLU");
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = input_[i] > T(0) ? g[i] : slope_ * g[i];
    return d;
  }

 private:
  T slope_;
  Tensor<T> input_;
};

template <typename T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    if (this->grad_enabled_) input_ = x;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    this->require_cache(!input_.empty(), "ReLU");
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = input_[i] > T(0) ? g[i] : T(0);
    return d;
  }

 private:
  Tensor<T> input_;
};

template <typename T>
class Tanh : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    if (this->grad_enabled_) output_ = out;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    this->require_cache(!output_.empty(), "Tanh");
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (T(1) - output_[i] * output_[i]);
    return d;
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
    if (this->grad_enabled_) output_ = out;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    this->require_cache(!output_.empty(), "Sigmoid");
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * output_[i] * (T(1) - output_[i]);
    return d;
  }

 private:
  Tensor<T> output_;
};

/// Inverted dropout: active only in training mode; kept units are scaled by 1/(1-p).
template <typename T>
class Dropout : public Module<T> {
 public:
  explicit Dropout(double p = 0.5, std::uint64_t seed = 0) : p_(p), rng_(seed) {}

  Tensor<T> forward(const Tensor<T>& x) override {
    active_ = this->training_ && p_ > 0.0;
    if (!active_) return x;
    Tensor<T> mask(x.shape());
    const T keep = static_cast<T>(1.0 / (1.0 - p_));
    for (std::size_t i = 0; i < x.size(); ++i) mask[i] = rng_.uniform() < p_ ? T(0) : keep;
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
    if (this->grad_enabled_) mask_ = std::move(mask);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (!active_) return g;
    this->require_cache(!mask_.empty(), "Dropout");
    Tensor<T> d(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * mask_[i];
    return d;
  }

  void reseed_noise(std::uint64_t seed) override { rng_.reseed(seed); }

 private:
  double p_;
  Rng rng_;
  bool active_ = false;
  Tensor<T> mask_;
};

/// Mean over H and W; output N x C x 1 x 1.
template <typename T>
class GlobalAvgPool : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    in_shape_ = x.shape();
    const std::size_t plane = x.h() * x.w();
    Tensor<T> out(x.n(), x.c(), 1, 1);
    for (std::size_t n = 0; n < x.n(); ++n) {
      for (std::size_t c = 0; c < x.c(); ++c) {
        const T* p = x.sample(n) + c * plane;
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
        out.at(n, c, 0, 0) = static_cast<T>(s / static_cast<double>(plane));
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d(in_shape_);
    const std::size_t plane = in_shape_.h * in_shape_.w;
    for (std::size_t n = 0; n < in_shape_.n; ++n) {
      for (std::size_t c = 0; c < in_shape_.c; ++c) {
        const T v = g.at(n, c, 0, 0) / static_cast<T>(plane);
        T* p = d.sample(n) + c * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = v;
      }
    }
    return d;
  }

 private:
  Shape in_shape_{};
};

template <typename T>
class Identity : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override { return x; }
  Tensor<T> backward(const Tensor<T>& g) override { return g; }
};

// ---------------------------------------------------------------------------
// Containers
// ---------------------------------------------------------------------------

template <typename T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  template <typename Layer, typename... Args>
  Layer& emplace(Args&&... args) {
    auto layer = std::make_unique<Layer>(std::forward<Args>(args)...);
    Layer& ref = *layer;
    layer->set_training(this->training_);
    layer->set_grad_enabled(this->grad_enabled_);
    layers_.push_back(std::move(layer));
    return ref;
  }

  void push_back(ModulePtr<T> layer) { layers_.push_back(std::move(layer)); }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (layers_.empty()) return x;
    Tensor<T> h = layers_.front()->forward(x);
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (layers_.empty()) return g;
    Tensor<T> d = layers_.back()->backward(g);
    for (std::size_t i = layers_.size() - 1; i-- > 0;) d = layers_[i]->backward(d);
    return d;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    for (auto& l : layers_) l->collect_parameters(out);
  }

  void set_training(bool on) override {
    this->training_ = on;
    for (auto& l : layers_) l->set_training(on);
  }

  void set_grad_enabled(bool on) override {
    this->grad_enabled_ = on;
    for (auto& l : layers_) l->set_grad_enabled(on);
  }

  void reseed_noise(std::uint64_t seed) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->reseed_noise(derive_seed(seed, {i}));
  }

  std::size_t size() const { return layers_.size(); }
  Module<T>& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<ModulePtr<T>> layers_;
};

}  // namespace toon2real::nn
