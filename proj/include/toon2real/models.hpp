#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "toon2real/nn/layers.hpp"
#include "toon2real/rng.hpp"

namespace toon2real::models {

using nn::Module;
using nn::Parameter;
using nn::ParamKind;

enum class NoiseMode { Dropout, None };

/// U-Net generator layout. depth = number of stride-2 encoder stages, so the
/// input side is 2^depth. depth 8 with ngf 64 is the standard 256-pixel U-Net.
struct GeneratorSpec {
  std::size_t in_channels = 3;
  std::size_t out_channels = 3;
  std::size_t depth = 8;
  std::size_t ngf = 64;
  NoiseMode noise_mode = NoiseMode::Dropout;
  double dropout_p = 0.5;

  std::size_t image_size() const { return std::size_t{1} << depth; }

  /// Output channels of encoder stage `level` (0 = outermost).
  std::size_t encoder_channels(std::size_t level) const { return ngf * std::min<std::size_t>(std::size_t{1} << level, 8); }

  std::vector<std::size_t> encoder_channel_list() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < depth; ++l) out.push_back(encoder_channels(l));
    return out;
  }

  /// Dropout sits in the ngf*8 decoder stages between the innermost stage and
  /// the channel-doubling ramp (three of them at depth 8).
  bool has_dropout(std::size_t level) const {
    return noise_mode == NoiseMode::Dropout && level >= 4 && level + 1 < depth;
  }
};

/// 70x70 PatchGAN layout: n_layers stride-2 convolutions, one stride-1
/// convolution, then a 1-channel stride-1 logit head.
struct DiscriminatorSpec {
  std::size_t in_channels = 6;
  std::size_t ndf = 64;
  std::size_t n_layers = 3;

  struct Layer {
    std::size_t kernel, stride, pad;
  };

  std::vector<Layer> conv_stack() const {
    std::vector<Layer> out(n_layers, Layer{4, 2, 1});
    out.push_back({4, 1, 1});
    out.push_back({4, 1, 1});
    return out;
  }

  bool accepts(std::size_t input) const {
    for (const auto& l : conv_stack()) {
      if (input + 2 * l.pad < l.kernel) return false;
      input = (input + 2 * l.pad - l.kernel) / l.stride + 1;
    }
    return true;
  }

  std::size_t output_size(std::size_t input) const {
    for (const auto& l : conv_stack()) input = (input + 2 * l.pad - l.kernel) / l.stride + 1;
    return input;
  }
};

/// Receptive field of one output unit: r <- r + (k - 1) * (product of earlier strides).
inline std::size_t receptive_field(const DiscriminatorSpec& spec) {
  std::size_t r = 1, jump = 1;
  for (const auto& l : spec.conv_stack()) {
    r += (l.kernel - 1) * jump;
    jump *= l.stride;
  }
  return r;
}

enum class BlockRole { Outermost, Middle, Innermost };

/// One U-Net level: down path, nested sub-block, up path, and (except at the
/// outermost level) the skip concatenation [input, up(sub(down(input)))].
template <typename T>
class UnetBlock : public Module<T> {
 public:
  UnetBlock(const std::string& name, BlockRole role, std::size_t outer_nc, std::size_t inner_nc,
            std::size_t input_nc, std::unique_ptr<UnetBlock> sub, bool dropout, double dropout_p)
      : role_(role), sub_(std::move(sub)) {
    switch (role) {
      case BlockRole::Outermost:
        down_.template emplace<nn::Conv2d<T>>(name + ".down.conv", input_nc, inner_nc, 4, 2, 1, false);
        up_.template emplace<nn::ReLU<T>>();
        up_.template emplace<nn::ConvTranspose2d<T>>(name + ".up.conv", inner_nc * 2, outer_nc, 4, 2, 1, true);
        up_.template emplace<nn::Tanh<T>>();
        break;
      case BlockRole::Innermost:
        down_.template emplace<nn::LeakyReLU<T>>(T(0.2));
        down_.template emplace<nn::Conv2d<T>>(name + ".down.conv", input_nc, inner_nc, 4, 2, 1, false);
        up_.template emplace<nn::ReLU<T>>();
        up_.template emplace<nn::ConvTranspose2d<T>>(name + ".up.conv", inner_nc, outer_nc, 4, 2, 1, false);
        up_.template emplace<nn::BatchNorm2d<T>>(name + ".up.norm", outer_nc);
        break;
      case BlockRole::Middle:
        down_.template emplace<nn::LeakyReLU<T>>(T(0.2));
        down_.template emplace<nn::Conv2d<T>>(name + ".down.conv", input_nc, inner_nc, 4, 2, 1, false);
        down_.template emplace<nn::BatchNorm2d<T>>(name + ".down.norm", inner_nc);
        up_.template emplace<nn::ReLU<T>>();
        up_.template emplace<nn::ConvTranspose2d<T>>(name + ".up.conv", inner_nc * 2, outer_nc, 4, 2, 1, false);
        up_.template emplace<nn::BatchNorm2d<T>>(name + ".up.norm", outer_nc);
        if (dropout) up_.template emplace<nn::Dropout<T>>(dropout_p);
        break;
    }
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> d = down_.forward(x);
    if (recording_) down_out_ = d;
    Tensor<T> u = up_.forward(sub_ ? sub_->forward(d) : d);
    if (recording_) up_out_ = u;
    if (role_ == BlockRole::Outermost) return u;
    skip_channels_ = x.c();
    if (ablate_skip_) return concat_channels(Tensor<T>(x.shape()), u);
    return concat_channels(x, u);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (role_ == BlockRole::Outermost) {
      Tensor<T> gs = up_.backward(g);
      return down_.backward(sub_ ? sub_->backward(gs) : gs);
    }
    Tensor<T> gx, gu;
    split_channels(g, skip_channels_, gx, gu);
    Tensor<T> gs = up_.backward(gu);
    Tensor<T> gd = down_.backward(sub_ ? sub_->backward(gs) : gs);
    if (ablate_skip_) return gd;
    add_inplace(gx, gd);
    return gx;
  }

  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    down_.collect_parameters(out);
    if (sub_) sub_->collect_parameters(out);
    up_.collect_parameters(out);
  }

  void set_training(bool on) override {
    this->training_ = on;
    down_.set_training(on);
    up_.set_training(on);
    if (sub_) sub_->set_training(on);
  }

  void set_grad_enabled(bool on) override {
    this->grad_enabled_ = on;
    down_.set_grad_enabled(on);
    up_.set_grad_enabled(on);
    if (sub_) sub_->set_grad_enabled(on);
  }

  void reseed_noise(std::uint64_t seed) override {
    up_.reseed_noise(derive_seed(seed, {1}));
    if (sub_) sub_->reseed_noise(derive_seed(seed, {2}));
  }

  UnetBlock* sub() { return sub_.get(); }
  void set_recording(bool on) { recording_ = on; }
  void set_ablate_skip(bool on) { ablate_skip_ = on; }
  const Tensor<T>& down_output() const { return down_out_; }
  const Tensor<T>& up_output() const { return up_out_; }

 private:
  BlockRole role_;
  nn::Sequential<T> down_, up_;
  std::unique_ptr<UnetBlock> sub_;
  std::size_t skip_channels_ = 0;
  bool recording_ = false;
  bool ablate_skip_ = false;
  Tensor<T> down_out_, up_out_;
};

template <typename T>
class UnetGenerator : public Module<T> {
 public:
  explicit UnetGenerator(GeneratorSpec spec, const std::string& name = "G") : spec_(spec) {
    if (spec.depth < 2) fail(ErrorCategory::ConfigError, "U-Net depth must be at least 2");
    std::unique_ptr<UnetBlock<T>> block;
    for (std::size_t level = spec.depth; level-- > 0;) {
      const std::string block_name = name + ".level" + std::to_string(level);
      const std::size_t inner = spec.encoder_channels(level);
      if (level == 0) {
        block = std::make_unique<UnetBlock<T>>(block_name, BlockRole::Outermost, spec.out_channels, inner,
                                               spec.in_channels, std::move(block), false, spec.dropout_p);
      } else {
        const std::size_t outer = spec.encoder_channels(level - 1);
        const BlockRole role = level + 1 == spec.depth ? BlockRole::Innermost : BlockRole::Middle;
        block = std::make_unique<UnetBlock<T>>(block_name, role, outer, inner, outer, std::move(block),
                                               spec.has_dropout(level), spec.dropout_p);
      }
    }
    root_ = std::move(block);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    const std::size_t s = spec_.image_size();
    if (x.c() != spec_.in_channels || x.h() != s || x.w() != s) {
      fail(ErrorCategory::ShapeError, "generator expects Nx" + std::to_string(spec_.in_channels) + "x" +
                                          std::to_string(s) + "x" + std::to_string(s) + ", got " +
                                          to_string(x.shape()));
    }
    return root_->forward(x);
  }

  Tensor<T> backward(const Tensor<T>& g) override { return root_->backward(g); }

  void collect_parameters(std::vector<Parameter<T>*>& out) override { root_->collect_parameters(out); }

  void set_training(bool on) override {
    this->training_ = on;
    root_->set_training(on);
  }

  void set_grad_enabled(bool on) override {
    this->grad_enabled_ = on;
    root_->set_grad_enabled(on);
  }

  void reseed_noise(std::uint64_t seed) override { root_->reseed_noise(seed); }

  const GeneratorSpec& spec() const { return spec_; }

  UnetBlock<T>& level(std::size_t l) {
    UnetBlock<T>* b = root_.get();
    for (std::size_t i = 0; i < l; ++i) b = b->sub();
    return *b;
  }

  void set_recording(bool on) {
    for (std::size_t l = 0; l < spec_.depth; ++l) level(l).set_recording(on);
  }

  /// Zero the skip branch that level `l` concatenates onto its up-path output.
  /// Level 0 has no skip; l must be in [1, depth).
  void set_ablate_skip(std::size_t l, bool on) {
    if (l == 0 || l >= spec_.depth) fail(ErrorCategory::UsageError, "no skip connection at that level");
    level(l).set_ablate_skip(on);
  }

 private:
  GeneratorSpec spec_;
  std::unique_ptr<UnetBlock<T>> root_;
};

template <typename T>
class PatchDiscriminator : public Module<T> {
 public:
  explicit PatchDiscriminator(DiscriminatorSpec spec, const std::string& name = "D") : spec_(spec) {
    const auto stack = spec.conv_stack();
    std::size_t prev = spec.in_channels;
    std::size_t idx = 0;
    for (std::size_t i = 0; i + 1 < stack.size(); ++i, ++idx) {
      const std::size_t mult = std::min<std::size_t>(std::size_t{1} << i, 8);
      const std::size_t ch = spec.ndf * mult;
      const bool first = i == 0;
      const std::string lname = name + ".conv" + std::to_string(idx);
      net_.template emplace<nn::Conv2d<T>>(lname, prev, ch, stack[i].kernel, stack[i].stride, stack[i].pad, first);
      if (!first) net_.template emplace<nn::BatchNorm2d<T>>(name + ".norm" + std::to_string(idx), ch);
      net_.template emplace<nn::LeakyReLU<T>>(T(0.2));
      prev = ch;
    }
    const auto& head = stack.back();
    net_.template emplace<nn::Conv2d<T>>(name + ".conv" + std::to_string(idx), prev, 1, head.kernel, head.stride,
                                         head.pad, true);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != spec_.in_channels) {
      fail(ErrorCategory::ShapeError, "discriminator expects " + std::to_string(spec_.in_channels) +
                                          " channels, got " + to_string(x.shape()));
    }
    if (!spec_.accepts(x.h()) || !spec_.accepts(x.w())) {
      fail(ErrorCategory::ShapeError, "discriminator input too small: " + to_string(x.shape()));
    }
    return net_.forward(x);
  }

  Tensor<T> backward(const Tensor<T>& g) override { return net_.backward(g); }

  void collect_parameters(std::vector<Parameter<T>*>& out) override { net_.collect_parameters(out); }

  void set_training(bool on) override {
    this->training_ = on;
    net_.set_training(on);
  }

  void set_grad_enabled(bool on) override {
    this->grad_enabled_ = on;
    net_.set_grad_enabled(on);
  }

  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  DiscriminatorSpec spec_;
  nn::Sequential<T> net_;
};

/// Conditional score D(cartoon || candidate).
template <typename T>
Tensor<T> discriminate(Module<T>& d, const Tensor<T>& cartoon, const Tensor<T>& candidate) {
  require_same_shape(cartoon, candidate, "discriminate");
  return d.forward(concat_channels(cartoon, candidate));
}

/// Gaussian(0, 0.02) convolution weights, Gaussian(1, 0.02) norm scales, zero
/// biases and shifts, fresh running statistics.
template <typename T>
void init_weights(Module<T>& net, std::uint64_t seed, double stddev = 0.02) {
  Rng rng(seed);
  for (Parameter<T>* p : net.parameters()) {
    switch (p->kind) {
      case ParamKind::ConvWeight:
        for (auto& v : p->value.storage()) v = static_cast<T>(rng.normal(0.0, stddev));
        break;
      case ParamKind::NormScale:
        for (auto& v : p->value.storage()) v = static_cast<T>(rng.normal(1.0, stddev));
        break;
      case ParamKind::Bias:
      case ParamKind::NormShift:
      case ParamKind::RunningMean:
        p->value.fill(T(0));
        break;
      case ParamKind::RunningVar:
        p->value.fill(T(1));
        break;
    }
    p->grad.fill(T(0));
  }
}

}  // namespace toon2real::models
