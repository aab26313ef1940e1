#pragma once

#include <algorithm>
#include <cmath>

#include "toon2real/tensor.hpp"

namespace toon2real::losses {

/// Scalar loss with its gradient w.r.t. the (first) tensor argument.
template <typename T>
struct Loss {
  double value = 0.0;
  Tensor<T> grad;
};

/// Two-sided discriminator loss; `real` and `fake` are the unhalved per-label terms.
template <typename T>
struct DiscriminatorLoss {
  double value = 0.0;
  double real = 0.0;
  double fake = 0.0;
  Tensor<T> grad_real;
  Tensor<T> grad_fake;
};

/// Mean sigmoid cross-entropy of logits against a constant label, in the
/// overflow-safe form max(x,0) - x*y + log(1 + exp(-|x|)).
template <typename T>
Loss<T> bce_with_logits(const Tensor<T>& logits, double label) {
  Loss<T> out{0.0, Tensor<T>(logits.shape())};
  const double n = static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    sum += std::max(x, 0.0) - x * label + std::log1p(std::exp(-std::abs(x)));
    const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    out.grad[i] = static_cast<T>((s - label) / n);
  }
  out.value = sum / n;
  return out;
}

template <typename T>
Loss<T> mse_to_label(const Tensor<T>& pred, double label) {
  Loss<T> out{0.0, Tensor<T>(pred.shape())};
  const double n = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - label;
    sum += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = sum / n;
  return out;
}

namespace detail {

template <typename T, typename Term>
DiscriminatorLoss<T> halved_pair(const Tensor<T>& real_logits, const Tensor<T>& fake_logits, Term term) {
  require_same_shape(real_logits, fake_logits, "discriminator loss");
  Loss<T> r = term(real_logits, 1.0);
  Loss<T> f = term(fake_logits, 0.0);
  for (auto& g : r.grad.storage()) g *= T(0.5);
  for (auto& g : f.grad.storage()) g *= T(0.5);
  return {0.5 * (r.value + f.value), r.value, f.value, std::move(r.grad), std::move(f.grad)};
}

}  // namespace detail

/// 0.5 * (BCE(real, 1) + BCE(fake, 0)), averaged over patches and batch.
template <typename T>
DiscriminatorLoss<T> gan_loss_discriminator(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  return detail::halved_pair(real_logits, fake_logits,
                             [](const Tensor<T>& x, double y) { return bce_with_logits(x, y); });
}

/// Non-saturating generator loss BCE(fake, 1) = -log sigmoid(fake).
template <typename T>
Loss<T> gan_loss_generator(const Tensor<T>& fake_logits) {
  return bce_with_logits(fake_logits, 1.0);
}

/// Least-squares flavour used in unpaired mode: 0.5 * (MSE(real, 1) + MSE(fake, 0)).
template <typename T>
DiscriminatorLoss<T> lsgan_loss_discriminator(const Tensor<T>& real_out, const Tensor<T>& fake_out) {
  return detail::halved_pair(real_out, fake_out, [](const Tensor<T>& x, double y) { return mse_to_label(x, y); });
}

template <typename T>
Loss<T> lsgan_loss_generator(const Tensor<T>& fake_out) {
  return mse_to_label(fake_out, 1.0);
}

/// weight * mean |a - b|; gradient is w.r.t. `a`.
template <typename T>
Loss<T> weighted_l1(const Tensor<T>& a, const Tensor<T>& b, double weight, const char* what) {
  require_same_shape(a, b, what);
  Loss<T> out{0.0, Tensor<T>(a.shape())};
  const double n = static_cast<double>(a.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += std::abs(d);
    out.grad[i] = static_cast<T>(weight * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n);
  }
  out.value = weight * sum / n;
  return out;
}

/// lambda * mean |generated - target|; gradient w.r.t. `generated`.
template <typename T>
Loss<T> l1_term(const Tensor<T>& generated, const Tensor<T>& target, double lambda_l1) {
  return weighted_l1(generated, target, lambda_l1, "l1_term");
}

/// lambda * mean |x - reconstruction|; gradient w.r.t. `reconstruction`.
template <typename T>
Loss<T> cycle_loss(const Tensor<T>& x, const Tensor<T>& reconstruction, double lambda_cycle) {
  return weighted_l1(reconstruction, x, lambda_cycle, "cycle_loss");
}

}  // namespace toon2real::losses
