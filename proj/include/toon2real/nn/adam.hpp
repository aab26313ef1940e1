#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "toon2real/nn/module.hpp"

namespace toon2real::nn {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias-corrected moments. Weight decay, when nonzero, is added to the
/// gradient (L2 form). Statistics buffers are never touched.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamOptions options) : options_(options) {
    for (auto* p : params) {
      if (!p->trainable()) continue;
      params_.push_back(p);
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::int64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

  void zero_grad() {
    for (auto* p : params_) p->grad.fill(T{});
  }

  void step() {
    ++t_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = options_.lr, eps = options_.epsilon, wd = options_.weight_decay;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      T* w = params_[k]->value.data();
      const T* g = params_[k]->grad.data();
      double* m = m_[k].data();
      double* v = v_[k].data();
      for (std::size_t i = 0; i < params_[k]->value.size(); ++i) {
        double gi = g[i];
        if (wd != 0.0) gi += wd * w[i];
        m[i] = b1 * m[i] + (1.0 - b1) * gi;
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
        const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        if (update != 0.0) w[i] = static_cast<T>(w[i] - update);
      }
    }
  }

  // Moment access for checkpointing.
  std::size_t slot_count() const { return params_.size(); }
  Parameter<T>& slot_param(std::size_t k) { return *params_[k]; }
  std::vector<double>& first_moment(std::size_t k) { return m_[k]; }
  std::vector<double>& second_moment(std::size_t k) { return v_[k]; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamOptions options_;
  std::vector<Parameter<T>*> params_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace toon2real::nn
