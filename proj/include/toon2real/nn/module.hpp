#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "toon2real/error.hpp"
#include "toon2real/tensor.hpp"

namespace toon2real::nn {

enum class ParamKind { ConvWeight, Bias, NormScale, NormShift, RunningMean, RunningVar };

/// A named learnable tensor (or a persistent statistics buffer) with its gradient.
template <typename T>
struct Parameter {
  std::string name;
  ParamKind kind;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, ParamKind k, Shape s, T fill = T{})
      : name(std::move(n)), kind(k), value(s, fill), grad(s, T{}) {}

  bool trainable() const { return kind != ParamKind::RunningMean && kind != ParamKind::RunningVar; }
};

/// Layer with an explicit backward pass. forward() caches what backward() needs;
/// backward() returns the input gradient and accumulates into parameter gradients.
/// A module holds one cached forward at a time.
template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
  virtual void set_training(bool on) { training_ = on; }
  /// With gradients disabled forward() keeps no caches (inference memory footprint).
  virtual void set_grad_enabled(bool on) { grad_enabled_ = on; }
  virtual void reseed_noise(std::uint64_t /*seed*/) {}

  bool training() const { return training_; }
  bool grad_enabled() const { return grad_enabled_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_parameters(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.fill(T{});
  }

 protected:
  void require_cache(bool present, const char* layer) const {
    if (!present) {
      fail(ErrorCategory::UsageError, std::string(layer) + ": backward without a cached forward");
    }
  }

  bool training_ = true;
  bool grad_enabled_ = true;
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

}  // namespace toon2real::nn
