#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "toon2real/error.hpp"

namespace toon2real {

/// Batch-major NCHW extent.
struct Shape {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t count() const { return n * c * h * w; }
  std::size_t sample_size() const { return c * h * w; }
  std::size_t plane() const { return h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.n << "x" << s.c << "x" << s.h << "x" << s.w;
  return os.str();
}

/// Dense NCHW tensor with owning contiguous storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.count(), fill) {}
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{})
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T* sample(std::size_t i) { return data_.data() + i * shape_.sample_size(); }
  const T* sample(std::size_t i) const { return data_.data() + i * shape_.sample_size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Reinterpret the extent without touching storage.
  void reshape(Shape s) {
    if (s.count() != data_.size()) fail(ErrorCategory::ShapeError, "reshape changes element count");
    shape_ = s;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorCategory::ShapeError,
         std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

/// Channel-wise concatenation of two batches with equal N, H, W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    fail(ErrorCategory::ShapeError,
         "concat_channels: incompatible " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t sa = a.shape().sample_size(), sb = b.shape().sample_size();
  for (std::size_t i = 0; i < a.n(); ++i) {
    std::copy_n(a.sample(i), sa, out.sample(i));
    std::copy_n(b.sample(i), sb, out.sample(i) + sa);
  }
  return out;
}

/// Inverse of concat_channels: the first `first_channels` go to `a`, the rest to `b`.
template <typename T>
void split_channels(const Tensor<T>& x, std::size_t first_channels, Tensor<T>& a, Tensor<T>& b) {
  if (first_channels > x.c()) fail(ErrorCategory::ShapeError, "split_channels: too many channels");
  a = Tensor<T>(x.n(), first_channels, x.h(), x.w());
  b = Tensor<T>(x.n(), x.c() - first_channels, x.h(), x.w());
  const std::size_t sa = a.shape().sample_size(), sb = b.shape().sample_size();
  for (std::size_t i = 0; i < x.n(); ++i) {
    std::copy_n(x.sample(i), sa, a.sample(i));
    std::copy_n(x.sample(i) + sa, sb, b.sample(i));
  }
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  require_same_shape(dst, src, "add_inplace");
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

/// Rows [begin, begin + count) of the batch.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (begin + count > x.n()) fail(ErrorCategory::ShapeError, "slice_batch out of range");
  Tensor<T> out(count, x.c(), x.h(), x.w());
  std::copy_n(x.sample(begin), count * x.shape().sample_size(), out.data());
  return out;
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& x) {
  Tensor<To> out(x.shape());
  std::transform(x.data(), x.data() + x.size(), out.data(), [](From v) { return static_cast<To>(v); });
  return out;
}

}  // namespace toon2real
