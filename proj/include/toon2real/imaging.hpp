#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "toon2real/error.hpp"
#include "toon2real/rng.hpp"
#include "toon2real/tensor.hpp"

namespace toon2real {

enum class ValueRange { Unit, Signed };
enum class ColorSpace { Rgb, Gray };

/// Channel-major C x H x W image with an explicit value range tag.
class ImageTensor {
 public:
  ImageTensor() = default;

  ImageTensor(std::size_t channels, std::size_t height, std::size_t width, ValueRange range = ValueRange::Unit,
              double fill = 0.0)
      : channels_(channels), height_(height), width_(width), range_(range),
        color_(channels == 1 ? ColorSpace::Gray : ColorSpace::Rgb), data_(channels * height * width, fill) {
    if (channels != 1 && channels != 3) fail(ErrorCategory::InvalidImage, "image must have 1 or 3 channels");
    if (height < 1 || width < 1) fail(ErrorCategory::InvalidImage, "image extent must be at least 1x1");
  }

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  ValueRange range() const { return range_; }
  ColorSpace color_space() const { return color_; }
  void set_range(ValueRange r) { range_ = r; }

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * height_ + y) * width_ + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * height_ + y) * width_ + x]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double lower_bound() const { return range_ == ValueRange::Unit ? 0.0 : -1.0; }

  /// True when every element lies inside the declared range.
  bool values_in_range() const {
    const double lo = lower_bound();
    return std::all_of(data_.begin(), data_.end(), [lo](double v) { return v >= lo && v <= 1.0; });
  }

  bool same_shape(const ImageTensor& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const ImageTensor& a, const ImageTensor& b) {
    return a.same_shape(b) && a.range_ == b.range_ && a.data_ == b.data_;
  }

 private:
  std::size_t channels_ = 0, height_ = 0, width_ = 0;
  ValueRange range_ = ValueRange::Unit;
  ColorSpace color_ = ColorSpace::Rgb;
  std::vector<double> data_;
};

inline std::string shape_string(const ImageTensor& img) {
  return std::to_string(img.channels()) + "x" + std::to_string(img.height()) + "x" + std::to_string(img.width());
}

inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

inline void require_rgb_unit(const ImageTensor& img, const char* what) {
  if (img.channels() != 3) fail(ErrorCategory::InvalidImage, std::string(what) + ": expected an rgb image");
  if (img.range() != ValueRange::Unit) fail(ErrorCategory::RangeError, std::string(what) + ": expected unit range");
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

namespace detail {

inline bool has_png_or_jpeg_magic(const std::vector<unsigned char>& bytes) {
  static constexpr unsigned char png[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::equal(std::begin(png), std::end(png), bytes.begin())) return true;
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

}  // namespace detail

/// Decode a PNG or JPEG into an rgb unit-range image. Gray sources are
/// replicated to three channels; alpha is dropped.
inline ImageTensor load_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) fail(ErrorCategory::NotFound, "no such image: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!detail::has_png_or_jpeg_magic(bytes)) fail(ErrorCategory::DecodeError, "not a PNG or JPEG: " + path.string());
  cv::Mat mat;
  try {
    mat = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    mat = cv::Mat();
  }
  if (mat.empty()) fail(ErrorCategory::DecodeError, "cannot decode image: " + path.string());

  const double max_value = mat.depth() == CV_16U ? 65535.0 : 255.0;
  if (mat.depth() != CV_8U && mat.depth() != CV_16U) {
    fail(ErrorCategory::DecodeError, "unsupported sample depth: " + path.string());
  }
  cv::Mat f;
  mat.convertTo(f, CV_64F);
  const int ch = f.channels();
  ImageTensor img(3, static_cast<std::size_t>(f.rows), static_cast<std::size_t>(f.cols));
  for (int y = 0; y < f.rows; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < f.cols; ++x) {
      const double* px = row + x * ch;
      double r, g, b;
      if (ch <= 2) {
        r = g = b = px[0] / max_value;
      } else {
        // OpenCV delivers BGR(A).
        b = px[0] / max_value;
        g = px[1] / max_value;
        r = px[2] / max_value;
      }
      img.at(0, y, x) = std::clamp(r, 0.0, 1.0);
      img.at(1, y, x) = std::clamp(g, 0.0, 1.0);
      img.at(2, y, x) = std::clamp(b, 0.0, 1.0);
    }
  }
  return img;
}

/// 8-bit quantization used for PNG output: round(v * 255) after clamping.
inline unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline cv::Mat to_mat8(const ImageTensor& img) {
  if (img.range() != ValueRange::Unit) fail(ErrorCategory::RangeError, "only unit-range images can be encoded");
  const int h = static_cast<int>(img.height()), w = static_cast<int>(img.width());
  if (img.channels() == 1) {
    cv::Mat m(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.at<unsigned char>(y, x) = to_byte(img.at(0, y, x));
    return m;
  }
  cv::Mat m(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto& px = m.at<cv::Vec3b>(y, x);
      px[0] = to_byte(img.at(2, y, x));
      px[1] = to_byte(img.at(1, y, x));
      px[2] = to_byte(img.at(0, y, x));
    }
  }
  return m;
}

inline void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), to_mat8(img), params)) fail(ErrorCategory::IoError, "cannot write " + path.string());
}

/// Round-trip through 8-bit storage without touching disk.
inline ImageTensor quantize_8bit(const ImageTensor& img) {
  ImageTensor out = img;
  for (auto& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Bilinear resampling with half-pixel centres and edge clamping. Equal
/// extents return an exact copy.
inline ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w) {
  if (out_h < 1 || out_w < 1) fail(ErrorCategory::InvalidImage, "resize target must be at least 1x1");
  if (out_h == img.height() && out_w == img.width()) return img;
  ImageTensor out(img.channels(), out_h, out_w, img.range());
  const double sy = static_cast<double>(img.height()) / static_cast<double>(out_h);
  const double sx = static_cast<double>(img.width()) / static_cast<double>(out_w);
  const auto max_y = static_cast<double>(img.height() - 1), max_x = static_cast<double>(img.width() - 1);

  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  auto taps = [](std::size_t n, double scale, double max_v) {
    std::vector<Tap> t(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double src = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, max_v);
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, static_cast<std::size_t>(max_v));
      t[i] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(out_h, sy, max_y), tx = taps(out_w, sx, max_x);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const double top = img.at(c, a.i0, b.i0) * (1.0 - b.f) + img.at(c, a.i0, b.i1) * b.f;
        const double bot = img.at(c, a.i1, b.i0) * (1.0 - b.f) + img.at(c, a.i1, b.i1) * b.f;
        out.at(c, y, x) = top * (1.0 - a.f) + bot * a.f;
      }
    }
  }
  return out;
}

inline ImageTensor crop(const ImageTensor& img, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > img.height() || left + w > img.width()) fail(ErrorCategory::InvalidImage, "crop outside image");
  ImageTensor out(img.channels(), h, w, img.range());
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, top + y, left + x);
  return out;
}

inline ImageTensor flip_horizontal(const ImageTensor& img) {
  ImageTensor out(img.channels(), img.height(), img.width(), img.range());
  for (std::size_t c = 0; c < img.channels(); ++c)
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < img.width(); ++x) out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
  return out;
}

/// Training-time augmentation: resize to load_size, random crop_size crop,
/// coin-flip mirror. Disabled means a plain resize to crop_size.
struct JitterConfig {
  bool enabled = false;
  std::size_t load_size = 286;
  std::size_t crop_size = 256;

  /// Standard 286/256 load-to-crop ratio for an arbitrary crop size.
  static JitterConfig for_size(std::size_t crop, bool enabled) {
    return {enabled, (crop * 286 + 128) / 256, crop};
  }
};

inline ImageTensor prepare_input(const ImageTensor& img, const JitterConfig& jitter, std::uint64_t rng_seed) {
  require_rgb_unit(img, "prepare_input");
  if (img.height() < 2 || img.width() < 2) {
    fail(ErrorCategory::InvalidImage, "degenerate image " + shape_string(img));
  }
  if (!jitter.enabled) return resize_bilinear(img, jitter.crop_size, jitter.crop_size);
  if (jitter.load_size < jitter.crop_size) fail(ErrorCategory::ConfigError, "load_size smaller than crop_size");
  Rng rng(rng_seed);
  const std::size_t slack = jitter.load_size - jitter.crop_size;
  const auto top = static_cast<std::size_t>(rng.below(slack + 1));
  const auto left = static_cast<std::size_t>(rng.below(slack + 1));
  const bool flip = rng.uniform() < 0.5;
  ImageTensor out = crop(resize_bilinear(img, jitter.load_size, jitter.load_size), top, left, jitter.crop_size,
                         jitter.crop_size);
  return flip ? flip_horizontal(out) : out;
}

/// v -> 2v - 1.
inline ImageTensor normalize(const ImageTensor& img) {
  if (img.range() != ValueRange::Unit) fail(ErrorCategory::RangeError, "normalize expects a unit-range image");
  ImageTensor out = img;
  for (auto& v : out.data()) v = 2.0 * v - 1.0;
  out.set_range(ValueRange::Signed);
  return out;
}

/// v -> (v + 1) / 2.
inline ImageTensor denormalize(const ImageTensor& img) {
  if (img.range() != ValueRange::Signed) fail(ErrorCategory::RangeError, "denormalize expects a signed-range image");
  ImageTensor out = img;
  for (auto& v : out.data()) v = (v + 1.0) * 0.5;
  out.set_range(ValueRange::Unit);
  return out;
}

// ---------------------------------------------------------------------------
// Network batches
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> to_batch(std::span<const ImageTensor> images) {
  if (images.empty()) fail(ErrorCategory::ShapeError, "empty batch");
  const ImageTensor& first = images.front();
  Tensor<T> out(images.size(), first.channels(), first.height(), first.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(first)) fail(ErrorCategory::ShapeError, "batch images differ in shape");
    std::transform(images[i].data().begin(), images[i].data().end(), out.sample(i),
                   [](double v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
ImageTensor from_batch(const Tensor<T>& batch, std::size_t index, ValueRange range) {
  ImageTensor out(batch.c(), batch.h(), batch.w(), range);
  std::transform(batch.sample(index), batch.sample(index) + batch.shape().sample_size(), out.data().begin(),
                 [](T v) { return static_cast<double>(v); });
  return out;
}

/// Side-by-side composite: a occupies columns [0, W), b occupies [W, 2W).
inline ImageTensor hconcat(std::span<const ImageTensor> panels) {
  if (panels.empty()) fail(ErrorCategory::ShapeError, "hconcat of nothing");
  const ImageTensor& f = panels.front();
  ImageTensor out(f.channels(), f.height(), f.width() * panels.size(), f.range());
  for (std::size_t p = 0; p < panels.size(); ++p) {
    if (!panels[p].same_shape(f)) fail(ErrorCategory::ShapeError, "hconcat panels differ in shape");
    for (std::size_t c = 0; c < f.channels(); ++c)
      for (std::size_t y = 0; y < f.height(); ++y)
        for (std::size_t x = 0; x < f.width(); ++x) out.at(c, y, p * f.width() + x) = panels[p].at(c, y, x);
  }
  return out;
}

}  // namespace toon2real
