#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "toon2real/imaging.hpp"

namespace toon2real::cartoon {

/// Parameters of one cartoonization variant. Intensities are on the unit scale.
struct CartoonStyle {
  int median_kernel = 7;
  int edge_block_size = 9;
  double edge_bias = 2.0 / 255.0;
  int bilateral_iterations = 7;
  int bilateral_diameter = 9;
  double bilateral_sigma_color = 9.0 / 255.0;
  double bilateral_sigma_space = 7.0;
  int downsample_steps = 1;
  int quant_levels = 24;
  double gray_mix = 0.0;

  void validate() const {
    auto odd_at_least_3 = [](int v) { return v >= 3 && v % 2 == 1; };
    if (!odd_at_least_3(median_kernel)) fail(ErrorCategory::ConfigError, "median_kernel must be odd and >= 3");
    if (!odd_at_least_3(edge_block_size)) fail(ErrorCategory::ConfigError, "edge_block_size must be odd and >= 3");
    if (bilateral_iterations < 1) fail(ErrorCategory::ConfigError, "bilateral_iterations must be >= 1");
    if (bilateral_diameter < 1) fail(ErrorCategory::ConfigError, "bilateral_diameter must be >= 1");
    if (quant_levels < 2 || quant_levels > 64) fail(ErrorCategory::ConfigError, "quant_levels must be in [2, 64]");
    if (gray_mix < 0.0 || gray_mix > 1.0) fail(ErrorCategory::ConfigError, "gray_mix must be in [0, 1]");
    if (downsample_steps < 0) fail(ErrorCategory::ConfigError, "downsample_steps must be >= 0");
  }
};

inline constexpr std::size_t kStyleCount = 4;

/// Built-in presets. 0 is the baseline; 1 is heavier blur, 2 is half gray,
/// 3 is flatter color (fewer levels, more smoothing).
inline CartoonStyle preset(std::size_t id) {
  CartoonStyle s;
  switch (id) {
    case 0: break;
    case 1: s.median_kernel = 15; break;
    case 2: s.gray_mix = 0.5; break;
    case 3:
      s.quant_levels = 8;
      s.bilateral_iterations = 14;
      break;
    default: fail(ErrorCategory::ConfigError, "unknown cartoon style " + std::to_string(id));
  }
  return s;
}

/// 1 = keep colour, 0 = edge (painted black).
struct BinaryMask {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t count_zeros() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 0)); }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

namespace detail {

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

/// Single-plane median filter with replicated borders.
inline std::vector<double> median_blur(const std::vector<double>& src, std::size_t h, std::size_t w, int k) {
  const int r = k / 2;
  std::vector<double> out(src.size()), window(static_cast<std::size_t>(k * k));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const std::size_t yy = clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h);
        for (int dx = -r; dx <= r; ++dx) {
          window[n++] = src[yy * w + clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w)];
        }
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(n / 2);
      std::nth_element(window.begin(), mid, window.end());
      out[y * w + x] = *mid;
    }
  }
  return out;
}

/// b x b box mean with replicated borders.
inline std::vector<double> box_mean(const std::vector<double>& src, std::size_t h, std::size_t w, int b) {
  const int r = b / 2;
  // Horizontal then vertical running sums over the clamped neighbourhood.
  std::vector<double> tmp(src.size()), out(src.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dx = -r; dx <= r; ++dx) s += src[y * w + clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w)];
      tmp[y * w + x] = s;
    }
  }
  const double area = static_cast<double>(b) * static_cast<double>(b);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -r; dy <= r; ++dy) s += tmp[clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h) * w + x];
      out[y * w + x] = s / area;
    }
  }
  return out;
}

/// Edge-preserving smoothing. Colour distance is the L1 sum over channels;
/// the window is the disc of radius diameter/2.
inline ImageTensor bilateral(const ImageTensor& img, int diameter, double sigma_color, double sigma_space) {
  const int r = std::max(diameter / 2, 1);
  struct Offset {
    int dy, dx;
    double w;
  };
  std::vector<Offset> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dy * dy + dx * dx <= r * r)
        offsets.push_back({dy, dx, std::exp(-(dy * dy + dx * dx) / (2.0 * sigma_space * sigma_space))});
  const double color_coeff = -0.5 / (sigma_color * sigma_color);
  const std::size_t h = img.height(), w = img.width(), C = img.channels();
  ImageTensor out(C, h, w, img.range());
  std::vector<double> acc(C);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      double wsum = 0.0;
      for (const auto& o : offsets) {
        const std::size_t yy = clamp_index(static_cast<std::ptrdiff_t>(y) + o.dy, h);
        const std::size_t xx = clamp_index(static_cast<std::ptrdiff_t>(x) + o.dx, w);
        double dist = 0.0;
        for (std::size_t c = 0; c < C; ++c) dist += std::abs(img.at(c, yy, xx) - img.at(c, y, x));
        const double wt = o.w * std::exp(dist * dist * color_coeff);
        wsum += wt;
        for (std::size_t c = 0; c < C; ++c) acc[c] += wt * img.at(c, yy, xx);
      }
      for (std::size_t c = 0; c < C; ++c) out.at(c, y, x) = acc[c] / wsum;
    }
  }
  return out;
}

inline std::vector<double> gray_plane(const ImageTensor& img) {
  std::vector<double> g(img.plane());
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      g[y * img.width() + x] = luma(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
  return g;
}

}  // namespace detail

/// Grayscale -> median blur -> adaptive mean threshold. A pixel keeps its
/// colour when it is brighter than its local mean minus edge_bias.
inline BinaryMask edge_mask(const ImageTensor& img, const CartoonStyle& style) {
  require_rgb_unit(img, "edge_mask");
  style.validate();
  const auto block = static_cast<std::size_t>(style.edge_block_size);
  if (img.height() < block || img.width() < block) {
    fail(ErrorCategory::InvalidImage, "image " + shape_string(img) + " smaller than edge block");
  }
  const std::size_t h = img.height(), w = img.width();
  const auto blurred = detail::median_blur(detail::gray_plane(img), h, w, style.median_kernel);
  const auto mean = detail::box_mean(blurred, h, w, style.edge_block_size);
  BinaryMask mask{h, w, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < h * w; ++i) mask.data[i] = blurred[i] > mean[i] - style.edge_bias ? 1 : 0;
  return mask;
}

/// Uniform quantization to `levels` values per channel on [0, 1].
inline double quantize_level(double v, int levels) {
  const double steps = levels - 1;
  return std::round(std::clamp(v, 0.0, 1.0) * steps) / steps;
}

/// Downsample, repeated bilateral smoothing, upsample, quantize, gray blend.
inline ImageTensor color_simplify(const ImageTensor& img, const CartoonStyle& style) {
  require_rgb_unit(img, "color_simplify");
  style.validate();
  ImageTensor small = img;
  for (int i = 0; i < style.downsample_steps; ++i) {
    small = resize_bilinear(small, std::max<std::size_t>(small.height() / 2, 1),
                            std::max<std::size_t>(small.width() / 2, 1));
  }
  for (int i = 0; i < style.bilateral_iterations; ++i) {
    small = detail::bilateral(small, style.bilateral_diameter, style.bilateral_sigma_color, style.bilateral_sigma_space);
  }
  ImageTensor out = resize_bilinear(small, img.height(), img.width());
  for (std::size_t y = 0; y < out.height(); ++y) {
    for (std::size_t x = 0; x < out.width(); ++x) {
      std::array<double, 3> q{};
      for (std::size_t c = 0; c < 3; ++c) q[c] = quantize_level(out.at(c, y, x), style.quant_levels);
      const double g = luma(q[0], q[1], q[2]);
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = (1.0 - style.gray_mix) * q[c] + style.gray_mix * g;
    }
  }
  return out;
}

/// color_simplify with the edge_mask zeros painted black.
inline ImageTensor cartoonize(const ImageTensor& img, const CartoonStyle& style) {
  const BinaryMask mask = edge_mask(img, style);
  ImageTensor out = color_simplify(img, style);
  for (std::size_t y = 0; y < out.height(); ++y)
    for (std::size_t x = 0; x < out.width(); ++x)
      if (mask.at(y, x) == 0)
        for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = 0.0;
  return out;
}

/// The four preset cartoons, in preset order.
inline std::vector<ImageTensor> style_variants(const ImageTensor& img) {
  std::vector<ImageTensor> out;
  out.reserve(kStyleCount);
  for (std::size_t s = 0; s < kStyleCount; ++s) out.push_back(cartoonize(img, preset(s)));
  return out;
}

/// Number of distinct 8-bit RGB triples.
inline std::size_t distinct_colors(const ImageTensor& img) {
  std::vector<std::uint32_t> keys;
  keys.reserve(img.plane());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      std::uint32_t k = 0;
      for (std::size_t c = 0; c < img.channels(); ++c) k = (k << 8) | to_byte(img.at(c, y, x));
      keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

}  // namespace toon2real::cartoon
