#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "toon2real/imaging.hpp"
#include "toon2real/rng.hpp"

namespace toon2real::synth {

/// Axis-aligned rectangle in pixel units.
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;
  double area() const { return w * h; }
};

struct FaceOptions {
  std::size_t size = 256;
  int label = 0;            // 0 = short hair, 1 = long hair
  double face_scale = 1.0;  // < 0.5 gives a low face-to-image ratio
  bool grayscale = false;
};

struct SyntheticFace {
  ImageTensor image;
  Rect face_bbox;
  int label = 0;
};

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

/// Soft coverage of an ellipse; ~1 px anti-aliased rim.
inline double ellipse_cover(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  const double d = std::sqrt(dx * dx + dy * dy);
  const double rim = 1.0 / std::max(std::min(rx, ry), 1.0);
  return 1.0 - smoothstep(1.0 - rim, 1.0 + rim, d);
}

inline double rect_cover(double x, double y, double x0, double y0, double x1, double y1) {
  return (1.0 - smoothstep(-0.5, 0.5, x0 - x)) * (1.0 - smoothstep(-0.5, 0.5, x - x1)) *
         (1.0 - smoothstep(-0.5, 0.5, y0 - y)) * (1.0 - smoothstep(-0.5, 0.5, y - y1));
}

using Rgb = std::array<double, 3>;

inline void blend(Rgb& dst, const Rgb& src, double a) {
  for (int c = 0; c < 3; ++c) dst[c] = dst[c] * (1.0 - a) + src[c] * a;
}

inline Rgb jitter_color(Rng& rng, Rgb base, double amount) {
  for (auto& v : base) v = std::clamp(v + rng.uniform(-amount, amount), 0.05, 0.95);
  return base;
}

}  // namespace detail

/// Procedural portrait: shaded background, skin-toned face, hair, eyes, mouth,
/// shirt, plus fine sensor-like noise. Deterministic in `seed`.
inline SyntheticFace make_face(const FaceOptions& opt, std::uint64_t seed) {
  using detail::Rgb;
  Rng rng(seed);
  const double S = static_cast<double>(opt.size);
  static constexpr std::array<Rgb, 4> skins{{{0.93, 0.76, 0.65}, {0.80, 0.60, 0.46}, {0.62, 0.44, 0.32},
                                             {0.45, 0.31, 0.22}}};
  static constexpr std::array<Rgb, 4> hairs{{{0.12, 0.09, 0.07}, {0.35, 0.22, 0.12}, {0.70, 0.55, 0.30},
                                             {0.30, 0.30, 0.32}}};
  const Rgb bg_top = detail::jitter_color(rng, {0.55, 0.65, 0.80}, 0.3);
  const Rgb bg_bot = detail::jitter_color(rng, {0.35, 0.40, 0.50}, 0.3);
  const Rgb skin = detail::jitter_color(rng, skins[rng.below(skins.size())], 0.04);
  const Rgb hair = detail::jitter_color(rng, hairs[rng.below(hairs.size())], 0.04);
  const Rgb shirt = detail::jitter_color(rng, {0.3, 0.4, 0.6}, 0.3);
  const Rgb lips{0.70, 0.30, 0.30};
  const Rgb eye{0.10, 0.08, 0.08};

  const double scale = opt.face_scale;
  const double cx = S * rng.uniform(0.46, 0.54);
  const double cy = S * rng.uniform(0.48, 0.54);
  const double rx = S * scale * rng.uniform(0.20, 0.25);
  const double ry = S * scale * rng.uniform(0.27, 0.31);
  const double eye_dx = rx * 0.42, eye_y = cy - ry * 0.15, eye_r = std::max(rx * 0.12, 0.8);
  const double mouth_y = cy + ry * 0.48;
  const double light = rng.uniform(0.0, 1.0);
  // Low-frequency background texture.
  const double fx = rng.uniform(1.0, 3.0) / S, fy = rng.uniform(1.0, 3.0) / S, ph = rng.uniform(0.0, 6.28);

  SyntheticFace out;
  out.label = opt.label;
  out.face_bbox = {cx - rx, cy - ry, 2.0 * rx, 2.0 * ry};
  out.image = ImageTensor(3, opt.size, opt.size);
  for (std::size_t yi = 0; yi < opt.size; ++yi) {
    for (std::size_t xi = 0; xi < opt.size; ++xi) {
      const double x = static_cast<double>(xi) + 0.5, y = static_cast<double>(yi) + 0.5;
      const double t = y / S;
      Rgb px;
      const double wave = 0.05 * std::sin(6.28 * (fx * x * 3.0 + fy * y * 2.0) + ph);
      for (int c = 0; c < 3; ++c) px[c] = bg_top[c] * (1.0 - t) + bg_bot[c] * t + wave;

      // Shoulders / shirt.
      detail::blend(px, shirt, detail::ellipse_cover(x, y, cx, cy + ry * 2.1, rx * 2.2, ry * 1.0));
      // Long hair falls behind the face down to the shoulders.
      if (opt.label == 1) {
        detail::blend(px, hair, detail::rect_cover(x, y, cx - rx * 1.25, cy - ry * 0.6, cx + rx * 1.25, cy + ry * 1.4));
      }
      detail::blend(px, hair, detail::ellipse_cover(x, y, cx, cy - ry * 0.25, rx * 1.12, ry * 0.95));
      // Face with directional shading.
      const double face = detail::ellipse_cover(x, y, cx, cy + ry * 0.08, rx, ry * 0.92);
      if (face > 0.0) {
        const double shade = 1.0 + 0.12 * ((light - 0.5) * (x - cx) / rx - 0.5 * (y - cy) / ry);
        Rgb sk = skin;
        for (auto& v : sk) v = std::clamp(v * shade, 0.0, 1.0);
        detail::blend(px, sk, face);
      }
      detail::blend(px, eye, detail::ellipse_cover(x, y, cx - eye_dx, eye_y, eye_r * 1.3, eye_r));
      detail::blend(px, eye, detail::ellipse_cover(x, y, cx + eye_dx, eye_y, eye_r * 1.3, eye_r));
      detail::blend(px, lips, detail::ellipse_cover(x, y, cx, mouth_y, rx * 0.32, std::max(ry * 0.07, 0.8)));

      for (int c = 0; c < 3; ++c) px[c] = std::clamp(px[c] + rng.normal(0.0, 0.015), 0.0, 1.0);
      if (opt.grayscale) {
        const double g = luma(px[0], px[1], px[2]);
        px = {g, g, g};
      }
      for (std::size_t c = 0; c < 3; ++c) out.image.at(c, yi, xi) = px[c];
    }
  }
  return out;
}

}  // namespace toon2real::synth
