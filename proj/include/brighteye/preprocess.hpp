// Copyright 2026 The Brighteye Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Image preprocessing: disc-centred ROI crop, background removal, bilinear
// resize and the training-time augmentation chain. All operations are pure
// functions of their inputs; randomness enters only through AugmentDraws.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <variant>

#include "brighteye/detection.hpp"
#include "brighteye/image.hpp"
#include "brighteye/tensor.hpp"

namespace brighteye {

class InvalidDetection : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Square crop window. Covers x in [x0, x0 + side - 1], y likewise.
struct RoiBox {
  double cx = 0.0;
  double cy = 0.0;
  int side = 0;
  int x0 = 0;
  int y0 = 0;
};

/// Side is round((w + h) / 2 * 3), ties away from zero, centred on the disc.
inline RoiBox roi_box(const DiscDetection& det) {
  if (!(det.w > 0.0) || !(det.h > 0.0) || !std::isfinite(det.w + det.h + det.cx + det.cy)) {
    throw InvalidDetection("crop_roi: detection extents must be positive and finite");
  }
  RoiBox box;
  box.cx = det.cx;
  box.cy = det.cy;
  box.side = static_cast<int>(std::lround((det.w + det.h) / 2.0 * 3.0));
  if (box.side < 1) box.side = 1;
  box.x0 = static_cast<int>(std::floor(det.cx - box.side / 2.0 + 0.5));
  box.y0 = static_cast<int>(std::floor(det.cy - box.side / 2.0 + 0.5));
  return box;
}

/// Crops the ROI; parts of the window outside the image are zero.
inline Image8 crop_roi(const Image8& image, const DiscDetection& det) {
  const RoiBox box = roi_box(det);
  Image8 out(box.side, box.side, 0);
  const int x_lo = std::max(0, -box.x0), x_hi = std::min(box.side, image.width - box.x0);
  const int y_lo = std::max(0, -box.y0), y_hi = std::min(box.side, image.height - box.y0);
  if (x_lo >= x_hi) return out;
  for (int y = y_lo; y < y_hi; ++y) {
    std::copy_n(image.at(box.x0 + x_lo, box.y0 + y), static_cast<std::size_t>(x_hi - x_lo) * 3,
                out.at(x_lo, y));
  }
  return out;
}

inline constexpr std::uint8_t kDefaultBackgroundThreshold = 10;

/// Zeroes the 4-connected region of pixels with max(R,G,B) < tau that
/// touches the image border.
inline Image8 remove_background(const Image8& image,
                                std::uint8_t tau = kDefaultBackgroundThreshold) {
  Image8 out = image;
  const int w = image.width, h = image.height;
  auto dark = [&](int x, int y) {
    const auto* p = image.at(x, y);
    return std::max({p[0], p[1], p[2]}) < tau;
  };
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(w) * h, 0);
  std::deque<std::pair<int, int>> queue;
  auto push = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    auto& v = visited[static_cast<std::size_t>(y) * w + x];
    if (v || !dark(x, y)) return;
    v = 1;
    queue.emplace_back(x, y);
  };
  for (int x = 0; x < w; ++x) {
    push(x, 0);
    push(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    push(0, y);
    push(w - 1, y);
  }
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    auto* p = out.at(x, y);
    p[0] = p[1] = p[2] = 0;
    push(x + 1, y);
    push(x - 1, y);
    push(x, y + 1);
    push(x, y - 1);
  }
  return out;
}

/// Bilinear resampling with half-pixel centres, edge-clamped, rounded to
/// the nearest 8-bit value.
inline Image8 resize_bilinear(const Image8& image, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize_bilinear: target must be positive");
  if (image.empty()) throw std::invalid_argument("resize_bilinear: empty source image");
  Image8 out(out_w, out_h);
  const double sx = static_cast<double>(image.width) / out_w;
  const double sy = static_cast<double>(image.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0)[c] * (1 - tx) + image.at(x1, y0)[c] * tx;
        const double bottom = image.at(x0, y1)[c] * (1 - tx) + image.at(x1, y1)[c] * tx;
        const double v = top * (1 - ty) + bottom * ty;
        out.at(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

inline Image8 resize_bilinear(const Image8& image, int target) {
  return resize_bilinear(image, target, target);
}

inline Image8 flip_horizontal(const Image8& image) {
  Image8 out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      std::copy_n(image.at(image.width - 1 - x, y), 3, out.at(x, y));
  return out;
}

inline Image8 flip_vertical(const Image8& image) {
  Image8 out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    std::copy_n(image.at(0, image.height - 1 - y), static_cast<std::size_t>(image.width) * 3,
                out.at(0, y));
  return out;
}

/// Rotates by `degrees` (counter-clockwise on screen) about the image centre.
/// Bilinear sampling; samples outside the source read as zero.
inline Image8 rotate(const Image8& image, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double mx = (image.width - 1) / 2.0, my = (image.height - 1) / 2.0;
  Image8 out(image.width, image.height);
  auto sample = [&](int x, int y, int ch) -> double {
    if (x < 0 || y < 0 || x >= image.width || y >= image.height) return 0.0;
    return image.at(x, y)[ch];
  };
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double dx = x - mx, dy = y - my;
      // Inverse mapping: screen y points down, so a CCW turn uses +s on y.
      const double src_x = c * dx - s * dy + mx;
      const double src_y = s * dx + c * dy + my;
      const double fx = std::floor(src_x), fy = std::floor(src_y);
      const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
      const double tx = src_x - fx, ty = src_y - fy;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (sample(ix, iy, ch) * (1 - tx) + sample(ix + 1, iy, ch) * tx) * (1 - ty) +
                         (sample(ix, iy + 1, ch) * (1 - tx) + sample(ix + 1, iy + 1, ch) * tx) * ty;
        out.at(x, y)[ch] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  return out;
}

namespace detail {

inline std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double hi = std::max({r, g, b}), lo = std::min({r, g, b});
  const double delta = hi - lo;
  double h = 0.0;
  if (delta > 0.0) {
    if (hi == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (hi == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
  }
  const double s = hi > 0.0 ? delta / hi : 0.0;
  return {h, s, hi};
}

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace detail

/// Scales saturation and brightness (value) in HSV, clamped to [0,1], and
/// hue multiplicatively modulo 1.
inline Image8 adjust_color(const Image8& image, double saturation, double brightness, double hue) {
  Image8 out = image;
  for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
    auto* p = out.pixels.data() + i;
    auto [h, s, v] = detail::rgb_to_hsv(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0);
    h = std::fmod(h * hue, 1.0);
    s = std::clamp(s * saturation, 0.0, 1.0);
    v = std::clamp(v * brightness, 0.0, 1.0);
    const auto rgb = detail::hsv_to_rgb(h, s, v);
    for (int c = 0; c < 3; ++c) {
      p[c] = static_cast<std::uint8_t>(std::clamp(std::floor(rgb[c] * 255.0 + 0.5), 0.0, 255.0));
    }
  }
  return out;
}

struct AugmentParams {
  double p_flip_h = 0.5;
  double p_flip_v = 0.5;
  double rot_min = -10.0;
  double rot_max = 10.0;
  double sat_min = 0.95, sat_max = 1.05;
  double bright_min = 0.95, bright_max = 1.05;
  double hue_min = 0.95, hue_max = 1.05;
};

/// One image's random choices.
struct AugmentDraws {
  bool flip_h = false;
  bool flip_v = false;
  double angle_deg = 0.0;
  double saturation = 1.0;
  double brightness = 1.0;
  double hue = 1.0;

  bool operator==(const AugmentDraws&) const = default;
};

namespace detail {

// Uniform double in [0,1) from the top 53 bits; independent of the
// standard library's distribution implementations.
template <typename Rng>
double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

template <typename Rng>
AugmentDraws draw_augment(const AugmentParams& p, Rng& rng) {
  auto between = [&rng](double lo, double hi) { return lo + (hi - lo) * detail::unit_uniform(rng); };
  AugmentDraws d;
  d.flip_h = detail::unit_uniform(rng) < p.p_flip_h;
  d.flip_v = detail::unit_uniform(rng) < p.p_flip_v;
  d.angle_deg = between(p.rot_min, p.rot_max);
  d.saturation = between(p.sat_min, p.sat_max);
  d.brightness = between(p.bright_min, p.bright_max);
  d.hue = between(p.hue_min, p.hue_max);
  return d;
}

/// Horizontal flip, vertical flip, rotation, then colour scaling. Identity
/// steps are skipped so identity draws return the input unchanged.
inline Image8 augment(const Image8& image, const AugmentDraws& d) {
  Image8 out = d.flip_h ? flip_horizontal(image) : image;
  if (d.flip_v) out = flip_vertical(out);
  if (d.angle_deg != 0.0) out = rotate(out, d.angle_deg);
  if (d.saturation != 1.0 || d.brightness != 1.0 || d.hue != 1.0) {
    out = adjust_color(out, d.saturation, d.brightness, d.hue);
  }
  return out;
}

template <typename Rng>
Image8 augment(const Image8& image, const AugmentParams& params, Rng& rng) {
  return augment(image, draw_augment(params, rng));
}

struct PreprocessOptions {
  bool od_crop = true;
  bool bg_removal = true;
  std::uint8_t bg_threshold = kDefaultBackgroundThreshold;
  double confidence_floor = kDefaultConfidenceFloor;
  int input_size = 64;

  bool operator==(const PreprocessOptions&) const = default;
};

/// ROI plan -> crop -> background removal -> resize.
inline Image8 prepare_image(const Image8& image, const RoiPlan& plan, const PreprocessOptions& opt) {
  Image8 roi = image;
  if (opt.od_crop) {
    if (const auto* crop = std::get_if<CropDisc>(&plan)) roi = crop_roi(image, crop->detection);
  }
  if (opt.bg_removal) roi = remove_background(roi, opt.bg_threshold);
  return resize_bilinear(roi, opt.input_size);
}

/// HxWx3 tensor with values scaled into [0,1].
template <typename T>
Tensor<T> to_model_input(const Image8& image) {
  std::vector<T> values(image.pixels.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<T>(image.pixels[i]) / T(255);
  return Tensor<T>::from_data({static_cast<std::size_t>(image.height),
                               static_cast<std::size_t>(image.width), 3},
                              std::move(values));
}

}  // namespace brighteye
