#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "dqbc/tensor.hpp"

namespace dqbc {

// Conventional optical-flow color wheel (55 hues across the RY/YG/GC/CB/BM/MR
// arcs); direction selects the hue, magnitude the saturation, normalized by
// the field's maximum magnitude.

namespace detail {
inline const std::vector<std::array<double, 3>>& flow_color_wheel() {
  static const std::vector<std::array<double, 3>> wheel = [] {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<double, 3>> w;
    w.reserve(RY + YG + GC + CB + BM + MR);
    for (int i = 0; i < RY; ++i) w.push_back({1.0, double(i) / RY, 0.0});
    for (int i = 0; i < YG; ++i) w.push_back({1.0 - double(i) / YG, 1.0, 0.0});
    for (int i = 0; i < GC; ++i) w.push_back({0.0, 1.0, double(i) / GC});
    for (int i = 0; i < CB; ++i) w.push_back({0.0, 1.0 - double(i) / CB, 1.0});
    for (int i = 0; i < BM; ++i) w.push_back({double(i) / BM, 0.0, 1.0});
    for (int i = 0; i < MR; ++i) w.push_back({1.0, 0.0, 1.0 - double(i) / MR});
    return w;
  }();
  return wheel;
}
}  // namespace detail

// Maps a motion field to an RGB image in [0, 1].
template <typename T>
Tensor3<T> flow_to_color(const MotionField<T>& field) {
  const auto& wheel = detail::flow_color_wheel();
  const int n = static_cast<int>(wheel.size());
  const int h = field.height(), w = field.width();

  double max_mag = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = field.dx(y, x), v = field.dy(y, x);
      max_mag = std::max(max_mag, std::sqrt(u * u + v * v));
    }
  }
  const double scale = max_mag > 0.0 ? 1.0 / max_mag : 0.0;

  Tensor3<T> img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = field.dx(y, x) * scale, v = field.dy(y, x) * scale;
      const double rad = std::sqrt(u * u + v * v);
      const double angle = std::atan2(-v, -u) / 3.14159265358979323846;
      const double fk = (angle + 1.0) / 2.0 * (n - 1);
      const int k0 = static_cast<int>(std::floor(fk)) % n;
      const int k1 = (k0 + 1) % n;
      const double f = fk - std::floor(fk);
      for (int c = 0; c < 3; ++c) {
        double col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        // saturate toward white at low magnitude
        col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
        img(y, x, c) = static_cast<T>(col);
      }
    }
  }
  return img;
}

}  // namespace dqbc
