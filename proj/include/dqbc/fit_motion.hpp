#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "dqbc/ops.hpp"
#include "dqbc/tensor.hpp"

namespace dqbc {

struct FitMotionOptions {
  int iterations = 500;
  double step = 0.5;
};

template <typename T>
struct FitMotionResult {
  MotionField<T> field;
  double initial_loss = 0.0;  // mean squared error
  double final_loss = 0.0;
  int iterations_run = 0;
  bool diverged = false;
};

// Direct gradient descent on the mean squared warp error
// ||warp(frame0, M) - frame1||^2 through backward_warp's adjoint. The
// objective separates over pixels (each output pixel depends only on its own
// flow vector), so every pixel carries its own step size with step-halving
// backtracking; accepted steps regrow. The total loss never increases.
template <typename T>
FitMotionResult<T> fit_motion(const Tensor3<T>& frame0,
                              const Tensor3<T>& frame1,
                              const FitMotionOptions& options = {}) {
  require_same_shape(frame0, frame1, "fit_motion");
  const int h = frame0.height(), w = frame0.width(), ch = frame0.channels();
  const double n = double(frame0.size());
  const double step_cap = options.step * 1e6;

  FitMotionResult<T> result;
  result.field = MotionField<T>::zeros(h, w);

  // per-pixel squared residual sums
  auto pixel_loss = [&](int y, int x, T dx, T dy) {
    const T sx = static_cast<T>(x) + dx;
    const T sy = static_cast<T>(y) + dy;
    double l = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double r =
          double(bilinear_sample(frame0, sx, sy, c)) - double(frame1(y, x, c));
      l += r * r;
    }
    return l;
  };

  std::vector<double> losses(static_cast<size_t>(h) * w);
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double l = pixel_loss(y, x, T(0), T(0));
      losses[size_t(y) * w + x] = l;
      total += l;
    }
  }
  result.initial_loss = total / n;

  std::vector<double> steps(losses.size(), options.step);

  for (int it = 0; it < options.iterations; ++it) {
    if (!std::isfinite(total)) {
      result.diverged = true;
      break;
    }
    if (total == 0.0) break;

    const Tensor3<T> warped = backward_warp(frame0, result.field);
    Tensor3<T> cotangent(h, w, ch);
    for (size_t i = 0; i < cotangent.size(); ++i) {
      cotangent.data()[i] = static_cast<T>(
          2.0 * (double(warped.data()[i]) - double(frame1.data()[i])));
    }
    const MotionField<T> grad =
        backward_warp_adjoint(frame0, result.field, cotangent).d_flow;

    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t p = size_t(y) * w + x;
        const double gx = grad.dx(y, x), gy = grad.dy(y, x);
        if (losses[p] == 0.0 || (gx == 0.0 && gy == 0.0)) continue;
        double s = std::min(steps[p] * 2.0, step_cap);
        while (s > 1e-12) {
          const T tx = result.field.dx(y, x) - static_cast<T>(s * gx);
          const T ty = result.field.dy(y, x) - static_cast<T>(s * gy);
          const double trial = pixel_loss(y, x, tx, ty);
          if (std::isfinite(trial) && trial <= losses[p]) {
            result.field.dx(y, x) = tx;
            result.field.dy(y, x) = ty;
            total += trial - losses[p];
            losses[p] = trial;
            break;
          }
          s *= 0.5;
        }
        steps[p] = s;
      }
    }
    result.iterations_run = it + 1;
  }
  result.final_loss = total / n;
  if (!std::isfinite(result.final_loss)) result.diverged = true;
  return result;
}

// Mean endpoint error against a constant reference displacement over the
// central crop (fraction of each axis).
template <typename T>
double mean_endpoint_error(const MotionField<T>& field, double truth_dx,
                           double truth_dy, double crop_fraction = 0.8) {
  const int h = field.height(), w = field.width();
  const int my = static_cast<int>(std::round(h * (1.0 - crop_fraction) / 2.0));
  const int mx = static_cast<int>(std::round(w * (1.0 - crop_fraction) / 2.0));
  double sum = 0.0;
  int count = 0;
  for (int y = my; y < h - my; ++y) {
    for (int x = mx; x < w - mx; ++x) {
      const double ex = double(field.dx(y, x)) - truth_dx;
      const double ey = double(field.dy(y, x)) - truth_dy;
      sum += std::sqrt(ex * ex + ey * ey);
      ++count;
    }
  }
  return count > 0 ? sum / count : 0.0;
}

// Smooth test texture in [0, 1]. Each channel is a linear ramp along its own
// direction plus low-amplitude sinusoid detail whose slope stays strictly
// below the ramp slope, so per pixel the warp residual is monotone along
// three spread directions and the fit objective has a single minimum.
template <typename T>
Tensor3<T> synthetic_texture(int height, int width, uint64_t seed = 0) {
  constexpr double kPi = 3.14159265358979323846;
  Tensor3<T> img(height, width, 3);
  const double phase = double(seed % 97) * 0.13;
  const double angles[3] = {0.0, kPi / 2.0, kPi / 4.0};
  const double diag = std::hypot(double(width - 1), double(height - 1));
  const double slope = 0.88 / diag;
  const struct {
    double lambda, angle, amp;
  } waves[] = {{23.0, 0.8, 0.012}, {14.0, 2.3, 0.006}};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double proj = x * std::cos(angles[c]) + y * std::sin(angles[c]);
        double v = 0.06 + slope * proj;
        int k = 0;
        for (const auto& wv : waves) {
          const double wproj =
              x * std::cos(wv.angle + 0.5 * c) + y * std::sin(wv.angle + 0.5 * c);
          v += wv.amp *
               std::sin(2.0 * kPi * wproj / wv.lambda + phase + 0.7 * c + 1.3 * k);
          ++k;
        }
        img(y, x, c) = static_cast<T>(std::clamp(v, 0.02, 0.98));
      }
    }
  }
  return img;
}

}  // namespace dqbc
