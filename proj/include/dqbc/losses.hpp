#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "dqbc/ops.hpp"
#include "dqbc/tensor.hpp"

namespace dqbc {

// Loss-term weighting. The reductions are means, so values are comparable
// across resolutions.
struct LossConfig {
  double lambda_teacher = 1.0;
  double lambda_distill = 0.01;
  std::vector<double> distill_level_weights = {1.0, 1.0, 1.0, 1.0};

  void validate() const {
    if (!(lambda_teacher >= 0.0) || !(lambda_distill >= 0.0)) {
      throw ConfigError("LossConfig: lambdas must be finite and non-negative");
    }
    for (double w : distill_level_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ConfigError("LossConfig: level weights must be finite and non-negative");
      }
    }
  }
};

// Mean absolute difference over all elements.
template <typename T>
T reconstruction_loss(const Tensor3<T>& predicted, const Tensor3<T>& truth) {
  require_same_shape(predicted, truth, "reconstruction_loss");
  T sum = T(0);
  for (size_t i = 0; i < predicted.size(); ++i) {
    sum += std::abs(predicted.data()[i] - truth.data()[i]);
  }
  return sum / static_cast<T>(predicted.size());
}

// L1 of the teacher-warped blend against ground truth, using the student's
// occlusion map.
template <typename T>
T teacher_reconstruction_loss(const Tensor3<T>& frame0,
                              const Tensor3<T>& frame1,
                              const MotionField<T>& teacher0,
                              const MotionField<T>& teacher1,
                              const OcclusionMap<T>& occlusion,
                              const Tensor3<T>& truth) {
  require_same_shape(frame0, frame1, "teacher_reconstruction_loss");
  require_same_shape(frame0, truth, "teacher_reconstruction_loss");
  if (occlusion.height() != frame0.height() ||
      occlusion.width() != frame0.width()) {
    throw ConfigError("teacher_reconstruction_loss: occlusion resolution mismatch");
  }
  const Tensor3<T> w0 = backward_warp(frame0, teacher0);
  const Tensor3<T> w1 = backward_warp(frame1, teacher1);
  T sum = T(0);
  for (int y = 0; y < truth.height(); ++y) {
    for (int x = 0; x < truth.width(); ++x) {
      const T o = occlusion.at(y, x);
      for (int c = 0; c < truth.channels(); ++c) {
        sum += std::abs(o * w0(y, x, c) + (T(1) - o) * w1(y, x, c) -
                        truth(y, x, c));
      }
    }
  }
  return sum / static_cast<T>(truth.size());
}

// Bilinear resize of a motion field with displacement magnitudes rescaled to
// the target grid's pixel units. Sampling maps corners to corners so no
// border policy enters.
template <typename T>
MotionField<T> resize_motion_field(const MotionField<T>& field, int height,
                                   int width) {
  const int sh = field.height(), sw = field.width();
  MotionField<T> out = MotionField<T>::zeros(height, width);
  const T rx = static_cast<T>(width) / static_cast<T>(sw);
  const T ry = static_cast<T>(height) / static_cast<T>(sh);
  for (int y = 0; y < height; ++y) {
    const T sy = height > 1 ? static_cast<T>(y) * static_cast<T>(sh - 1) /
                                  static_cast<T>(height - 1)
                            : static_cast<T>(sh - 1) / T(2);
    for (int x = 0; x < width; ++x) {
      const T sx = width > 1 ? static_cast<T>(x) * static_cast<T>(sw - 1) /
                                   static_cast<T>(width - 1)
                             : static_cast<T>(sw - 1) / T(2);
      out.dx(y, x) = rx * bilinear_sample(field.tensor(), sx, sy, 0);
      out.dy(y, x) = ry * bilinear_sample(field.tensor(), sx, sy, 1);
    }
  }
  return out;
}

namespace detail {
template <typename T>
T field_mse(const MotionField<T>& a, const MotionField<T>& b) {
  T sum = T(0);
  for (size_t i = 0; i < a.tensor().size(); ++i) {
    const T d = a.tensor().data()[i] - b.tensor().data()[i];
    sum += d * d;
  }
  return sum / static_cast<T>(a.tensor().size());
}
}  // namespace detail

// Weighted sum over trace levels of the squared error against the teacher
// fields, which are resized (and magnitude-rescaled) down to each level's
// resolution. Per level the two fields' mean squared errors are summed.
template <typename T>
T distillation_loss(
    const std::vector<std::pair<MotionField<T>, MotionField<T>>>& trace,
    const MotionField<T>& teacher0, const MotionField<T>& teacher1,
    const LossConfig& config) {
  config.validate();
  if (trace.empty()) {
    throw ConfigError("distillation_loss: empty trace");
  }
  if (config.distill_level_weights.size() != trace.size()) {
    throw ConfigError("distillation_loss: " +
                      std::to_string(config.distill_level_weights.size()) +
                      " level weights for a trace of " +
                      std::to_string(trace.size()));
  }
  T total = T(0);
  for (size_t level = 0; level < trace.size(); ++level) {
    const auto& [f0, f1] = trace[level];
    const MotionField<T> t0 =
        resize_motion_field(teacher0, f0.height(), f0.width());
    const MotionField<T> t1 =
        resize_motion_field(teacher1, f1.height(), f1.width());
    total += static_cast<T>(config.distill_level_weights[level]) *
             (detail::field_mse(f0, t0) + detail::field_mse(f1, t1));
  }
  return total;
}

template <typename T>
T total_loss(T l_rec, T l_tea, T l_distill, const LossConfig& config) {
  config.validate();
  return l_rec + static_cast<T>(config.lambda_teacher) * l_tea +
         static_cast<T>(config.lambda_distill) * l_distill;
}

}  // namespace dqbc
