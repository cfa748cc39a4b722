#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "dqbc/errors.hpp"

namespace dqbc {

// Rank-3 grid in row-major (y, x, c) order. The universal carrier for
// images, feature maps, score volumes and weight maps. Instantiated with
// float for the pipeline and double for verification.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;

  Tensor3(int height, int width, int channels)
      : h_(height), w_(width), c_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw ConfigError("Tensor3: dimensions must be positive, got " +
                        shape_string(height, width, channels));
    }
    data_.assign(static_cast<size_t>(height) * width * channels, T(0));
  }

  static Tensor3 filled(int height, int width, int channels, T value) {
    Tensor3 t(height, width, channels);
    for (auto& v : t.data_) v = value;
    return t;
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  T& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  T operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  // Row base pointer, channels fastest.
  T* row(int y) { return data_.data() + static_cast<size_t>(y) * w_ * c_; }
  const T* row(int y) const {
    return data_.data() + static_cast<size_t>(y) * w_ * c_;
  }

  bool same_shape(const Tensor3& o) const {
    return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  bool bitwise_equal(const Tensor3& o) const {
    return same_shape(o) && data_ == o.data_;
  }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_string() const { return shape_string(h_, w_, c_); }

  static std::string shape_string(int h, int w, int c) {
    return std::to_string(h) + "x" + std::to_string(w) + "x" +
           std::to_string(c);
  }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(h_, w_, c_);
    for (size_t i = 0; i < data_.size(); ++i) {
      out.data()[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

 private:
  size_t index(int y, int x, int c) const {
    return (static_cast<size_t>(y) * w_ + x) * c_ + c;
  }

  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<T> data_;
};

using Tensor3f = Tensor3<float>;
using Tensor3d = Tensor3<double>;

template <typename T>
void require_finite(const Tensor3<T>& t, const char* op) {
  if (!t.all_finite()) {
    throw DataError(std::string(op) + ": input contains non-finite values");
  }
}

template <typename T>
void require_same_shape(const Tensor3<T>& a, const Tensor3<T>& b,
                        const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " +
                      a.shape_string() + " vs " + b.shape_string());
  }
}

// Per-pixel 2-vector of displacements in pixels at the field's own
// resolution. Channel 0 is horizontal (positive rightward), channel 1 is
// vertical (positive downward).
template <typename T>
class MotionField {
 public:
  MotionField() = default;

  explicit MotionField(Tensor3<T> data) : t_(std::move(data)) {
    if (t_.channels() != 2) {
      throw ConfigError("MotionField: expected 2 channels, got " +
                        std::to_string(t_.channels()));
    }
  }

  static MotionField zeros(int height, int width) {
    return MotionField(Tensor3<T>(height, width, 2));
  }

  static MotionField constant(int height, int width, T dx, T dy) {
    MotionField f = zeros(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        f.dx(y, x) = dx;
        f.dy(y, x) = dy;
      }
    }
    return f;
  }

  int height() const { return t_.height(); }
  int width() const { return t_.width(); }

  T& dx(int y, int x) { return t_(y, x, 0); }
  T dx(int y, int x) const { return t_(y, x, 0); }
  T& dy(int y, int x) { return t_(y, x, 1); }
  T dy(int y, int x) const { return t_(y, x, 1); }

  Tensor3<T>& tensor() { return t_; }
  const Tensor3<T>& tensor() const { return t_; }

 private:
  Tensor3<T> t_;
};

using MotionFieldF = MotionField<float>;
using MotionFieldD = MotionField<double>;

// Per-pixel blend weight between the two warped source frames.
template <typename T>
class OcclusionMap {
 public:
  OcclusionMap() = default;

  explicit OcclusionMap(Tensor3<T> data) : t_(std::move(data)) {
    if (t_.channels() != 1) {
      throw ConfigError("OcclusionMap: expected 1 channel, got " +
                        std::to_string(t_.channels()));
    }
    for (int y = 0; y < t_.height(); ++y) {
      const T* r = t_.row(y);
      for (int x = 0; x < t_.width(); ++x) {
        if (!(r[x] >= T(0) && r[x] <= T(1))) {
          throw DataError("OcclusionMap: value outside [0, 1]");
        }
      }
    }
  }

  int height() const { return t_.height(); }
  int width() const { return t_.width(); }
  T at(int y, int x) const { return t_(y, x, 0); }

  Tensor3<T>& tensor() { return t_; }
  const Tensor3<T>& tensor() const { return t_; }

 private:
  Tensor3<T> t_;
};

// Dense convolution weights: kernel laid out (out, in, ky, kx) row-major,
// one bias per output channel, zero padding.
template <typename T>
struct ConvSpec {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;
  int padding = 0;
  std::vector<T> kernel;  // out_channels * in_channels * kernel_h * kernel_w
  std::vector<T> bias;    // out_channels

  static ConvSpec zeros(int out_ch, int in_ch, int kh, int kw, int stride,
                        int padding) {
    ConvSpec s;
    s.out_channels = out_ch;
    s.in_channels = in_ch;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.stride = stride;
    s.padding = padding;
    s.kernel.assign(static_cast<size_t>(out_ch) * in_ch * kh * kw, T(0));
    s.bias.assign(static_cast<size_t>(out_ch), T(0));
    return s;
  }

  T k(int oc, int ic, int ky, int kx) const {
    return kernel[((static_cast<size_t>(oc) * in_channels + ic) * kernel_h +
                   ky) *
                      kernel_w +
                  kx];
  }

  T& k(int oc, int ic, int ky, int kx) {
    return kernel[((static_cast<size_t>(oc) * in_channels + ic) * kernel_h +
                   ky) *
                      kernel_w +
                  kx];
  }

  template <typename U>
  ConvSpec<U> cast() const {
    ConvSpec<U> s;
    s.out_channels = out_channels;
    s.in_channels = in_channels;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.stride = stride;
    s.padding = padding;
    s.kernel.reserve(kernel.size());
    for (T v : kernel) s.kernel.push_back(static_cast<U>(v));
    s.bias.reserve(bias.size());
    for (T v : bias) s.bias.push_back(static_cast<U>(v));
    return s;
  }
};

}  // namespace dqbc
