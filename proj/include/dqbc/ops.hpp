#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "dqbc/parallel.hpp"
#include "dqbc/tensor.hpp"

namespace dqbc {

// Out-of-bounds samples read as zero everywhere in this library. Matches the
// absent-similarity semantics of the correlation windows.
inline constexpr bool kZeroPaddingPolicy = true;

// Hidden-layer activation used throughout the pipeline.
inline constexpr double kLeakySlope = 0.1;

template <typename T>
T leaky_relu(T v) {
  return v > T(0) ? v : static_cast<T>(kLeakySlope) * v;
}

template <typename T>
Tensor3<T> leaky_relu(Tensor3<T> t) {
  T* p = t.data();
  for (size_t i = 0; i < t.size(); ++i) p[i] = leaky_relu(p[i]);
  return t;
}

template <typename T>
T logistic(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

inline int conv_out_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Dense 2-D convolution with zero padding. Per output element the
// accumulation runs over (in-channel, ky, kx) in that fixed order, then the
// bias is added, so results do not depend on the parallel partitioning.
template <typename T>
Tensor3<T> conv2d(const Tensor3<T>& input, const ConvSpec<T>& spec) {
  if (spec.in_channels != input.channels()) {
    throw ConfigError("conv2d: kernel expects " +
                      std::to_string(spec.in_channels) + " channels, input has " +
                      std::to_string(input.channels()));
  }
  require_finite(input, "conv2d");
  const int oh = conv_out_extent(input.height(), spec.kernel_h, spec.stride,
                                 spec.padding);
  const int ow = conv_out_extent(input.width(), spec.kernel_w, spec.stride,
                                 spec.padding);
  if (oh <= 0 || ow <= 0) {
    throw ConfigError("conv2d: kernel does not fit input " +
                      input.shape_string());
  }
  Tensor3<T> out(oh, ow, spec.out_channels);
  const int ih = input.height(), iw = input.width(), ic = input.channels();
  parallel_for(0, oh, [&](int oy) {
    const int iy0 = oy * spec.stride - spec.padding;
    for (int ox = 0; ox < ow; ++ox) {
      const int ix0 = ox * spec.stride - spec.padding;
      for (int oc = 0; oc < spec.out_channels; ++oc) {
        T acc = T(0);
        for (int c = 0; c < ic; ++c) {
          for (int ky = 0; ky < spec.kernel_h; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= ih) continue;
            for (int kx = 0; kx < spec.kernel_w; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= iw) continue;
              acc += spec.k(oc, c, ky, kx) * input(iy, ix, c);
            }
          }
        }
        out(oy, ox, oc) = acc + spec.bias[oc];
      }
    }
  });
  return out;
}

// 2x2 mean pooling. Dimensions must already be even; parity padding is the
// caller's responsibility (see pad_zero_to_multiple).
template <typename T>
Tensor3<T> avgpool2x(const Tensor3<T>& input) {
  if (input.height() % 2 != 0 || input.width() % 2 != 0) {
    throw ContractError("avgpool2x: dimensions must be even, got " +
                        input.shape_string());
  }
  const int oh = input.height() / 2, ow = input.width() / 2;
  const int ch = input.channels();
  Tensor3<T> out(oh, ow, ch);
  parallel_for(0, oh, [&](int y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < ch; ++c) {
        const T sum = input(2 * y, 2 * x, c) + input(2 * y, 2 * x + 1, c) +
                      input(2 * y + 1, 2 * x, c) + input(2 * y + 1, 2 * x + 1, c);
        out(y, x, c) = sum * T(0.25);
      }
    }
  });
  return out;
}

// 4-neighbor bilinear interpolation with zero padding: neighbors outside
// [0, W-1] x [0, H-1] contribute 0. Total on all finite coordinates.
// Zero-weight corners are skipped so integer coordinates reproduce grid
// values bit-for-bit.
template <typename T>
T bilinear_sample(const Tensor3<T>& t, T x, T y, int c) {
  const int h = t.height(), w = t.width();
  if (x <= T(-1) || x >= T(w) || y <= T(-1) || y >= T(h)) return T(0);
  const T fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const T ax = x - fx, ay = y - fy;
  const T w00 = (T(1) - ax) * (T(1) - ay);
  const T w10 = ax * (T(1) - ay);
  const T w01 = (T(1) - ax) * ay;
  const T w11 = ax * ay;
  auto tap = [&](int yy, int xx) -> T {
    return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? t(yy, xx, c) : T(0);
  };
  T acc = T(0);
  if (w00 != T(0)) acc += w00 * tap(y0, x0);
  if (w10 != T(0)) acc += w10 * tap(y0, x0 + 1);
  if (w01 != T(0)) acc += w01 * tap(y0 + 1, x0);
  if (w11 != T(0)) acc += w11 * tap(y0 + 1, x0 + 1);
  return acc;
}

// Backward warping: output(y, x, c) = source(x + flow_dx, y + flow_dy, c)
// sampled bilinearly.
template <typename T>
Tensor3<T> backward_warp(const Tensor3<T>& source, const MotionField<T>& flow) {
  if (source.height() != flow.height() || source.width() != flow.width()) {
    throw ConfigError("backward_warp: flow resolution " +
                      flow.tensor().shape_string() + " does not match source " +
                      source.shape_string());
  }
  const int h = source.height(), w = source.width(), ch = source.channels();
  Tensor3<T> out(h, w, ch);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const T sx = static_cast<T>(x) + flow.dx(y, x);
      const T sy = static_cast<T>(y) + flow.dy(y, x);
      for (int c = 0; c < ch; ++c) {
        out(y, x, c) = bilinear_sample(source, sx, sy, c);
      }
    }
  });
  return out;
}

template <typename T>
struct WarpAdjoint {
  Tensor3<T> d_source;
  MotionField<T> d_flow;
};

// Adjoint of backward_warp: given output cotangents, accumulates cotangents
// for the source values and the flow components. The spatial derivative is
// the piecewise-bilinear one; at exact integer sample coordinates the
// right-continuous branch (floor-based cell) applies.
template <typename T>
WarpAdjoint<T> backward_warp_adjoint(const Tensor3<T>& source,
                                     const MotionField<T>& flow,
                                     const Tensor3<T>& d_out) {
  if (source.height() != flow.height() || source.width() != flow.width()) {
    throw ConfigError("backward_warp_adjoint: flow/source resolution mismatch");
  }
  require_same_shape(source, d_out, "backward_warp_adjoint");
  const int h = source.height(), w = source.width(), ch = source.channels();
  WarpAdjoint<T> adj{Tensor3<T>(h, w, ch), MotionField<T>::zeros(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T sx = static_cast<T>(x) + flow.dx(y, x);
      const T sy = static_cast<T>(y) + flow.dy(y, x);
      if (sx <= T(-1) || sx >= T(w) || sy <= T(-1) || sy >= T(h)) continue;
      const T fx = std::floor(sx), fy = std::floor(sy);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const T ax = sx - fx, ay = sy - fy;
      auto in_range = [&](int yy, int xx) {
        return yy >= 0 && yy < h && xx >= 0 && xx < w;
      };
      auto value = [&](int yy, int xx, int c) -> T {
        return in_range(yy, xx) ? source(yy, xx, c) : T(0);
      };
      T gx = T(0), gy = T(0);
      for (int c = 0; c < ch; ++c) {
        const T g = d_out(y, x, c);
        const T v00 = value(y0, x0, c), v10 = value(y0, x0 + 1, c);
        const T v01 = value(y0 + 1, x0, c), v11 = value(y0 + 1, x0 + 1, c);
        if (in_range(y0, x0)) {
          adj.d_source(y0, x0, c) += g * (T(1) - ax) * (T(1) - ay);
        }
        if (in_range(y0, x0 + 1)) {
          adj.d_source(y0, x0 + 1, c) += g * ax * (T(1) - ay);
        }
        if (in_range(y0 + 1, x0)) {
          adj.d_source(y0 + 1, x0, c) += g * (T(1) - ax) * ay;
        }
        if (in_range(y0 + 1, x0 + 1)) {
          adj.d_source(y0 + 1, x0 + 1, c) += g * ax * ay;
        }
        gx += g * ((v10 - v00) * (T(1) - ay) + (v11 - v01) * ay);
        gy += g * ((v01 - v00) * (T(1) - ax) + (v11 - v10) * ax);
      }
      adj.d_flow.dx(y, x) = gx;
      adj.d_flow.dy(y, x) = gy;
    }
  }
  return adj;
}

// Whole-map translation by (dx, dy) with zero padding:
// output(y, x, c) = input(x - dx, y - dy, c) sampled bilinearly. Integer
// offsets reproduce exact index shifting.
template <typename T>
Tensor3<T> translate_fractional(const Tensor3<T>& input, T dx, T dy) {
  const int h = input.height(), w = input.width(), ch = input.channels();
  Tensor3<T> out(h, w, ch);
  parallel_for(0, h, [&](int y) {
    const T sy = static_cast<T>(y) - dy;
    for (int x = 0; x < w; ++x) {
      const T sx = static_cast<T>(x) - dx;
      for (int c = 0; c < ch; ++c) {
        out(y, x, c) = bilinear_sample(input, sx, sy, c);
      }
    }
  });
  return out;
}

// The bilinear hat kernel is even, so the adjoint of a translation is the
// translation by the opposite offset applied to the cotangent.
template <typename T>
Tensor3<T> translate_fractional_adjoint(T dx, T dy, const Tensor3<T>& d_out) {
  return translate_fractional(d_out, -dx, -dy);
}

// Per pixel, each consecutive channel group of group_size logits is replaced
// by its max-subtracted softmax.
template <typename T>
Tensor3<T> softmax_groups(const Tensor3<T>& input, int group_size) {
  if (group_size <= 0 || input.channels() % group_size != 0) {
    throw ConfigError("softmax_groups: channel count " +
                      std::to_string(input.channels()) +
                      " not divisible by group size " +
                      std::to_string(group_size));
  }
  const int h = input.height(), w = input.width(), ch = input.channels();
  const int groups = ch / group_size;
  Tensor3<T> out(h, w, ch);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      for (int g = 0; g < groups; ++g) {
        const int base = g * group_size;
        T mx = input(y, x, base);
        for (int i = 1; i < group_size; ++i) {
          mx = std::max(mx, input(y, x, base + i));
        }
        T sum = T(0);
        for (int i = 0; i < group_size; ++i) {
          const T e = std::exp(input(y, x, base + i) - mx);
          out(y, x, base + i) = e;
          sum += e;
        }
        const T inv = T(1) / sum;
        for (int i = 0; i < group_size; ++i) {
          out(y, x, base + i) *= inv;
        }
      }
    }
  });
  return out;
}

// ---- Shape utilities -------------------------------------------------------

template <typename T>
Tensor3<T> crop(const Tensor3<T>& t, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > t.height() || x0 + width > t.width()) {
    throw ConfigError("crop: window exceeds tensor bounds");
  }
  Tensor3<T> out(height, width, t.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < t.channels(); ++c) {
        out(y, x, c) = t(y0 + y, x0 + x, c);
      }
    }
  }
  return out;
}

inline int round_up(int v, int multiple) {
  return (v + multiple - 1) / multiple * multiple;
}

// Zero-pads on the bottom/right so both spatial extents become multiples of m.
template <typename T>
Tensor3<T> pad_zero_to_multiple(const Tensor3<T>& t, int m) {
  const int ph = round_up(t.height(), m), pw = round_up(t.width(), m);
  if (ph == t.height() && pw == t.width()) return t;
  Tensor3<T> out(ph, pw, t.channels());
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      for (int c = 0; c < t.channels(); ++c) {
        out(y, x, c) = t(y, x, c);
      }
    }
  }
  return out;
}

// Mirrors an out-of-range index back into [0, n) with edge repetition,
// tiled for pads wider than the image.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

// Edge-reflection padding on the bottom/right to the next multiple of m.
template <typename T>
Tensor3<T> pad_reflect_to_multiple(const Tensor3<T>& t, int m) {
  const int ph = round_up(t.height(), m), pw = round_up(t.width(), m);
  if (ph == t.height() && pw == t.width()) return t;
  Tensor3<T> out(ph, pw, t.channels());
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect_index(y, t.height());
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect_index(x, t.width());
      for (int c = 0; c < t.channels(); ++c) {
        out(y, x, c) = t(sy, sx, c);
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> concat_channels(const std::vector<const Tensor3<T>*>& parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  int total = 0;
  for (const auto* p : parts) {
    if (p->height() != parts[0]->height() || p->width() != parts[0]->width()) {
      throw ConfigError("concat_channels: spatial mismatch");
    }
    total += p->channels();
  }
  Tensor3<T> out(parts[0]->height(), parts[0]->width(), total);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      int c0 = 0;
      for (const auto* p : parts) {
        for (int c = 0; c < p->channels(); ++c) {
          out(y, x, c0 + c) = (*p)(y, x, c);
        }
        c0 += p->channels();
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> upsample2x_nearest(const Tensor3<T>& t) {
  Tensor3<T> out(t.height() * 2, t.width() * 2, t.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < t.channels(); ++c) {
        out(y, x, c) = t(y / 2, x / 2, c);
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> clamp01(Tensor3<T> t) {
  T* p = t.data();
  for (size_t i = 0; i < t.size(); ++i) {
    p[i] = std::clamp(p[i], T(0), T(1));
  }
  return t;
}

}  // namespace dqbc
