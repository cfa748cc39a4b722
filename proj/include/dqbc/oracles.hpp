#pragma once

#include <cmath>
#include <vector>

#include "dqbc/correlation.hpp"
#include "dqbc/motion.hpp"
#include "dqbc/tensor.hpp"

// Literal nested-loop reference implementations, written independently of the
// optimized kernels they verify. Shared by the check subcommand and the test
// suites; nothing here calls into the production code paths except for
// shared plain containers.

namespace dqbc::oracles {

// Direct six-nested-loop convolution.
template <typename T>
Tensor3<T> conv2d_naive(const Tensor3<T>& input, const ConvSpec<T>& spec) {
  const int oh = (input.height() + 2 * spec.padding - spec.kernel_h) / spec.stride + 1;
  const int ow = (input.width() + 2 * spec.padding - spec.kernel_w) / spec.stride + 1;
  Tensor3<T> out(oh, ow, spec.out_channels);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int oc = 0; oc < spec.out_channels; ++oc) {
        T acc = T(0);
        for (int c = 0; c < spec.in_channels; ++c) {
          for (int ky = 0; ky < spec.kernel_h; ++ky) {
            for (int kx = 0; kx < spec.kernel_w; ++kx) {
              const int iy = oy * spec.stride - spec.padding + ky;
              const int ix = ox * spec.stride - spec.padding + kx;
              T v = T(0);
              if (iy >= 0 && iy < input.height() && ix >= 0 &&
                  ix < input.width()) {
                v = input(iy, ix, c);
              }
              acc += spec.k(oc, c, ky, kx) * v;
            }
          }
        }
        out(oy, ox, oc) = acc + spec.bias[oc];
      }
    }
  }
  return out;
}

// Explicit 2x2 block means.
template <typename T>
Tensor3<T> avgpool2x_naive(const Tensor3<T>& input) {
  Tensor3<T> out(input.height() / 2, input.width() / 2, input.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int c = 0; c < out.channels(); ++c) {
        out(y, x, c) = (input(2 * y, 2 * x, c) + input(2 * y, 2 * x + 1, c) +
                        input(2 * y + 1, 2 * x, c) +
                        input(2 * y + 1, 2 * x + 1, c)) /
                       T(4);
      }
    }
  }
  return out;
}

// Freshly written zero-padded bilinear lookup.
template <typename T>
T bilinear_naive(const Tensor3<T>& t, T x, T y, int c) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  T acc = T(0);
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int xi = x0 + dx, yi = y0 + dy;
      if (xi < 0 || xi >= t.width() || yi < 0 || yi >= t.height()) continue;
      const T wx = dx == 0 ? T(1) - (x - T(x0)) : x - T(x0);
      const T wy = dy == 0 ? T(1) - (y - T(y0)) : y - T(y0);
      acc += wx * wy * t(yi, xi, c);
    }
  }
  return acc;
}

// The correlation definition transcribed directly: for every query location,
// level l and window offset (2^l i, 2^l j), the inner product between the
// query vector and the key pyramid sampled at ((x_q + 2^l i) / 2^l,
// (y_q + 2^l j) / 2^l). Pyramid levels are pooled with the naive block mean.
template <typename T>
Tensor3<T> gather_naive(const Tensor3<T>& queries, const Tensor3<T>& key_level0,
                        const PyramidConfig& config) {
  std::vector<Tensor3<T>> levels{key_level0};
  for (int l = 1; l < config.levels; ++l) {
    levels.push_back(avgpool2x_naive(levels.back()));
  }
  const int h = queries.height(), w = queries.width(), fc = queries.channels();
  Tensor3<T> scores(h, w, config.channels_per_direction());
  for (int yq = 0; yq < h; ++yq) {
    for (int xq = 0; xq < w; ++xq) {
      int ch = 0;
      for (int l = 0; l < config.levels; ++l) {
        const int r = config.radii[l];
        const T denom = static_cast<T>(1 << l);
        for (int j = -r; j <= r; ++j) {
          for (int i = -r; i <= r; ++i) {
            const T kx = (T(xq) + T((1 << l) * i)) / denom;
            const T ky = (T(yq) + T((1 << l) * j)) / denom;
            T score = T(0);
            for (int c = 0; c < fc; ++c) {
              score += queries(yq, xq, c) * bilinear_naive(levels[l], kx, ky, c);
            }
            if (config.normalize_by_sqrt_c) {
              score /= std::sqrt(static_cast<T>(fc));
            }
            scores(yq, xq, ch++) = score;
          }
        }
      }
    }
  }
  return scores;
}

// Per-pixel weighted sum for the convex 2x up-sampling, softmax written
// in place.
template <typename T>
Tensor3<T> convex_upsample_naive(const Tensor3<T>& field,
                                 const Tensor3<T>& logits) {
  const int h = field.height(), w = field.width();
  Tensor3<T> fine(2 * h, 2 * w, field.channels());
  for (int fy = 0; fy < 2 * h; ++fy) {
    for (int fx = 0; fx < 2 * w; ++fx) {
      const int y = fy / 2, x = fx / 2;
      const int s = (fy % 2) * 2 + (fx % 2);
      T m[9];
      T mx = logits(y, x, s * 9);
      for (int k = 1; k < 9; ++k) mx = std::max(mx, logits(y, x, s * 9 + k));
      T sum = T(0);
      for (int k = 0; k < 9; ++k) {
        m[k] = std::exp(logits(y, x, s * 9 + k) - mx);
        sum += m[k];
      }
      for (int k = 0; k < 9; ++k) m[k] /= sum;
      for (int c = 0; c < field.channels(); ++c) {
        T acc = T(0);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int sy = y + dy, sx = x + dx;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            acc += m[(dy + 1) * 3 + (dx + 1)] * field(sy, sx, c);
          }
        }
        fine(fy, fx, c) = T(2) * acc;
      }
    }
  }
  return fine;
}

}  // namespace dqbc::oracles
