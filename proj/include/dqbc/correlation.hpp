#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dqbc/ops.hpp"
#include "dqbc/tensor.hpp"

namespace dqbc {

// Key-pyramid geometry: number of levels and the local-window radius at each
// level. Level l looks at offsets (2^l * i, 2^l * j) for i, j in [-r_l, r_l].
struct PyramidConfig {
  int levels = 3;
  std::vector<int> radii = {6, 5, 4};
  bool normalize_by_sqrt_c = false;

  void validate() const {
    if (levels < 1) throw ConfigError("PyramidConfig: levels must be >= 1");
    if (static_cast<int>(radii.size()) != levels) {
      throw ConfigError("PyramidConfig: expected " + std::to_string(levels) +
                        " radii, got " + std::to_string(radii.size()));
    }
    for (int r : radii) {
      if (r < 1) throw ConfigError("PyramidConfig: radii must be >= 1");
    }
  }

  // Window size summed over levels: sum of (2 r_l + 1)^2.
  int channels_per_direction() const {
    validate();
    int n = 0;
    for (int r : radii) n += (2 * r + 1) * (2 * r + 1);
    return n;
  }
};

enum class CorrDirection { kZeroToOne, kOneToZero };

// Identifies what one score channel measures: the pyramid level it was
// gathered from, the query-to-key displacement in query-resolution pixels
// (always an integer multiple of 2^level), and the gather direction.
struct ChannelMeta {
  int level = 0;
  int vx = 0;
  int vy = 0;
  CorrDirection direction = CorrDirection::kZeroToOne;
};

// Similarity scores at query resolution plus per-channel displacement
// metadata. Channel order is level-major, then window row-major (j outer,
// i inner).
template <typename T>
struct CorrelationVolume {
  Tensor3<T> scores;
  std::vector<ChannelMeta> meta;
};

// Level 0 is the source feature map; each next level halves the resolution
// by 2x2 mean pooling.
template <typename T>
struct KeyPyramid {
  std::vector<Tensor3<T>> levels;
};

template <typename T>
KeyPyramid<T> build_key_pyramid(const Tensor3<T>& features,
                                const PyramidConfig& config) {
  config.validate();
  const int m = 1 << (config.levels - 1);
  if (features.height() % m != 0 || features.width() % m != 0) {
    throw ContractError("build_key_pyramid: feature dimensions " +
                        features.shape_string() + " not divisible by " +
                        std::to_string(m));
  }
  KeyPyramid<T> pyramid;
  pyramid.levels.reserve(config.levels);
  pyramid.levels.push_back(features);
  for (int l = 1; l < config.levels; ++l) {
    pyramid.levels.push_back(avgpool2x(pyramid.levels.back()));
  }
  return pyramid;
}

namespace detail {
inline std::vector<ChannelMeta> window_metas(const PyramidConfig& config,
                                             CorrDirection direction) {
  std::vector<ChannelMeta> metas;
  metas.reserve(config.channels_per_direction());
  for (int l = 0; l < config.levels; ++l) {
    const int r = config.radii[l];
    const int step = 1 << l;
    for (int j = -r; j <= r; ++j) {
      for (int i = -r; i <= r; ++i) {
        metas.push_back(ChannelMeta{l, step * i, step * j, direction});
      }
    }
  }
  return metas;
}
}  // namespace detail

// Dense-query unilateral correlation gathering. For every query location and
// window offset, the score is the inner product between the query feature
// vector and the key feature vector sampled at
// ((x_q + v_x) / 2^l, (y_q + v_y) / 2^l) on pyramid level l; fractional key
// coordinates are resolved bilinearly with zero outside.
template <typename T>
CorrelationVolume<T> gather_unilateral_correlation(
    const Tensor3<T>& queries, const KeyPyramid<T>& keys,
    const PyramidConfig& config,
    CorrDirection direction = CorrDirection::kZeroToOne) {
  config.validate();
  if (keys.levels.empty() ||
      static_cast<int>(keys.levels.size()) != config.levels) {
    throw ConfigError("gather: pyramid has " +
                      std::to_string(keys.levels.size()) + " levels, config " +
                      std::to_string(config.levels));
  }
  if (!queries.same_shape(keys.levels[0])) {
    throw ConfigError("gather: query shape " + queries.shape_string() +
                      " does not match key level 0 " +
                      keys.levels[0].shape_string());
  }
  const int h = queries.height(), w = queries.width(), fc = queries.channels();
  CorrelationVolume<T> volume;
  volume.meta = detail::window_metas(config, direction);
  volume.scores = Tensor3<T>(h, w, static_cast<int>(volume.meta.size()));
  const T scale = config.normalize_by_sqrt_c
                      ? T(1) / std::sqrt(static_cast<T>(fc))
                      : T(1);
  parallel_for(0, h, [&](int yq) {
    for (int xq = 0; xq < w; ++xq) {
      int ch = 0;
      for (int l = 0; l < config.levels; ++l) {
        const Tensor3<T>& key = keys.levels[l];
        const int r = config.radii[l];
        const T inv = T(1) / static_cast<T>(1 << l);
        const T bx = static_cast<T>(xq) * inv;
        const T by = static_cast<T>(yq) * inv;
        for (int j = -r; j <= r; ++j) {
          for (int i = -r; i <= r; ++i) {
            T score = T(0);
            for (int c = 0; c < fc; ++c) {
              score += queries(yq, xq, c) *
                       bilinear_sample(key, bx + static_cast<T>(i),
                                       by + static_cast<T>(j), c);
            }
            volume.scores(yq, xq, ch++) = score * scale;
          }
        }
      }
    }
  });
  return volume;
}

template <typename T>
struct GatherAdjoint {
  Tensor3<T> d_queries;
  std::vector<Tensor3<T>> d_key_levels;
};

// Adjoint of the gather: score cotangents flow back into the query vectors
// and into the bilinear taps of every pyramid level.
template <typename T>
GatherAdjoint<T> gather_unilateral_correlation_adjoint(
    const Tensor3<T>& queries, const KeyPyramid<T>& keys,
    const PyramidConfig& config, const Tensor3<T>& d_scores) {
  config.validate();
  const int h = queries.height(), w = queries.width(), fc = queries.channels();
  GatherAdjoint<T> adj;
  adj.d_queries = Tensor3<T>(h, w, fc);
  for (const auto& level : keys.levels) {
    adj.d_key_levels.emplace_back(level.height(), level.width(),
                                  level.channels());
  }
  const T scale = config.normalize_by_sqrt_c
                      ? T(1) / std::sqrt(static_cast<T>(fc))
                      : T(1);
  for (int yq = 0; yq < h; ++yq) {
    for (int xq = 0; xq < w; ++xq) {
      int ch = 0;
      for (int l = 0; l < config.levels; ++l) {
        const Tensor3<T>& key = keys.levels[l];
        Tensor3<T>& d_key = adj.d_key_levels[l];
        const int kh = key.height(), kw = key.width();
        const int r = config.radii[l];
        const T inv = T(1) / static_cast<T>(1 << l);
        for (int j = -r; j <= r; ++j) {
          for (int i = -r; i <= r; ++i) {
            const T g = d_scores(yq, xq, ch++) * scale;
            if (g == T(0)) continue;
            const T x = static_cast<T>(xq) * inv + static_cast<T>(i);
            const T y = static_cast<T>(yq) * inv + static_cast<T>(j);
            if (x <= T(-1) || x >= T(kw) || y <= T(-1) || y >= T(kh)) continue;
            const T fx = std::floor(x), fy = std::floor(y);
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            const T ax = x - fx, ay = y - fy;
            const T ws[4] = {(T(1) - ax) * (T(1) - ay), ax * (T(1) - ay),
                             (T(1) - ax) * ay, ax * ay};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int c = 0; c < fc; ++c) {
              T sampled = T(0);
              for (int t = 0; t < 4; ++t) {
                if (ws[t] == T(0)) continue;
                if (xs[t] < 0 || xs[t] >= kw || ys[t] < 0 || ys[t] >= kh) {
                  continue;
                }
                sampled += ws[t] * key(ys[t], xs[t], c);
                d_key(ys[t], xs[t], c) += g * ws[t] * queries(yq, xq, c);
              }
              adj.d_queries(yq, xq, c) += g * sampled;
            }
          }
        }
      }
    }
  }
  return adj;
}

// Denoising block: output = corr + conv1(act(conv0(corr))). Displacement
// metadata passes through unchanged.
template <typename T>
CorrelationVolume<T> enhance_correlation(const CorrelationVolume<T>& corr,
                                         const ConvSpec<T>& conv0,
                                         const ConvSpec<T>& conv1) {
  const int ch = corr.scores.channels();
  if (conv0.in_channels != ch || conv1.out_channels != ch) {
    throw ConfigError("enhance_correlation: conv channels do not match volume (" +
                      std::to_string(ch) + " channels)");
  }
  Tensor3<T> y = conv2d(leaky_relu(conv2d(corr.scores, conv0)), conv1);
  CorrelationVolume<T> out;
  out.meta = corr.meta;
  out.scores = corr.scores;
  for (size_t i = 0; i < y.size(); ++i) {
    out.scores.data()[i] += y.data()[i];
  }
  return out;
}

// Spatial alignment: shifts each score channel along +fraction * v_c so high
// activations line up with the intermediate frame.
template <typename T>
CorrelationVolume<T> distribute_correlation(const CorrelationVolume<T>& corr,
                                            T fraction) {
  CorrelationVolume<T> out;
  out.meta = corr.meta;
  out.scores = Tensor3<T>(corr.scores.height(), corr.scores.width(),
                          corr.scores.channels());
  const int h = corr.scores.height(), w = corr.scores.width();
  for (int c = 0; c < corr.scores.channels(); ++c) {
    const T dx = fraction * static_cast<T>(corr.meta[c].vx);
    const T dy = fraction * static_cast<T>(corr.meta[c].vy);
    parallel_for(0, h, [&](int y) {
      const T sy = static_cast<T>(y) - dy;
      for (int x = 0; x < w; ++x) {
        out.scores(y, x, c) =
            bilinear_sample(corr.scores, static_cast<T>(x) - dx, sy, c);
      }
    });
  }
  return out;
}

// Adjoint of distribute: each channel's cotangent is translated by the
// opposite offset.
template <typename T>
Tensor3<T> distribute_correlation_adjoint(const std::vector<ChannelMeta>& meta,
                                          T fraction, const Tensor3<T>& d_out) {
  Tensor3<T> d_scores(d_out.height(), d_out.width(), d_out.channels());
  const int h = d_out.height(), w = d_out.width();
  for (int c = 0; c < d_out.channels(); ++c) {
    const T dx = -fraction * static_cast<T>(meta[c].vx);
    const T dy = -fraction * static_cast<T>(meta[c].vy);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        d_scores(y, x, c) =
            bilinear_sample(d_out, static_cast<T>(x) - dx,
                            static_cast<T>(y) - dy, c);
      }
    }
  }
  return d_scores;
}

// Three stride-2 convolutions with hidden activations; output is 1/8 the
// input resolution.
template <typename T>
struct FeatureExtractorWeights {
  std::vector<ConvSpec<T>> convs;  // exactly three, stride 2

  void validate() const {
    if (convs.size() != 3) {
      throw ConfigError("FeatureExtractorWeights: expected 3 layers");
    }
    for (const auto& c : convs) {
      if (c.stride != 2) {
        throw ConfigError("FeatureExtractorWeights: layers must have stride 2");
      }
    }
  }
};

template <typename T>
Tensor3<T> extract_features(const Tensor3<T>& frame,
                            const FeatureExtractorWeights<T>& weights) {
  weights.validate();
  if (frame.height() % 8 != 0 || frame.width() % 8 != 0) {
    throw ContractError("extract_features: frame dimensions " +
                        frame.shape_string() + " must be multiples of 8");
  }
  Tensor3<T> f = frame;
  for (const auto& conv : weights.convs) {
    f = leaky_relu(conv2d(f, conv));
  }
  return f;
}

template <typename T>
struct EnhanceWeights {
  ConvSpec<T> conv0;
  ConvSpec<T> conv1;
};

// Assembles the bilateral volume from feature maps that are already
// extracted. Odd feature extents are zero-padded up to the pyramid's
// divisibility requirement for gathering, then the scores are cropped back
// to the dense query grid before enhancement. Padded queries carry zero
// feature vectors, so the cropped scores are unaffected.
template <typename T>
CorrelationVolume<T> assemble_dqbc_from_features(const Tensor3<T>& f0,
                                                 const Tensor3<T>& f1,
                                                 const EnhanceWeights<T>& enh,
                                                 const PyramidConfig& config,
                                                 T t) {
  require_same_shape(f0, f1, "assemble_dqbc");
  config.validate();
  const int m = 1 << (config.levels - 1);
  const Tensor3<T> f0p = pad_zero_to_multiple(f0, m);
  const Tensor3<T> f1p = pad_zero_to_multiple(f1, m);

  auto gather_cropped = [&](const Tensor3<T>& q, const Tensor3<T>& k,
                            CorrDirection dir) {
    CorrelationVolume<T> v = gather_unilateral_correlation(
        q, build_key_pyramid(k, config), config, dir);
    if (v.scores.height() != f0.height() || v.scores.width() != f0.width()) {
      v.scores = crop(v.scores, 0, 0, f0.height(), f0.width());
    }
    return v;
  };

  CorrelationVolume<T> uni01 =
      gather_cropped(f0p, f1p, CorrDirection::kZeroToOne);
  CorrelationVolume<T> uni10 =
      gather_cropped(f1p, f0p, CorrDirection::kOneToZero);

  CorrelationVolume<T> bi_t0 =
      distribute_correlation(enhance_correlation(uni01, enh.conv0, enh.conv1), t);
  CorrelationVolume<T> bi_t1 = distribute_correlation(
      enhance_correlation(uni10, enh.conv0, enh.conv1), T(1) - t);

  CorrelationVolume<T> dqbc;
  dqbc.scores = concat_channels<T>({&bi_t0.scores, &bi_t1.scores});
  dqbc.meta = bi_t0.meta;
  dqbc.meta.insert(dqbc.meta.end(), bi_t1.meta.begin(), bi_t1.meta.end());
  return dqbc;
}

// Full correlation stage: feature extraction on both frames (shared
// weights), gathering in both directions, shared enhancement, then spatial
// alignment with fractions t and 1 - t.
template <typename T>
CorrelationVolume<T> assemble_dqbc(const Tensor3<T>& frame0,
                                   const Tensor3<T>& frame1,
                                   const FeatureExtractorWeights<T>& extractor,
                                   const EnhanceWeights<T>& enh,
                                   const PyramidConfig& config, T t) {
  require_same_shape(frame0, frame1, "assemble_dqbc");
  const Tensor3<T> f0 = extract_features(frame0, extractor);
  const Tensor3<T> f1 = extract_features(frame1, extractor);
  return assemble_dqbc_from_features(f0, f1, enh, config, t);
}

}  // namespace dqbc
