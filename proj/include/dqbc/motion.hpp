#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dqbc/correlation.hpp"
#include "dqbc/ops.hpp"
#include "dqbc/tensor.hpp"

namespace dqbc {

// Context features per frame at 1/8, 1/4 and 1/2 of the (padded) input
// resolution. c0 feeds the first UpBlock, c2 the last.
template <typename T>
struct ContextPyramid {
  Tensor3<T> c0;  // 1/8
  Tensor3<T> c1;  // 1/4
  Tensor3<T> c2;  // 1/2
};

// Three down-sampling blocks, each a stride-2 conv followed by a stride-1
// conv, both with hidden activations.
template <typename T>
struct ContextNetWeights {
  std::vector<std::vector<ConvSpec<T>>> blocks;  // 3 blocks x 2 convs
};

template <typename T>
ContextPyramid<T> extract_context_pyramid(const Tensor3<T>& frame,
                                          const ContextNetWeights<T>& weights) {
  if (frame.height() % 8 != 0 || frame.width() % 8 != 0) {
    throw ContractError("extract_context_pyramid: frame dimensions " +
                        frame.shape_string() + " must be multiples of 8");
  }
  if (weights.blocks.size() != 3) {
    throw ConfigError("extract_context_pyramid: expected 3 blocks");
  }
  auto block = [](const Tensor3<T>& in, const std::vector<ConvSpec<T>>& convs) {
    Tensor3<T> f = in;
    for (const auto& conv : convs) f = leaky_relu(conv2d(f, conv));
    return f;
  };
  ContextPyramid<T> ctx;
  ctx.c2 = block(frame, weights.blocks[0]);    // 1/2
  ctx.c1 = block(ctx.c2, weights.blocks[1]);   // 1/4
  ctx.c0 = block(ctx.c1, weights.blocks[2]);   // 1/8
  return ctx;
}

// Motion Generation Module: context CNN over the concatenated frames, a
// per-pixel one-hidden-layer transform over the correlation volume, and a
// generator CNN emitting the two preliminary motion fields.
template <typename T>
struct MgmWeights {
  std::vector<ConvSpec<T>> context;   // 3 stride-2 convs
  std::vector<ConvSpec<T>> reduce;    // 2 1x1 convs
  std::vector<ConvSpec<T>> generate;  // 2 convs, last emits 4 channels
};

template <typename T>
std::pair<MotionField<T>, MotionField<T>> mgm_generate(
    const CorrelationVolume<T>& dqbc, const Tensor3<T>& frame0,
    const Tensor3<T>& frame1, const MgmWeights<T>& weights) {
  require_same_shape(frame0, frame1, "mgm_generate");
  if (dqbc.scores.height() * 8 != frame0.height() ||
      dqbc.scores.width() * 8 != frame0.width()) {
    throw ConfigError("mgm_generate: volume " + dqbc.scores.shape_string() +
                      " is not at 1/8 of frame " + frame0.shape_string());
  }
  if (weights.generate.empty() || weights.generate.back().out_channels != 4) {
    throw ConfigError("mgm_generate: generator must output 4 channels");
  }

  Tensor3<T> ctx = concat_channels<T>({&frame0, &frame1});
  for (const auto& conv : weights.context) ctx = leaky_relu(conv2d(ctx, conv));

  Tensor3<T> mixed = leaky_relu(conv2d(dqbc.scores, weights.reduce[0]));
  mixed = conv2d(mixed, weights.reduce[1]);

  Tensor3<T> g = concat_channels<T>({&ctx, &mixed});
  for (size_t i = 0; i + 1 < weights.generate.size(); ++i) {
    g = leaky_relu(conv2d(g, weights.generate[i]));
  }
  g = conv2d(g, weights.generate.back());

  const int h = g.height(), w = g.width();
  MotionField<T> m0 = MotionField<T>::zeros(h, w);
  MotionField<T> m1 = MotionField<T>::zeros(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m0.dx(y, x) = g(y, x, 0);
      m0.dy(y, x) = g(y, x, 1);
      m1.dx(y, x) = g(y, x, 2);
      m1.dy(y, x) = g(y, x, 3);
    }
  }
  return {std::move(m0), std::move(m1)};
}

inline constexpr int kConvexTaps = 9;           // 3x3 neighborhood
inline constexpr int kConvexSubPixels = 4;      // 2x2 fine positions
inline constexpr int kConvexLogitChannels = 36; // 4 sub-pixels x 9 taps

// Convex-combination 2x up-sampling. Fine pixel (2y+a, 2x+b) blends the 3x3
// coarse neighborhood of (y, x) with the softmax of its own 9 logits, then
// doubles the result so displacements stay in the finer grid's pixel units.
// Logit channel layout: (a*2 + b) * 9 + (dy+1) * 3 + (dx+1).
template <typename T>
MotionField<T> convex_upsample(const MotionField<T>& field,
                               const Tensor3<T>& weight_logits) {
  const int h = field.height(), w = field.width();
  if (weight_logits.channels() != kConvexLogitChannels) {
    throw ConfigError("convex_upsample: expected " +
                      std::to_string(kConvexLogitChannels) +
                      " logit channels, got " +
                      std::to_string(weight_logits.channels()));
  }
  if (weight_logits.height() != h || weight_logits.width() != w) {
    throw ConfigError("convex_upsample: logit resolution mismatch");
  }
  const Tensor3<T> weights = softmax_groups(weight_logits, kConvexTaps);
  const Tensor3<T>& coarse = field.tensor();
  Tensor3<T> fine(2 * h, 2 * w, 2);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const int group = (a * 2 + b) * kConvexTaps;
          for (int comp = 0; comp < 2; ++comp) {
            T acc = T(0);
            for (int dy = -1; dy <= 1; ++dy) {
              const int sy = y + dy;
              for (int dx = -1; dx <= 1; ++dx) {
                const int sx = x + dx;
                const T m = weights(y, x, group + (dy + 1) * 3 + (dx + 1));
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += m * coarse(sy, sx, comp);
              }
            }
            fine(2 * y + a, 2 * x + b, comp) = T(2) * acc;
          }
        }
      }
    }
  });
  return MotionField<T>(std::move(fine));
}

template <typename T>
struct ConvexUpsampleAdjoint {
  Tensor3<T> d_field;
  Tensor3<T> d_logits;
};

template <typename T>
ConvexUpsampleAdjoint<T> convex_upsample_adjoint(
    const MotionField<T>& field, const Tensor3<T>& weight_logits,
    const Tensor3<T>& d_fine) {
  const int h = field.height(), w = field.width();
  const Tensor3<T> weights = softmax_groups(weight_logits, kConvexTaps);
  const Tensor3<T>& coarse = field.tensor();
  ConvexUpsampleAdjoint<T> adj{Tensor3<T>(h, w, 2),
                               Tensor3<T>(h, w, kConvexLogitChannels)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const int group = (a * 2 + b) * kConvexTaps;
          T d_m[kConvexTaps] = {};
          for (int comp = 0; comp < 2; ++comp) {
            const T g = T(2) * d_fine(2 * y + a, 2 * x + b, comp);
            for (int dy = -1; dy <= 1; ++dy) {
              const int sy = y + dy;
              for (int dx = -1; dx <= 1; ++dx) {
                const int sx = x + dx;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                const int k = (dy + 1) * 3 + (dx + 1);
                adj.d_field(sy, sx, comp) += g * weights(y, x, group + k);
                d_m[k] += g * coarse(sy, sx, comp);
              }
            }
          }
          // softmax backward within the 9-tap group
          T dot = T(0);
          for (int k = 0; k < kConvexTaps; ++k) {
            dot += d_m[k] * weights(y, x, group + k);
          }
          for (int k = 0; k < kConvexTaps; ++k) {
            adj.d_logits(y, x, group + k) =
                weights(y, x, group + k) * (d_m[k] - dot);
          }
        }
      }
    }
  }
  return adj;
}

// One refinement block: conv weights for the feature trunk, the combined
// residual-motion / up-sampling-logit head, and (blocks 2-3) the pathway
// that folds the incoming hidden state into the trunk.
template <typename T>
struct UpBlockWeights {
  std::optional<ConvSpec<T>> hidden;  // absent for the first block
  ConvSpec<T> trunk0;
  ConvSpec<T> trunk1;
  ConvSpec<T> head;  // 4 residual channels + 36 logit channels
};

inline constexpr int kUpBlockHeadChannels = 4 + kConvexLogitChannels;

template <typename T>
struct UpBlockResult {
  MotionField<T> field0;
  MotionField<T> field1;
  Tensor3<T> hidden;  // at the up-sampled resolution
  Tensor3<T> warped_ctx0;
  Tensor3<T> warped_ctx1;
};

// Warps both context maps with the incoming fields, runs the trunk over
// [fields, warped contexts(, hidden)], adds the residual motion, and
// up-samples both fields with the head's convex weights. The hidden feature
// handed to the next block is the trunk output replicated to 2x resolution.
template <typename T>
UpBlockResult<T> upblock_step(int index, const MotionField<T>& field0,
                              const MotionField<T>& field1,
                              const Tensor3<T>& ctx0, const Tensor3<T>& ctx1,
                              const std::optional<Tensor3<T>>& hidden,
                              const UpBlockWeights<T>& weights) {
  if (index < 1 || index > 3) {
    throw ContractError("upblock_step: index must be 1, 2 or 3");
  }
  if (index == 1 && hidden.has_value()) {
    throw ContractError("upblock_step: block 1 takes no hidden state");
  }
  if (index > 1 && !hidden.has_value()) {
    throw ContractError("upblock_step: block " + std::to_string(index) +
                        " requires the previous hidden state");
  }
  if (weights.head.out_channels != kUpBlockHeadChannels) {
    throw ConfigError("upblock_step: head must output " +
                      std::to_string(kUpBlockHeadChannels) + " channels");
  }
  const int h = field0.height(), w = field0.width();
  if (ctx0.height() != h || ctx0.width() != w) {
    throw ConfigError("upblock_step: context resolution does not match fields");
  }

  UpBlockResult<T> result;
  result.warped_ctx0 = backward_warp(ctx0, field0);
  result.warped_ctx1 = backward_warp(ctx1, field1);

  Tensor3<T> trunk_in = concat_channels<T>(
      {&field0.tensor(), &field1.tensor(), &result.warped_ctx0,
       &result.warped_ctx1});
  Tensor3<T> pre = conv2d(trunk_in, weights.trunk0);
  if (hidden.has_value()) {
    if (!weights.hidden.has_value()) {
      throw ConfigError("upblock_step: block lacks hidden-pathway weights");
    }
    Tensor3<T> hp = conv2d(*hidden, *weights.hidden);
    require_same_shape(pre, hp, "upblock_step hidden pathway");
    for (size_t i = 0; i < pre.size(); ++i) pre.data()[i] += hp.data()[i];
  }
  Tensor3<T> trunk = leaky_relu(conv2d(leaky_relu(std::move(pre)),
                                       weights.trunk1));
  Tensor3<T> head = conv2d(trunk, weights.head);

  Tensor3<T> logits(h, w, kConvexLogitChannels);
  Tensor3<T> refined0(h, w, 2), refined1(h, w, 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      refined0(y, x, 0) = field0.dx(y, x) + head(y, x, 0);
      refined0(y, x, 1) = field0.dy(y, x) + head(y, x, 1);
      refined1(y, x, 0) = field1.dx(y, x) + head(y, x, 2);
      refined1(y, x, 1) = field1.dy(y, x) + head(y, x, 3);
      for (int c = 0; c < kConvexLogitChannels; ++c) {
        logits(y, x, c) = head(y, x, 4 + c);
      }
    }
  }
  result.field0 = convex_upsample(MotionField<T>(std::move(refined0)), logits);
  result.field1 = convex_upsample(MotionField<T>(std::move(refined1)), logits);
  result.hidden = upsample2x_nearest(trunk);
  return result;
}

template <typename T>
struct MrmWeights {
  std::vector<UpBlockWeights<T>> blocks;  // exactly three
  ConvSpec<T> occlusion;                  // applied to the last hidden state
};

template <typename T>
struct MrmResult {
  MotionField<T> field0;
  MotionField<T> field1;
  OcclusionMap<T> occlusion;
  // Input fields plus each block's output, for the distillation loss.
  std::vector<std::pair<MotionField<T>, MotionField<T>>> trace;
  // Warped context pairs per block (1/8, 1/4, 1/2), shared with SynthNet.
  std::vector<std::pair<Tensor3<T>, Tensor3<T>>> warped_contexts;
};

// Chains the three UpBlocks from 1/8 resolution to full size and reads the
// occlusion map off the last hidden feature through a logistic head.
template <typename T>
MrmResult<T> run_mrm(const MotionField<T>& field0, const MotionField<T>& field1,
                     const ContextPyramid<T>& ctx0,
                     const ContextPyramid<T>& ctx1,
                     const MrmWeights<T>& weights) {
  if (weights.blocks.size() != 3) {
    throw ConfigError("run_mrm: expected 3 UpBlocks");
  }
  MrmResult<T> result;
  result.trace.emplace_back(field0, field1);

  UpBlockResult<T> b1 = upblock_step(1, field0, field1, ctx0.c0, ctx1.c0,
                                     std::optional<Tensor3<T>>{},
                                     weights.blocks[0]);
  result.trace.emplace_back(b1.field0, b1.field1);
  result.warped_contexts.emplace_back(std::move(b1.warped_ctx0),
                                      std::move(b1.warped_ctx1));

  UpBlockResult<T> b2 =
      upblock_step(2, b1.field0, b1.field1, ctx0.c1, ctx1.c1,
                   std::optional<Tensor3<T>>(std::move(b1.hidden)),
                   weights.blocks[1]);
  result.trace.emplace_back(b2.field0, b2.field1);
  result.warped_contexts.emplace_back(std::move(b2.warped_ctx0),
                                      std::move(b2.warped_ctx1));

  UpBlockResult<T> b3 =
      upblock_step(3, b2.field0, b2.field1, ctx0.c2, ctx1.c2,
                   std::optional<Tensor3<T>>(std::move(b2.hidden)),
                   weights.blocks[2]);
  result.trace.emplace_back(b3.field0, b3.field1);
  result.warped_contexts.emplace_back(std::move(b3.warped_ctx0),
                                      std::move(b3.warped_ctx1));

  Tensor3<T> occ = conv2d(b3.hidden, weights.occlusion);
  for (size_t i = 0; i < occ.size(); ++i) {
    occ.data()[i] = logistic(occ.data()[i]);
  }
  result.occlusion = OcclusionMap<T>(std::move(occ));
  result.field0 = std::move(b3.field0);
  result.field1 = std::move(b3.field1);
  return result;
}

}  // namespace dqbc
