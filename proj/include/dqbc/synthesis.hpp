#pragma once

#include <utility>
#include <vector>

#include "dqbc/motion.hpp"
#include "dqbc/ops.hpp"
#include "dqbc/tensor.hpp"

namespace dqbc {

template <typename T>
struct SynthUpWeights {
  ConvSpec<T> fuse;  // consumes [hidden, warped ctx pair]
  ConvSpec<T> rb0;   // residual block: conv -> act -> conv + skip
  ConvSpec<T> rb1;
};

template <typename T>
struct SynthWeights {
  std::vector<std::vector<ConvSpec<T>>> down;  // 3 blocks x 2 convs, first stride 2
  std::vector<SynthUpWeights<T>> up;           // 3 blocks
  ConvSpec<T> head;                            // 4 channels: 3 for R, 1 for dO
};

template <typename T>
struct SynthesisInputs {
  Tensor3<T> warped0;
  Tensor3<T> warped1;
  OcclusionMap<T> occlusion;
  // Warped context pairs shared from the MRM, at 1/8, 1/4 and 1/2.
  std::vector<std::pair<Tensor3<T>, Tensor3<T>>> warped_contexts;
};

template <typename T>
struct SynthesisOutput {
  Tensor3<T> residual_image;      // 3 channels, unbounded
  Tensor3<T> residual_occlusion;  // 1 channel, unbounded pre-clamp
};

namespace detail {
template <typename T>
Tensor3<T> residual_block(const Tensor3<T>& in, const ConvSpec<T>& c0,
                          const ConvSpec<T>& c1) {
  Tensor3<T> y = conv2d(leaky_relu(conv2d(in, c0)), c1);
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] += in.data()[i];
  return y;
}
}  // namespace detail

// U-shaped synthesis network. The encoder runs three ConvDown blocks from
// the [warped frames, occlusion] stack to 1/8 resolution; each decoder step
// fuses the hidden state with the matching-resolution warped context pair,
// applies a residual block, and doubles the resolution. The head emits the
// residual image and residual occlusion.
template <typename T>
SynthesisOutput<T> synthnet_forward(const SynthesisInputs<T>& inputs,
                                    const SynthWeights<T>& weights) {
  require_same_shape(inputs.warped0, inputs.warped1, "synthnet_forward");
  if (inputs.warped0.height() % 8 != 0 || inputs.warped0.width() % 8 != 0) {
    throw ContractError("synthnet_forward: inputs must be padded to multiples of 8");
  }
  if (inputs.occlusion.height() != inputs.warped0.height() ||
      inputs.occlusion.width() != inputs.warped0.width()) {
    throw ConfigError("synthnet_forward: occlusion resolution mismatch");
  }
  if (weights.down.size() != 3 || weights.up.size() != 3 ||
      inputs.warped_contexts.size() != 3) {
    throw ConfigError("synthnet_forward: expected 3 encoder blocks, 3 decoder blocks and 3 context pairs");
  }

  Tensor3<T> x = concat_channels<T>(
      {&inputs.warped0, &inputs.warped1, &inputs.occlusion.tensor()});
  for (const auto& block : weights.down) {
    for (const auto& conv : block) x = leaky_relu(conv2d(x, conv));
  }

  // Decoder consumes context pairs from coarse (1/8) to fine (1/2).
  for (int i = 0; i < 3; ++i) {
    const auto& pair = inputs.warped_contexts[i];
    if (pair.first.height() != x.height() || pair.first.width() != x.width()) {
      throw ConfigError("synthnet_forward: context pair resolution mismatch at decoder step " +
                        std::to_string(i));
    }
    Tensor3<T> fused = concat_channels<T>({&x, &pair.first, &pair.second});
    fused = leaky_relu(conv2d(fused, weights.up[i].fuse));
    fused = detail::residual_block(fused, weights.up[i].rb0, weights.up[i].rb1);
    x = upsample2x_nearest(fused);
  }

  Tensor3<T> head = conv2d(x, weights.head);
  SynthesisOutput<T> out;
  out.residual_image = Tensor3<T>(head.height(), head.width(), 3);
  out.residual_occlusion = Tensor3<T>(head.height(), head.width(), 1);
  for (int y = 0; y < head.height(); ++y) {
    for (int xx = 0; xx < head.width(); ++xx) {
      out.residual_image(y, xx, 0) = head(y, xx, 0);
      out.residual_image(y, xx, 1) = head(y, xx, 1);
      out.residual_image(y, xx, 2) = head(y, xx, 2);
      out.residual_occlusion(y, xx, 0) = head(y, xx, 3);
    }
  }
  return out;
}

// Final blend: O_final = clamp(O + dO, 0, 1), then
// O_final * warped0 + (1 - O_final) * warped1 + R. The result is left
// unclamped; clamping to [0, 1] happens only at the image-output boundary.
template <typename T>
Tensor3<T> compose_frame(const Tensor3<T>& warped0, const Tensor3<T>& warped1,
                         const OcclusionMap<T>& occlusion,
                         const Tensor3<T>& residual_occlusion,
                         const Tensor3<T>& residual_image) {
  require_same_shape(warped0, warped1, "compose_frame");
  require_same_shape(warped0, residual_image, "compose_frame");
  const int h = warped0.height(), w = warped0.width(), ch = warped0.channels();
  if (occlusion.height() != h || occlusion.width() != w ||
      residual_occlusion.height() != h || residual_occlusion.width() != w ||
      residual_occlusion.channels() != 1) {
    throw ConfigError("compose_frame: occlusion resolution mismatch");
  }
  Tensor3<T> out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T o = std::clamp(occlusion.at(y, x) + residual_occlusion(y, x, 0),
                             T(0), T(1));
      for (int c = 0; c < ch; ++c) {
        out(y, x, c) = o * warped0(y, x, c) + (T(1) - o) * warped1(y, x, c) +
                       residual_image(y, x, c);
      }
    }
  }
  return out;
}

template <typename T>
Tensor3<T> final_occlusion(const OcclusionMap<T>& occlusion,
                           const Tensor3<T>& residual_occlusion) {
  Tensor3<T> out(occlusion.height(), occlusion.width(), 1);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      out(y, x, 0) = std::clamp(
          occlusion.at(y, x) + residual_occlusion(y, x, 0), T(0), T(1));
    }
  }
  return out;
}

}  // namespace dqbc
