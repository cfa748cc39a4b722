#pragma once

#include <utility>
#include <vector>

#include "dqbc/synthesis.hpp"
#include "dqbc/weights.hpp"

namespace dqbc {

// Everything the pipeline produced besides the interpolated frame, at the
// padded working resolution.
template <typename T>
struct InterpolationDiagnostics {
  int padded_height = 0;
  int padded_width = 0;
  MotionField<T> field0;  // M_{t->0}, full padded resolution
  MotionField<T> field1;  // M_{t->1}
  OcclusionMap<T> occlusion;
  Tensor3<T> occlusion_final;   // clamp(O + dO)
  Tensor3<T> residual_image;
  std::vector<std::pair<MotionField<T>, MotionField<T>>> trace;
};

template <typename T>
struct InterpolationResult {
  Tensor3<T> frame;  // original resolution, clamped to [0, 1]
  InterpolationDiagnostics<T> diagnostics;
};

// Full pipeline: correlation modeling, motion estimation, frame synthesis.
// Frames are reflect-padded to the next multiple of 8, pushed through
// assemble_dqbc -> mgm_generate -> run_mrm -> backward warping ->
// synthnet_forward -> compose_frame, then cropped back and clamped for image
// emission.
template <typename T>
InterpolationResult<T> interpolate_midframe(const Tensor3<T>& frame0,
                                            const Tensor3<T>& frame1,
                                            const ModelWeights<T>& weights,
                                            const PyramidConfig& config,
                                            T t = T(0.5)) {
  require_same_shape(frame0, frame1, "interpolate_midframe");
  if (frame0.channels() != 3) {
    throw ConfigError("interpolate_midframe: frames must have 3 channels");
  }
  require_finite(frame0, "interpolate_midframe");
  require_finite(frame1, "interpolate_midframe");
  for (const Tensor3<T>* f : {&frame0, &frame1}) {
    for (size_t i = 0; i < f->size(); ++i) {
      const T v = f->data()[i];
      if (v < T(0) || v > T(1)) {
        throw DataError("interpolate_midframe: frame values must lie in [0, 1]");
      }
    }
  }

  const int oh = frame0.height(), ow = frame0.width();
  const Tensor3<T> p0 = pad_reflect_to_multiple(frame0, 8);
  const Tensor3<T> p1 = pad_reflect_to_multiple(frame1, 8);

  const CorrelationVolume<T> dqbc =
      assemble_dqbc(p0, p1, weights.extractor, weights.enhance, config, t);
  auto [m0, m1] = mgm_generate(dqbc, p0, p1, weights.mgm);

  const ContextPyramid<T> ctx0 = extract_context_pyramid(p0, weights.context);
  const ContextPyramid<T> ctx1 = extract_context_pyramid(p1, weights.context);
  MrmResult<T> mrm = run_mrm(m0, m1, ctx0, ctx1, weights.mrm);

  SynthesisInputs<T> synth_in;
  synth_in.warped0 = backward_warp(p0, mrm.field0);
  synth_in.warped1 = backward_warp(p1, mrm.field1);
  synth_in.occlusion = mrm.occlusion;
  synth_in.warped_contexts = std::move(mrm.warped_contexts);
  const SynthesisOutput<T> synth = synthnet_forward(synth_in, weights.synth);

  Tensor3<T> composed =
      compose_frame(synth_in.warped0, synth_in.warped1, mrm.occlusion,
                    synth.residual_occlusion, synth.residual_image);

  InterpolationResult<T> result;
  result.frame = clamp01(crop(composed, 0, 0, oh, ow));
  result.diagnostics.padded_height = p0.height();
  result.diagnostics.padded_width = p0.width();
  result.diagnostics.occlusion_final =
      final_occlusion(mrm.occlusion, synth.residual_occlusion);
  result.diagnostics.residual_image = synth.residual_image;
  result.diagnostics.field0 = std::move(mrm.field0);
  result.diagnostics.field1 = std::move(mrm.field1);
  result.diagnostics.occlusion = std::move(mrm.occlusion);
  result.diagnostics.trace = std::move(mrm.trace);
  return result;
}

}  // namespace dqbc
