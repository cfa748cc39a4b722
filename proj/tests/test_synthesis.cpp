#include <catch2/catch_amalgamated.hpp>

#include "dqbc/config.hpp"
#include "dqbc/pipeline.hpp"
#include "test_util.hpp"

using namespace dqbc;
using test_util::random_tensor;
using Catch::Approx;

namespace {

RunConfig small_run_config() {
  RunConfig cfg;
  cfg.pyramid.levels = 3;
  cfg.pyramid.radii = {2, 1, 1};
  cfg.dims.extractor = {8, 12, 16};
  cfg.dims.mgm_context = 8;
  cfg.dims.mgm_hidden = 16;
  cfg.dims.mgm_reduced = 12;
  cfg.dims.mgm_generator = 10;
  cfg.dims.context = {4, 5, 6};
  cfg.dims.upblock_hidden = 8;
  cfg.dims.synth_down = {6, 8, 10};
  cfg.dims.synth_up = {8, 6, 6};
  return cfg;
}

template <typename T>
ModelWeights<T> small_model(uint64_t seed) {
  const RunConfig cfg = small_run_config();
  const auto schema = build_schema(cfg.pyramid, cfg.dims);
  return unpack_weights<T>(init_weights(schema, seed), cfg.pyramid, cfg.dims);
}

template <typename T>
ModelWeights<T> zero_model() {
  const RunConfig cfg = small_run_config();
  const auto schema = build_schema(cfg.pyramid, cfg.dims);
  return unpack_weights<T>(zero_weights(schema), cfg.pyramid, cfg.dims);
}

template <typename T>
SynthesisInputs<T> synthetic_inputs(int h, int w, const ModelDims& dims,
                                    uint64_t seed) {
  SynthesisInputs<T> in;
  in.warped0 = random_tensor<T>(h, w, 3, seed);
  in.warped1 = random_tensor<T>(h, w, 3, seed + 1);
  in.occlusion = OcclusionMap<T>(random_tensor<T>(h, w, 1, seed + 2));
  in.warped_contexts.emplace_back(
      random_tensor<T>(h / 8, w / 8, dims.context[2], seed + 3),
      random_tensor<T>(h / 8, w / 8, dims.context[2], seed + 4));
  in.warped_contexts.emplace_back(
      random_tensor<T>(h / 4, w / 4, dims.context[1], seed + 5),
      random_tensor<T>(h / 4, w / 4, dims.context[1], seed + 6));
  in.warped_contexts.emplace_back(
      random_tensor<T>(h / 2, w / 2, dims.context[0], seed + 7),
      random_tensor<T>(h / 2, w / 2, dims.context[0], seed + 8));
  return in;
}

}  // namespace

TEST_CASE("synthnet_forward output shapes and determinism", "[synthesis]") {
  const auto model = small_model<float>(601);
  const auto inputs =
      synthetic_inputs<float>(64, 64, small_run_config().dims, 602);

  const auto out = synthnet_forward(inputs, model.synth);
  REQUIRE(out.residual_image.height() == 64);
  REQUIRE(out.residual_image.width() == 64);
  REQUIRE(out.residual_image.channels() == 3);
  REQUIRE(out.residual_occlusion.channels() == 1);
  REQUIRE(out.residual_image.all_finite());

  const auto again = synthnet_forward(inputs, model.synth);
  REQUIRE(out.residual_image.bitwise_equal(again.residual_image));
  REQUIRE(out.residual_occlusion.bitwise_equal(again.residual_occlusion));
}

TEST_CASE("synthnet_forward with zero weights emits zero residuals",
          "[synthesis]") {
  const auto model = zero_model<float>();
  const auto inputs =
      synthetic_inputs<float>(32, 32, small_run_config().dims, 611);
  const auto out = synthnet_forward(inputs, model.synth);
  for (size_t i = 0; i < out.residual_image.size(); ++i) {
    REQUIRE(out.residual_image.data()[i] == 0.0f);
  }
  for (size_t i = 0; i < out.residual_occlusion.size(); ++i) {
    REQUIRE(out.residual_occlusion.data()[i] == 0.0f);
  }
}

TEST_CASE("compose_frame degenerate occlusion cases", "[synthesis][exact]") {
  const auto w0 = random_tensor<double>(6, 6, 3, 621);
  const auto w1 = random_tensor<double>(6, 6, 3, 622);
  const Tensor3<double> zero1(6, 6, 1);
  const Tensor3<double> zero3(6, 6, 3);

  const auto all0 = OcclusionMap<double>(Tensor3<double>::filled(6, 6, 1, 0.0));
  const auto all1 = OcclusionMap<double>(Tensor3<double>::filled(6, 6, 1, 1.0));
  const auto half = OcclusionMap<double>(Tensor3<double>::filled(6, 6, 1, 0.5));

  REQUIRE(compose_frame(w0, w1, all1, zero1, zero3).bitwise_equal(w0));
  REQUIRE(compose_frame(w0, w1, all0, zero1, zero3).bitwise_equal(w1));

  const auto blend = compose_frame(w0, w1, half, zero1, zero3);
  for (size_t i = 0; i < blend.size(); ++i) {
    REQUIRE(blend.data()[i] ==
            Approx(0.5 * (w0.data()[i] + w1.data()[i])).margin(1e-15));
  }

  // constant alpha blend stays a per-element convex combination
  const auto alpha = OcclusionMap<double>(Tensor3<double>::filled(6, 6, 1, 0.3));
  const auto mix = compose_frame(w0, w1, alpha, zero1, zero3);
  for (size_t i = 0; i < mix.size(); ++i) {
    REQUIRE(mix.data()[i] ==
            Approx(0.3 * w0.data()[i] + 0.7 * w1.data()[i]).margin(1e-15));
  }
}

TEST_CASE("compose_frame is linear in images and residual for fixed blend",
          "[synthesis]") {
  const auto w0a = random_tensor<double>(5, 5, 3, 631);
  const auto w0b = random_tensor<double>(5, 5, 3, 632);
  const auto w1 = random_tensor<double>(5, 5, 3, 633);
  const auto r = random_tensor<double>(5, 5, 3, 634, -0.5, 0.5);
  const auto occ = OcclusionMap<double>(random_tensor<double>(5, 5, 1, 635));
  const Tensor3<double> zero1(5, 5, 1);
  const Tensor3<double> zero3(5, 5, 3);

  const double a = 0.3, b = 0.7;
  Tensor3<double> mix(5, 5, 3);
  for (size_t i = 0; i < mix.size(); ++i) {
    mix.data()[i] = a * w0a.data()[i] + b * w0b.data()[i];
  }
  const auto lhs = compose_frame(mix, w1, occ, zero1, r);
  const auto ca = compose_frame(w0a, w1, occ, zero1, r);
  const auto cb = compose_frame(w0b, w1, occ, zero1, r);
  const auto base = compose_frame(zero3, w1, occ, zero1, r);
  for (size_t i = 0; i < lhs.size(); ++i) {
    const double expect = a * ca.data()[i] + b * cb.data()[i] +
                          (1.0 - a - b) * base.data()[i];
    REQUIRE(lhs.data()[i] == Approx(expect).margin(1e-12));
  }
}

TEST_CASE("interpolate_midframe on identical frames with zero weights",
          "[synthesis][exact]") {
  const auto cfg = small_run_config();
  const auto model = zero_model<float>();
  const auto frame = random_tensor<float>(48, 48, 3, 641);
  const auto result = interpolate_midframe(frame, frame, model, cfg.pyramid, 0.5f);
  REQUIRE(result.frame.bitwise_equal(frame));
}

TEST_CASE("interpolate_midframe pads and crops non-multiple-of-8 sizes",
          "[synthesis]") {
  const auto cfg = small_run_config();
  const auto model = small_model<float>(651);
  const auto frame0 = random_tensor<float>(100, 68, 3, 652);
  const auto frame1 = random_tensor<float>(100, 68, 3, 653);
  const auto result =
      interpolate_midframe(frame0, frame1, model, cfg.pyramid, 0.5f);
  REQUIRE(result.frame.height() == 100);
  REQUIRE(result.frame.width() == 68);
  REQUIRE(result.diagnostics.padded_height == 104);
  REQUIRE(result.diagnostics.padded_width == 72);
  REQUIRE(result.frame.all_finite());
  for (size_t i = 0; i < result.frame.size(); ++i) {
    REQUIRE(result.frame.data()[i] >= 0.0f);
    REQUIRE(result.frame.data()[i] <= 1.0f);
  }
}

TEST_CASE("interpolate_midframe diagnostics resolutions", "[synthesis]") {
  const auto cfg = small_run_config();
  const auto model = small_model<float>(661);
  const auto frame0 = random_tensor<float>(64, 64, 3, 662);
  const auto frame1 = random_tensor<float>(64, 64, 3, 663);
  const auto result =
      interpolate_midframe(frame0, frame1, model, cfg.pyramid, 0.5f);

  REQUIRE(result.frame.height() == 64);
  REQUIRE(result.frame.channels() == 3);
  REQUIRE(result.diagnostics.trace.size() == 4);
  REQUIRE(result.diagnostics.trace[0].first.height() == 8);
  REQUIRE(result.diagnostics.trace[1].first.height() == 16);
  REQUIRE(result.diagnostics.trace[2].first.height() == 32);
  REQUIRE(result.diagnostics.trace[3].first.height() == 64);
  REQUIRE(result.diagnostics.field0.height() == 64);
  REQUIRE(result.diagnostics.occlusion.height() == 64);
  REQUIRE(result.diagnostics.occlusion_final.height() == 64);
  REQUIRE(result.diagnostics.residual_image.channels() == 3);

  const auto again =
      interpolate_midframe(frame0, frame1, model, cfg.pyramid, 0.5f);
  REQUIRE(result.frame.bitwise_equal(again.frame));
}

TEST_CASE("interpolate_midframe validates inputs", "[synthesis][errors]") {
  const auto cfg = small_run_config();
  const auto model = small_model<float>(671);
  const auto good = random_tensor<float>(32, 32, 3, 672);

  REQUIRE_THROWS_AS(interpolate_midframe(good, random_tensor<float>(32, 24, 3, 673),
                                         model, cfg.pyramid, 0.5f),
                    ConfigError);
  REQUIRE_THROWS_AS(interpolate_midframe(random_tensor<float>(32, 32, 2, 674),
                                         random_tensor<float>(32, 32, 2, 675),
                                         model, cfg.pyramid, 0.5f),
                    ConfigError);
  auto out_of_range = good;
  out_of_range(0, 0, 0) = 1.5f;
  REQUIRE_THROWS_AS(
      interpolate_midframe(out_of_range, good, model, cfg.pyramid, 0.5f),
      DataError);
}
