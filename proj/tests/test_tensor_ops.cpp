#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dqbc/gradcheck.hpp"
#include "dqbc/ops.hpp"
#include "dqbc/oracles.hpp"
#include "dqbc/parallel.hpp"
#include "test_util.hpp"

using namespace dqbc;
using test_util::max_abs_diff;
using test_util::random_conv;
using test_util::random_tensor;
using Catch::Approx;

TEST_CASE("conv2d 1x1 identity kernel reproduces the input", "[core]") {
  const auto input = random_tensor<float>(5, 4, 3, 11);
  ConvSpec<float> spec = ConvSpec<float>::zeros(3, 3, 1, 1, 1, 0);
  for (int c = 0; c < 3; ++c) spec.k(c, c, 0, 0) = 1.0f;
  const auto out = conv2d(input, spec);
  REQUIRE(out.bitwise_equal(input));
}

TEST_CASE("conv2d all-ones 3x3 on a constant map", "[core]") {
  const auto input = Tensor3<double>::filled(4, 4, 1, 1.0);
  ConvSpec<double> spec = ConvSpec<double>::zeros(1, 1, 3, 3, 1, 1);
  for (auto& v : spec.kernel) v = 1.0;
  const auto out = conv2d(input, spec);
  REQUIRE(out.height() == 4);
  REQUIRE(out.width() == 4);
  REQUIRE(out(1, 1, 0) == Approx(9.0));
  REQUIRE(out(1, 2, 0) == Approx(9.0));
  REQUIRE(out(0, 0, 0) == Approx(4.0));
  REQUIRE(out(3, 3, 0) == Approx(4.0));
  REQUIRE(out(0, 1, 0) == Approx(6.0));
}

TEST_CASE("conv2d matches the naive nested-loop oracle", "[core][oracle]") {
  const auto input = random_tensor<float>(5, 5, 3, 21, -1.0f, 1.0f);
  const auto spec = random_conv<float>(4, 3, 3, 2, 1, 22);
  const auto fast = conv2d(input, spec);
  const auto naive = oracles::conv2d_naive(input, spec);
  REQUIRE(fast.same_shape(naive));
  REQUIRE(max_abs_diff(fast, naive) < 1e-6);
}

TEST_CASE("conv2d stride-1 same-padding preserves spatial size", "[core]") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    const int h = 3 + int(seed), w = 5 + int(seed) * 2;
    const auto input = random_tensor<float>(h, w, 2, seed);
    const auto spec = random_conv<float>(3, 2, 3, 1, 1, seed + 100);
    const auto out = conv2d(input, spec);
    REQUIRE(out.height() == h);
    REQUIRE(out.width() == w);
  }
}

TEST_CASE("conv2d rejects bad inputs", "[core][errors]") {
  const auto input = random_tensor<float>(4, 4, 2, 31);
  const auto spec = random_conv<float>(2, 3, 3, 1, 1, 32);
  REQUIRE_THROWS_AS(conv2d(input, spec), ConfigError);

  auto poisoned = input;
  poisoned(1, 1, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto ok_spec = random_conv<float>(2, 2, 3, 1, 1, 33);
  REQUIRE_THROWS_AS(conv2d(poisoned, ok_spec), DataError);
}

TEST_CASE("avgpool2x constant map and 2x2 block", "[core]") {
  const auto constant = Tensor3<float>::filled(6, 8, 2, 3.25f);
  const auto pooled = avgpool2x(constant);
  REQUIRE(pooled.height() == 3);
  REQUIRE(pooled.width() == 4);
  for (size_t i = 0; i < pooled.size(); ++i) {
    REQUIRE(pooled.data()[i] == 3.25f);
  }

  Tensor3<double> block(2, 2, 1);
  block(0, 0, 0) = 1.0;
  block(0, 1, 0) = 2.0;
  block(1, 0, 0) = 3.0;
  block(1, 1, 0) = 4.0;
  REQUIRE(avgpool2x(block)(0, 0, 0) == 2.5);
}

TEST_CASE("avgpool2x equals the block-mean oracle exactly in 64-bit",
          "[core][oracle]") {
  const auto input = random_tensor<double>(8, 8, 4, 41);
  const auto fast = avgpool2x(input);
  const auto naive = oracles::avgpool2x_naive(input);
  REQUIRE(fast.bitwise_equal(naive));
}

TEST_CASE("avgpool2x rejects odd dimensions", "[core][errors]") {
  REQUIRE_THROWS_AS(avgpool2x(Tensor3<float>(3, 4, 1)), ContractError);
  REQUIRE_THROWS_AS(avgpool2x(Tensor3<float>(4, 5, 1)), ContractError);
}

TEST_CASE("bilinear_sample basics", "[core]") {
  auto t = random_tensor<double>(4, 5, 2, 51);
  REQUIRE(bilinear_sample(t, 2.0, 3.0, 1) == t(3, 2, 1));

  Tensor3<double> line(1, 2, 1);
  line(0, 0, 0) = 0.0;
  line(0, 1, 0) = 1.0;
  REQUIRE(bilinear_sample(line, 0.5, 0.0, 0) == Approx(0.5));

  REQUIRE(bilinear_sample(t, -1.0, -1.0, 0) == 0.0);
  REQUIRE(bilinear_sample(t, 100.0, 0.0, 0) == 0.0);
}

TEST_CASE("backward_warp with zero flow is bitwise identity", "[core][exact]") {
  const auto source = random_tensor<float>(6, 7, 3, 61, -2.0f, 2.0f);
  const auto flow = MotionField<float>::zeros(6, 7);
  REQUIRE(backward_warp(source, flow).bitwise_equal(source));

  const auto source64 = random_tensor<double>(6, 7, 3, 62, -2.0, 2.0);
  REQUIRE(backward_warp(source64, MotionField<double>::zeros(6, 7))
              .bitwise_equal(source64));
}

TEST_CASE("backward_warp with constant integer flow shifts indices",
          "[core][exact]") {
  Tensor3<double> ramp(4, 4, 1);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) ramp(y, x, 0) = y * 4 + x;
  }
  const auto flow = MotionField<double>::constant(4, 4, 1.0, 0.0);
  const auto out = backward_warp(ramp, flow);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 3; ++x) {
      REQUIRE(out(y, x, 0) == ramp(y, x + 1, 0));
    }
    REQUIRE(out(y, 3, 0) == 0.0);
  }
}

TEST_CASE("backward_warp is linear in the source", "[core]") {
  const auto s1 = random_tensor<double>(5, 6, 2, 71);
  const auto s2 = random_tensor<double>(5, 6, 2, 72);
  const auto flow = test_util::jittered_flow<double>(5, 6, 73, 1.5);
  const double a = 0.7, b = -1.3;
  Tensor3<double> mix(5, 6, 2);
  for (size_t i = 0; i < mix.size(); ++i) {
    mix.data()[i] = a * s1.data()[i] + b * s2.data()[i];
  }
  const auto warped_mix = backward_warp(mix, flow);
  const auto w1 = backward_warp(s1, flow);
  const auto w2 = backward_warp(s2, flow);
  for (size_t i = 0; i < mix.size(); ++i) {
    REQUIRE(warped_mix.data()[i] ==
            Approx(a * w1.data()[i] + b * w2.data()[i]).margin(1e-6));
  }
}

TEST_CASE("backward_warp rejects mismatched flow resolution", "[core][errors]") {
  const auto source = random_tensor<float>(4, 4, 1, 81);
  REQUIRE_THROWS_AS(backward_warp(source, MotionField<float>::zeros(4, 5)),
                    ConfigError);
}

namespace {

DifferentiableOp warp_op() {
  DifferentiableOp op;
  op.forward = [](const std::vector<Tensor3d>& in) {
    return backward_warp(in[0], MotionField<double>(in[1]));
  };
  op.adjoint = [](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
    auto adj = backward_warp_adjoint(in[0], MotionField<double>(in[1]), dout);
    return std::vector<Tensor3d>{adj.d_source, adj.d_flow.tensor()};
  };
  return op;
}

}  // namespace

TEST_CASE("backward_warp adjoint passes finite differences", "[core][grad]") {
  const auto source = random_tensor<double>(5, 5, 2, 91);
  const auto flow = test_util::jittered_flow<double>(5, 5, 92, 1.5);
  const auto report =
      finite_diff_check(warp_op(), {source, flow.tensor()}, 1e-4);
  REQUIRE(report.gradients_finite);
  REQUIRE(report.max_rel_error < 1e-6);
}

TEST_CASE("translate_fractional identity and integer shift", "[core][exact]") {
  const auto input = random_tensor<double>(5, 6, 2, 101);
  REQUIRE(translate_fractional(input, 0.0, 0.0).bitwise_equal(input));

  const auto shifted = translate_fractional(input, 1.0, 0.0);
  for (int y = 0; y < 5; ++y) {
    for (int c = 0; c < 2; ++c) {
      REQUIRE(shifted(y, 0, c) == 0.0);
      for (int x = 1; x < 6; ++x) {
        REQUIRE(shifted(y, x, c) == input(y, x - 1, c));
      }
    }
  }
}

TEST_CASE("translate_fractional half-pixel shift averages columns", "[core]") {
  Tensor3<double> stripe(1, 4, 1);
  stripe(0, 1, 0) = 1.0;  // columns: 0 1 0 0
  const auto out = translate_fractional(stripe, 0.5, 0.0);
  REQUIRE(out(0, 0, 0) == Approx(0.0).margin(1e-15));
  REQUIRE(out(0, 1, 0) == Approx(0.5));
  REQUIRE(out(0, 2, 0) == Approx(0.5));
  REQUIRE(out(0, 3, 0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("translate_fractional composes to the identity on the interior",
          "[core]") {
  const auto input = random_tensor<double>(6, 6, 1, 111);
  const auto round_trip =
      translate_fractional(translate_fractional(input, 1.0, 0.0), -1.0, 0.0);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 5; ++x) {
      REQUIRE(round_trip(y, x, 0) == input(y, x, 0));
    }
  }
}

TEST_CASE("translate_fractional adjoint passes finite differences",
          "[core][grad]") {
  DifferentiableOp op;
  op.forward = [](const std::vector<Tensor3d>& in) {
    return translate_fractional(in[0], 0.75, -0.35);
  };
  op.adjoint = [](const std::vector<Tensor3d>&, const Tensor3d& dout) {
    return std::vector<Tensor3d>{
        translate_fractional_adjoint(0.75, -0.35, dout)};
  };
  const auto input = random_tensor<double>(5, 5, 2, 121);
  const auto report = finite_diff_check(op, {input}, 1e-4);
  REQUIRE(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax_groups basics", "[core]") {
  const auto equal = Tensor3<double>::filled(2, 2, 8, 1.7);
  const auto uniform = softmax_groups(equal, 4);
  for (size_t i = 0; i < uniform.size(); ++i) {
    REQUIRE(uniform.data()[i] == Approx(0.25));
  }

  Tensor3<double> pair(1, 1, 2);
  pair(0, 0, 0) = 0.0;
  pair(0, 0, 1) = std::log(3.0);
  const auto soft = softmax_groups(pair, 2);
  REQUIRE(soft(0, 0, 0) == Approx(0.25));
  REQUIRE(soft(0, 0, 1) == Approx(0.75));

  const auto random = random_tensor<double>(3, 3, 12, 131, -4.0, 4.0);
  const auto out = softmax_groups(random, 3);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      for (int g = 0; g < 4; ++g) {
        double sum = 0.0;
        for (int i = 0; i < 3; ++i) sum += out(y, x, g * 3 + i);
        REQUIRE(sum == Approx(1.0).margin(1e-6));
      }
    }
  }

  REQUIRE_THROWS_AS(softmax_groups(random, 5), ConfigError);
}

TEST_CASE("finite_diff_check reports zero error for a plain sum",
          "[core][grad]") {
  DifferentiableOp op;
  op.forward = [](const std::vector<Tensor3d>& in) {
    double s = 0.0;
    for (size_t i = 0; i < in[0].size(); ++i) s += in[0].data()[i];
    Tensor3d out(1, 1, 1);
    out(0, 0, 0) = s;
    return out;
  };
  op.adjoint = [](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
    return std::vector<Tensor3d>{
        Tensor3d::filled(in[0].height(), in[0].width(), in[0].channels(),
                         dout(0, 0, 0))};
  };
  // integer inputs and a power-of-two step keep the differencing exact
  Tensor3d x(3, 3, 1);
  for (size_t i = 0; i < x.size(); ++i) x.data()[i] = double(i % 5);
  const auto ones = Tensor3d::filled(1, 1, 1, 1.0);
  const auto report = finite_diff_check(op, {x}, ones, 0.5);
  REQUIRE(report.max_rel_error == 0.0);
}

TEST_CASE("finite_diff_check flags a corrupted gradient", "[core][grad]") {
  auto op = warp_op();
  auto honest = op.adjoint;
  op.adjoint = [honest](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
    auto grads = honest(in, dout);
    grads[0].data()[0] *= 2.0;  // one doubled element
    return grads;
  };
  const auto source = random_tensor<double>(4, 4, 1, 141, 0.5, 1.5);
  const auto flow = test_util::jittered_flow<double>(4, 4, 142, 1.0);
  const auto report = finite_diff_check(op, {source, flow.tensor()}, 1e-4);
  REQUIRE(report.max_rel_error > 0.4);
}

TEST_CASE("results are identical under any thread count", "[core][determinism]") {
  const auto input = random_tensor<float>(16, 16, 8, 151, -1.0f, 1.0f);
  const auto spec = random_conv<float>(6, 8, 3, 1, 1, 152);
  const auto flow = test_util::jittered_flow<float>(16, 16, 153, 2.0f);

  set_num_threads(1);
  const auto conv_serial = conv2d(input, spec);
  const auto warp_serial = backward_warp(input, flow);
  set_num_threads(4);
  const auto conv_parallel = conv2d(input, spec);
  const auto warp_parallel = backward_warp(input, flow);
  set_num_threads(1);

  REQUIRE(conv_serial.bitwise_equal(conv_parallel));
  REQUIRE(warp_serial.bitwise_equal(warp_parallel));
}
