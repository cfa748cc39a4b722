#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dqbc/correlation.hpp"
#include "dqbc/gradcheck.hpp"
#include "dqbc/losses.hpp"
#include "dqbc/motion.hpp"
#include "dqbc/oracles.hpp"
#include "dqbc/parallel.hpp"
#include "dqbc/synthesis.hpp"

// Runtime property suites behind the `check` subcommand. Everything runs in
// 64-bit mode with fixed seeds and compares against the independent oracles.

namespace dqbc::selfcheck {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  double seconds = 0.0;
};

namespace detail {

inline Tensor3d rand_tensor(int h, int w, int c, uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Tensor3d t(h, w, c);
  uint64_t state = seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull;
  for (size_t i = 0; i < t.size(); ++i) {
    uint64_t z = state += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    t.data()[i] = lo + double(z >> 11) * 0x1.0p-53 * (hi - lo);
  }
  return t;
}

inline MotionField<double> jitter_flow(int h, int w, uint64_t seed,
                                       double span = 1.0) {
  const Tensor3d raw = rand_tensor(h, w, 2, seed, 0.25, 0.75);
  const Tensor3d sign = rand_tensor(h, w, 2, seed + 1);
  MotionField<double> f = MotionField<double>::zeros(h, w);
  for (size_t i = 0; i < f.tensor().size(); ++i) {
    f.tensor().data()[i] =
        raw.data()[i] * span * (sign.data()[i] < 0.0 ? -1.0 : 1.0);
  }
  return f;
}

inline double max_diff(const Tensor3d& a, const Tensor3d& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

inline ConvSpec<double> rand_conv(int out, int in, int k, int stride, int pad,
                                  uint64_t seed) {
  ConvSpec<double> s = ConvSpec<double>::zeros(out, in, k, k, stride, pad);
  const Tensor3d kv = rand_tensor(1, 1, int(s.kernel.size()), seed, -0.5, 0.5);
  for (size_t i = 0; i < s.kernel.size(); ++i) s.kernel[i] = kv.data()[i];
  const Tensor3d bv = rand_tensor(1, 1, out, seed + 1, -0.1, 0.1);
  for (int i = 0; i < out; ++i) s.bias[i] = bv.data()[i];
  return s;
}

using CheckFn = std::function<double()>;  // returns max error

inline SuiteResult run_one(const std::string& name, double tolerance,
                           const CheckFn& fn) {
  SuiteResult r;
  r.name = name;
  const auto start = std::chrono::steady_clock::now();
  try {
    r.max_error = fn();
    r.passed = std::isfinite(r.max_error) && r.max_error <= tolerance;
  } catch (const std::exception&) {
    r.passed = false;
    r.max_error = std::numeric_limits<double>::infinity();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            start)
                  .count();
  return r;
}

// ---- oracle suite ----------------------------------------------------------

inline double check_conv_oracle() {
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 4; ++seed) {
    const int stride = seed % 2 ? 1 : 2;
    const auto input = rand_tensor(5 + int(seed), 6, 3, seed);
    const auto spec = rand_conv(4, 3, 3, stride, 1, seed + 50);
    worst = std::max(worst,
                     max_diff(conv2d(input, spec),
                              oracles::conv2d_naive(input, spec)));
  }
  return worst;
}

inline double check_pool_oracle() {
  const auto input = rand_tensor(8, 8, 4, 7);
  return max_diff(avgpool2x(input), oracles::avgpool2x_naive(input));
}

inline double check_gather_oracle() {
  double worst = 0.0;
  PyramidConfig cfg;
  cfg.levels = 3;
  cfg.radii = {2, 1, 1};
  for (uint64_t seed = 1; seed <= 6; ++seed) {
    const auto q = rand_tensor(8, 8, 8, seed * 3);
    const auto k = rand_tensor(8, 8, 8, seed * 3 + 1);
    const auto fast =
        gather_unilateral_correlation(q, build_key_pyramid(k, cfg), cfg);
    worst = std::max(worst,
                     max_diff(fast.scores, oracles::gather_naive(q, k, cfg)));
  }
  return worst;
}

inline double check_upsample_oracle() {
  const auto field = rand_tensor(5, 4, 2, 11, -2.0, 2.0);
  const auto logits = rand_tensor(5, 4, kConvexLogitChannels, 12, -2.0, 2.0);
  const auto fine = convex_upsample(MotionField<double>(field), logits);
  return max_diff(fine.tensor(), oracles::convex_upsample_naive(field, logits));
}

// ---- exact suite -----------------------------------------------------------

inline double check_warp_identity() {
  const auto source = rand_tensor(7, 6, 3, 21);
  const auto warped = backward_warp(source, MotionField<double>::zeros(7, 6));
  return warped.bitwise_equal(source) ? 0.0 : 1.0;
}

inline double check_warp_integer_shift() {
  const auto source = rand_tensor(6, 6, 2, 22);
  const auto warped =
      backward_warp(source, MotionField<double>::constant(6, 6, 1.0, 0.0));
  double err = 0.0;
  for (int y = 0; y < 6; ++y) {
    for (int c = 0; c < 2; ++c) {
      for (int x = 0; x < 5; ++x) {
        if (warped(y, x, c) != source(y, x + 1, c)) err = 1.0;
      }
      if (warped(y, 5, c) != 0.0) err = 1.0;
    }
  }
  return err;
}

inline double check_translate_exactness() {
  const auto input = rand_tensor(6, 6, 2, 23);
  const auto shifted = translate_fractional(input, 1.0, 0.0);
  double err = 0.0;
  for (int y = 0; y < 6; ++y) {
    for (int c = 0; c < 2; ++c) {
      if (shifted(y, 0, c) != 0.0) err = 1.0;
      for (int x = 1; x < 6; ++x) {
        if (shifted(y, x, c) != input(y, x - 1, c)) err = 1.0;
      }
    }
  }
  const auto back = translate_fractional(shifted, -1.0, 0.0);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 5; ++x) {
      for (int c = 0; c < 2; ++c) {
        if (back(y, x, c) != input(y, x, c)) err = 1.0;
      }
    }
  }
  return err;
}

inline double check_distribute_integer_shift() {
  CorrelationVolume<double> volume;
  volume.scores = rand_tensor(5, 5, 2, 24);
  volume.meta = {ChannelMeta{0, 2, 0, CorrDirection::kZeroToOne},
                 ChannelMeta{1, 0, -2, CorrDirection::kZeroToOne}};
  const auto out = distribute_correlation(volume, 0.5);
  double err = 0.0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const double want0 = x >= 1 ? volume.scores(y, x - 1, 0) : 0.0;
      if (out.scores(y, x, 0) != want0) err = 1.0;
      const double want1 = y + 1 < 5 ? volume.scores(y + 1, x, 1) : 0.0;
      if (out.scores(y, x, 1) != want1) err = 1.0;
    }
  }
  return err;
}

inline double check_one_hot_upsample() {
  const auto field = rand_tensor(4, 5, 2, 25, -3.0, 3.0);
  Tensor3d logits(4, 5, kConvexLogitChannels);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      for (int s = 0; s < 4; ++s) logits(y, x, s * 9 + 4) = 1000.0;
    }
  }
  const auto fine = convex_upsample(MotionField<double>(field), logits);
  double err = 0.0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 10; ++x) {
      for (int c = 0; c < 2; ++c) {
        if (fine.tensor()(y, x, c) != 2.0 * field(y / 2, x / 2, c)) err = 1.0;
      }
    }
  }
  return err;
}

inline double check_conv_identity() {
  const auto input = rand_tensor(5, 4, 3, 26);
  ConvSpec<double> spec = ConvSpec<double>::zeros(3, 3, 1, 1, 1, 0);
  for (int c = 0; c < 3; ++c) spec.k(c, c, 0, 0) = 1.0;
  return conv2d(input, spec).bitwise_equal(input) ? 0.0 : 1.0;
}

// ---- gradient suite --------------------------------------------------------

inline double check_warp_grad() {
  DifferentiableOp op;
  op.forward = [](const std::vector<Tensor3d>& in) {
    return backward_warp(in[0], MotionField<double>(in[1]));
  };
  op.adjoint = [](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
    auto adj = backward_warp_adjoint(in[0], MotionField<double>(in[1]), dout);
    return std::vector<Tensor3d>{adj.d_source, adj.d_flow.tensor()};
  };
  const auto source = rand_tensor(5, 5, 2, 31);
  const auto flow = jitter_flow(5, 5, 32, 1.5);
  return finite_diff_check(op, {source, flow.tensor()}, 1e-4).max_rel_error;
}

inline double check_gather_grad() {
  PyramidConfig cfg;
  cfg.levels = 2;
  cfg.radii = {1, 1};
  DifferentiableOp op;
  op.forward = [cfg](const std::vector<Tensor3d>& in) {
    KeyPyramid<double> pyr;
    pyr.levels = {in[1], in[2]};
    return gather_unilateral_correlation(in[0], pyr, cfg).scores;
  };
  op.adjoint = [cfg](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
    KeyPyramid<double> pyr;
    pyr.levels = {in[1], in[2]};
    auto adj = gather_unilateral_correlation_adjoint(in[0], pyr, cfg, dout);
    return std::vector<Tensor3d>{adj.d_queries, adj.d_key_levels[0],
                                 adj.d_key_levels[1]};
  };
  const auto q = rand_tensor(4, 4, 3, 33);
  const auto k0 = rand_tensor(4, 4, 3, 34);
  const auto k1 = rand_tensor(2, 2, 3, 35);
  return finite_diff_check(op, {q, k0, k1}, 1e-5).max_rel_error;
}

inline double check_distribute_grad() {
  std::vector<ChannelMeta> meta = {
      ChannelMeta{0, 1, 0, CorrDirection::kZeroToOne},
      ChannelMeta{0, -1, 1, CorrDirection::kZeroToOne},
      ChannelMeta{1, 2, -2, CorrDirection::kZeroToOne}};
  const double fraction = 0.35;
  DifferentiableOp op;
  op.forward = [meta, fraction](const std::vector<Tensor3d>& in) {
    return distribute_correlation(CorrelationVolume<double>{in[0], meta},
                                  fraction)
        .scores;
  };
  op.adjoint = [meta, fraction](const std::vector<Tensor3d>&,
                                const Tensor3d& dout) {
    return std::vector<Tensor3d>{
        distribute_correlation_adjoint(meta, fraction, dout)};
  };
  return finite_diff_check(op, {rand_tensor(5, 5, 3, 36)}, 1e-5).max_rel_error;
}

inline double check_upsample_grad() {
  DifferentiableOp op;
  op.forward = [](const std::vector<Tensor3d>& in) {
    return convex_upsample(MotionField<double>(in[0]), in[1]).tensor();
  };
  op.adjoint = [](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
    auto adj = convex_upsample_adjoint(MotionField<double>(in[0]), in[1], dout);
    return std::vector<Tensor3d>{adj.d_field, adj.d_logits};
  };
  const auto field = rand_tensor(4, 4, 2, 37, -2.0, 2.0);
  const auto logits = rand_tensor(4, 4, kConvexLogitChannels, 38, -1.5, 1.5);
  return finite_diff_check(op, {field, logits}, 1e-5).max_rel_error;
}

// ---- property suite --------------------------------------------------------

inline double check_warp_linearity() {
  const auto s1 = rand_tensor(5, 6, 2, 41);
  const auto s2 = rand_tensor(5, 6, 2, 42);
  const auto flow = jitter_flow(5, 6, 43, 1.5);
  Tensor3d mix(5, 6, 2);
  for (size_t i = 0; i < mix.size(); ++i) {
    mix.data()[i] = 0.7 * s1.data()[i] - 1.3 * s2.data()[i];
  }
  const auto lhs = backward_warp(mix, flow);
  const auto w1 = backward_warp(s1, flow);
  const auto w2 = backward_warp(s2, flow);
  double err = 0.0;
  for (size_t i = 0; i < lhs.size(); ++i) {
    err = std::max(err, std::abs(lhs.data()[i] - (0.7 * w1.data()[i] -
                                                  1.3 * w2.data()[i])));
  }
  return err;
}

inline double check_softmax_sums() {
  const auto logits = rand_tensor(4, 4, 18, 44, -5.0, 5.0);
  const auto soft = softmax_groups(logits, 9);
  double err = 0.0;
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int g = 0; g < 2; ++g) {
        double sum = 0.0;
        for (int i = 0; i < 9; ++i) sum += soft(y, x, g * 9 + i);
        err = std::max(err, std::abs(sum - 1.0));
      }
    }
  }
  return err;
}

inline double check_channel_counts() {
  PyramidConfig def;
  if (def.channels_per_direction() != 371) return 1.0;
  PyramidConfig small;
  small.levels = 3;
  small.radii = {2, 1, 1};
  if (small.channels_per_direction() != 43) return 1.0;
  PyramidConfig two;
  two.levels = 2;
  two.radii = {3, 2};
  return two.channels_per_direction() == 74 ? 0.0 : 1.0;
}

inline double check_swap_symmetry() {
  PyramidConfig cfg;
  cfg.levels = 1;
  cfg.radii = {1};
  const auto a = rand_tensor(5, 7, 3, 45);
  const auto b = rand_tensor(5, 7, 3, 46);
  const auto ab = gather_unilateral_correlation(a, build_key_pyramid(b, cfg), cfg);
  const auto ba = gather_unilateral_correlation(b, build_key_pyramid(a, cfg), cfg);
  double err = 0.0;
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      err = std::max(err, std::abs(ab.scores(y, x, 4) - ba.scores(y, x, 4)));
    }
  }
  return err;
}

inline double check_upsample_bounds() {
  const auto field = rand_tensor(5, 4, 2, 47, -2.0, 2.0);
  const auto logits = rand_tensor(5, 4, kConvexLogitChannels, 48, -2.0, 2.0);
  const auto fine = convex_upsample(MotionField<double>(field), logits);
  double err = 0.0;
  for (int fy = 0; fy < 10; ++fy) {
    for (int fx = 0; fx < 8; ++fx) {
      for (int c = 0; c < 2; ++c) {
        // zero-padded neighborhood bounds
        double lo = 0.0, hi = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int sy = fy / 2 + dy, sx = fx / 2 + dx;
            if (sy < 0 || sy >= 5 || sx < 0 || sx >= 4) continue;
            lo = std::min(lo, field(sy, sx, c));
            hi = std::max(hi, field(sy, sx, c));
          }
        }
        const double v = fine.tensor()(fy, fx, c);
        err = std::max(err, std::max(2.0 * lo - v, v - 2.0 * hi));
      }
    }
  }
  return std::max(err, 0.0);
}

inline double check_compose_cases() {
  const auto w0 = rand_tensor(5, 5, 3, 49, 0.0, 1.0);
  const auto w1 = rand_tensor(5, 5, 3, 50, 0.0, 1.0);
  const Tensor3d zero1(5, 5, 1);
  const Tensor3d zero3(5, 5, 3);
  const auto one = OcclusionMap<double>(Tensor3d::filled(5, 5, 1, 1.0));
  const auto zero = OcclusionMap<double>(Tensor3d::filled(5, 5, 1, 0.0));
  const auto half = OcclusionMap<double>(Tensor3d::filled(5, 5, 1, 0.5));
  double err = 0.0;
  if (!compose_frame(w0, w1, one, zero1, zero3).bitwise_equal(w0)) err = 1.0;
  if (!compose_frame(w0, w1, zero, zero1, zero3).bitwise_equal(w1)) err = 1.0;
  const auto blend = compose_frame(w0, w1, half, zero1, zero3);
  for (size_t i = 0; i < blend.size(); ++i) {
    err = std::max(err, std::abs(blend.data()[i] -
                                 0.5 * (w0.data()[i] + w1.data()[i])));
  }
  return err;
}

inline double check_loss_units() {
  double err = 0.0;
  const auto a = Tensor3d::filled(4, 4, 3, 0.75);
  const auto b = Tensor3d::filled(4, 4, 3, 0.25);
  err = std::max(err, std::abs(reconstruction_loss(a, b) - 0.5));
  err = std::max(err, reconstruction_loss(a, a));
  LossConfig cfg;
  err = std::max(err, std::abs(total_loss(1.0, 1.0, 1.0, cfg) - 2.01));
  return err;
}

inline double check_thread_determinism() {
  const int saved = num_threads();
  const auto input = rand_tensor(16, 16, 8, 51);
  const auto spec = rand_conv(6, 8, 3, 1, 1, 52);
  const auto flow = jitter_flow(16, 16, 53, 2.0);
  set_num_threads(1);
  const auto c1 = conv2d(input, spec);
  const auto w1 = backward_warp(input, flow);
  set_num_threads(4);
  const auto c4 = conv2d(input, spec);
  const auto w4 = backward_warp(input, flow);
  set_num_threads(saved);
  return c1.bitwise_equal(c4) && w1.bitwise_equal(w4) ? 0.0 : 1.0;
}

inline double check_query_density() {
  PyramidConfig cfg;
  cfg.levels = 3;
  cfg.radii = {2, 1, 1};
  const int per_dir = cfg.channels_per_direction();
  const auto f0 = rand_tensor(13, 9, 4, 54);
  const auto f1 = rand_tensor(13, 9, 4, 55);
  EnhanceWeights<double> enh{ConvSpec<double>::zeros(per_dir, per_dir, 3, 3, 1, 1),
                             ConvSpec<double>::zeros(per_dir, per_dir, 3, 3, 1, 1)};
  const auto dqbc = assemble_dqbc_from_features(f0, f1, enh, cfg, 0.5);
  const bool ok = dqbc.scores.height() == 13 && dqbc.scores.width() == 9 &&
                  dqbc.scores.channels() == 2 * per_dir &&
                  dqbc.scores.all_finite();
  return ok ? 0.0 : 1.0;
}

}  // namespace detail

inline std::vector<SuiteResult> run_suites(const std::string& selector) {
  using detail::run_one;
  std::vector<SuiteResult> results;
  const bool all = selector == "all";
  if (!all && selector != "oracle" && selector != "grad" && selector != "exact") {
    throw ConfigError("check: unknown suite \"" + selector +
                      "\" (expected all, oracle, grad or exact)");
  }
  if (all || selector == "oracle") {
    results.push_back(run_one("oracle/conv2d", 1e-10, detail::check_conv_oracle));
    results.push_back(run_one("oracle/avgpool2x", 0.0, detail::check_pool_oracle));
    results.push_back(run_one("oracle/gather", 1e-10, detail::check_gather_oracle));
    results.push_back(
        run_one("oracle/convex_upsample", 1e-10, detail::check_upsample_oracle));
  }
  if (all || selector == "exact") {
    results.push_back(run_one("exact/warp_zero_flow", 0.0, detail::check_warp_identity));
    results.push_back(
        run_one("exact/warp_integer_flow", 0.0, detail::check_warp_integer_shift));
    results.push_back(
        run_one("exact/translate_shift", 0.0, detail::check_translate_exactness));
    results.push_back(run_one("exact/distribute_integer", 0.0,
                              detail::check_distribute_integer_shift));
    results.push_back(
        run_one("exact/one_hot_upsample", 0.0, detail::check_one_hot_upsample));
    results.push_back(
        run_one("exact/conv_identity", 0.0, detail::check_conv_identity));
  }
  if (all || selector == "grad") {
    results.push_back(run_one("grad/backward_warp", 1e-6, detail::check_warp_grad));
    results.push_back(run_one("grad/gather", 1e-5, detail::check_gather_grad));
    results.push_back(
        run_one("grad/distribute", 1e-5, detail::check_distribute_grad));
    results.push_back(
        run_one("grad/convex_upsample", 1e-5, detail::check_upsample_grad));
  }
  if (all) {
    results.push_back(
        run_one("property/warp_linearity", 1e-6, detail::check_warp_linearity));
    results.push_back(
        run_one("property/softmax_sums", 1e-6, detail::check_softmax_sums));
    results.push_back(
        run_one("property/channel_counts", 0.0, detail::check_channel_counts));
    results.push_back(
        run_one("property/swap_symmetry", 1e-12, detail::check_swap_symmetry));
    results.push_back(
        run_one("property/upsample_bounds", 1e-12, detail::check_upsample_bounds));
    results.push_back(
        run_one("property/compose_cases", 1e-15, detail::check_compose_cases));
    results.push_back(run_one("property/loss_units", 1e-15, detail::check_loss_units));
    results.push_back(run_one("property/thread_determinism", 0.0,
                              detail::check_thread_determinism));
    results.push_back(
        run_one("property/query_density", 0.0, detail::check_query_density));
  }
  return results;
}

}  // namespace dqbc::selfcheck
