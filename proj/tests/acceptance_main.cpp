// Acceptance suite: the project's end-to-end verification gates. Prints one
// pass/fail line per criterion and exits nonzero if any fail.
//
// Usage: acceptance [--cli <path-to-dqbc-binary>]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dqbc/config.hpp"
#include "dqbc/fit_motion.hpp"
#include "dqbc/gradcheck.hpp"
#include "dqbc/image_io.hpp"
#include "dqbc/oracles.hpp"
#include "dqbc/pipeline.hpp"
#include "subprocess_util.hpp"

using namespace dqbc;
namespace fs = std::filesystem;

namespace {

std::string g_cli_path = "tools/dqbc";
fs::path g_tmp;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

template <typename T>
Tensor3<T> rand_tensor(int h, int w, int c, uint64_t seed, T lo = T(-1),
                       T hi = T(1)) {
  Tensor3<T> t(h, w, c);
  uint64_t state = seed;
  for (size_t i = 0; i < t.size(); ++i) {
    t.data()[i] = lo + static_cast<T>(splitmix64_unit(state)) * (hi - lo);
  }
  return t;
}

MotionField<double> jittered_flow(int h, int w, uint64_t seed, double span) {
  MotionField<double> f = MotionField<double>::zeros(h, w);
  uint64_t state = seed;
  for (size_t i = 0; i < f.tensor().size(); ++i) {
    const double sign = splitmix64(state) & 1 ? 1.0 : -1.0;
    f.tensor().data()[i] = sign * (0.25 + splitmix64_unit(state) * 0.5) * span;
  }
  return f;
}

template <typename T>
double max_abs_diff(const Tensor3<T>& a, const Tensor3<T>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  }
  return m;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

// 1. gather_unilateral_correlation matches the literal nested-loop oracle on
//    >= 20 random instances up to 8x8x8, L=3, radii (2,1,1); < 1e-5 in f32,
//    < 1e-10 in f64; under 5 s.
Outcome criterion_oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  PyramidConfig cfg;
  cfg.levels = 3;
  cfg.radii = {2, 1, 1};
  double worst32 = 0.0, worst64 = 0.0;
  uint64_t state = 2024;
  for (int i = 0; i < 20; ++i) {
    const int h = (splitmix64(state) % 2) ? 8 : 4;
    const int w = (splitmix64(state) % 2) ? 8 : 4;
    const int c = 2 + int(splitmix64(state) % 7);

    const auto q32 = rand_tensor<float>(h, w, c, state + 1);
    const auto k32 = rand_tensor<float>(h, w, c, state + 2);
    const auto got32 =
        gather_unilateral_correlation(q32, build_key_pyramid(k32, cfg), cfg);
    worst32 = std::max(
        worst32, max_abs_diff(got32.scores, oracles::gather_naive(q32, k32, cfg)));

    const auto q64 = rand_tensor<double>(h, w, c, state + 3);
    const auto k64 = rand_tensor<double>(h, w, c, state + 4);
    const auto got64 =
        gather_unilateral_correlation(q64, build_key_pyramid(k64, cfg), cfg);
    worst64 = std::max(
        worst64, max_abs_diff(got64.scores, oracles::gather_naive(q64, k64, cfg)));
    state += 101;
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.passed = worst32 < 1e-5 && worst64 < 1e-10 && elapsed < 5.0;
  std::ostringstream ss;
  ss << "20 instances, max|diff| f32 " << worst32 << " (<1e-5), f64 " << worst64
     << " (<1e-10), " << elapsed << " s (<5)";
  o.detail = ss.str();
  return o;
}

// 2. Default pyramid yields 371 channels per direction, 742 assembled.
Outcome criterion_channel_counts() {
  PyramidConfig def;
  const int per_dir = def.channels_per_direction();

  RunConfig cfg;
  cfg.pyramid.radii = {2, 1, 1};
  cfg.dims.extractor = {4, 6, 8};
  cfg.dims.mgm_context = 4;
  cfg.dims.mgm_hidden = 8;
  cfg.dims.mgm_reduced = 6;
  cfg.dims.mgm_generator = 5;
  cfg.dims.context = {3, 4, 5};
  cfg.dims.upblock_hidden = 6;
  cfg.dims.synth_down = {4, 5, 6};
  cfg.dims.synth_up = {5, 4, 4};
  const auto schema = build_schema(cfg.pyramid, cfg.dims);
  const auto weights =
      unpack_weights<float>(init_weights(schema, 1), cfg.pyramid, cfg.dims);
  const auto f0 = rand_tensor<float>(8, 8, 8, 11, 0.0f, 1.0f);
  const auto f1 = rand_tensor<float>(8, 8, 8, 12, 0.0f, 1.0f);
  const auto small = assemble_dqbc_from_features(f0, f1, weights.enhance,
                                                 cfg.pyramid, 0.5f);

  Outcome o;
  const int small_expected = 2 * cfg.pyramid.channels_per_direction();
  o.passed = per_dir == 371 && 2 * per_dir == 742 &&
             small.scores.channels() == small_expected;
  std::ostringstream ss;
  ss << "default config: " << per_dir << " per direction (=371), "
     << 2 * per_dir << " assembled (=742)";
  o.detail = ss.str();
  return o;
}

// 3. Exactness suite in both precisions.
template <typename T>
bool exactness_for() {
  const auto source = rand_tensor<T>(6, 7, 3, 21);
  if (!backward_warp(source, MotionField<T>::zeros(6, 7)).bitwise_equal(source)) {
    return false;
  }

  const auto shifted =
      backward_warp(source, MotionField<T>::constant(6, 7, T(1), T(0)));
  for (int y = 0; y < 6; ++y) {
    for (int c = 0; c < 3; ++c) {
      for (int x = 0; x < 6; ++x) {
        if (shifted(y, x, c) != source(y, x + 1, c)) return false;
      }
      if (shifted(y, 6, c) != T(0)) return false;
    }
  }

  CorrelationVolume<T> volume;
  volume.scores = rand_tensor<T>(5, 5, 1, 22);
  volume.meta = {ChannelMeta{0, 2, 0, CorrDirection::kZeroToOne}};
  const auto dist = distribute_correlation(volume, T(0.5));
  for (int y = 0; y < 5; ++y) {
    if (dist.scores(y, 0, 0) != T(0)) return false;
    for (int x = 1; x < 5; ++x) {
      if (dist.scores(y, x, 0) != volume.scores(y, x - 1, 0)) return false;
    }
  }

  const auto field = rand_tensor<T>(4, 4, 2, 23, T(-3), T(3));
  Tensor3<T> logits(4, 4, kConvexLogitChannels);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int s = 0; s < 4; ++s) logits(y, x, s * 9 + 4) = T(1000);
    }
  }
  const auto fine = convex_upsample(MotionField<T>(field), logits);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 2; ++c) {
        if (fine.tensor()(y, x, c) != T(2) * field(y / 2, x / 2, c)) return false;
      }
    }
  }
  return true;
}

Outcome criterion_exactness() {
  Outcome o;
  const bool f32 = exactness_for<float>();
  const bool f64 = exactness_for<double>();
  o.passed = f32 && f64;
  o.detail = std::string("zero-flow identity, integer shifts, one-hot upsample: ") +
             (f32 ? "f32 exact" : "f32 BROKEN") + ", " +
             (f64 ? "f64 exact" : "f64 BROKEN");
  return o;
}

// 4. Gradient suite on jittered random inputs <= 8x8, 64-bit, < 1e-5; < 60 s.
Outcome criterion_gradients() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;

  {
    DifferentiableOp op;
    op.forward = [](const std::vector<Tensor3d>& in) {
      return backward_warp(in[0], MotionField<double>(in[1]));
    };
    op.adjoint = [](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
      auto adj = backward_warp_adjoint(in[0], MotionField<double>(in[1]), dout);
      return std::vector<Tensor3d>{adj.d_source, adj.d_flow.tensor()};
    };
    const auto source = rand_tensor<double>(8, 8, 2, 31);
    const auto flow = jittered_flow(8, 8, 32, 1.5);
    worst = std::max(worst,
                     finite_diff_check(op, {source, flow.tensor()}, 1e-5)
                         .max_rel_error);
  }
  {
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
    worst = std::max(
        worst, finite_diff_check(op,
                                 {rand_tensor<double>(4, 4, 3, 33),
                                  rand_tensor<double>(4, 4, 3, 34),
                                  rand_tensor<double>(2, 2, 3, 35)},
                                 1e-5)
                   .max_rel_error);
  }
  {
    std::vector<ChannelMeta> meta = {
        ChannelMeta{0, 1, 0, CorrDirection::kZeroToOne},
        ChannelMeta{0, -1, 1, CorrDirection::kZeroToOne},
        ChannelMeta{1, 2, -2, CorrDirection::kZeroToOne}};
    DifferentiableOp op;
    op.forward = [meta](const std::vector<Tensor3d>& in) {
      return distribute_correlation(CorrelationVolume<double>{in[0], meta}, 0.35)
          .scores;
    };
    op.adjoint = [meta](const std::vector<Tensor3d>&, const Tensor3d& dout) {
      return std::vector<Tensor3d>{
          distribute_correlation_adjoint(meta, 0.35, dout)};
    };
    worst = std::max(
        worst,
        finite_diff_check(op, {rand_tensor<double>(8, 8, 3, 36)}, 1e-5)
            .max_rel_error);
  }
  {
    DifferentiableOp op;
    op.forward = [](const std::vector<Tensor3d>& in) {
      return convex_upsample(MotionField<double>(in[0]), in[1]).tensor();
    };
    op.adjoint = [](const std::vector<Tensor3d>& in, const Tensor3d& dout) {
      auto adj = convex_upsample_adjoint(MotionField<double>(in[0]), in[1], dout);
      return std::vector<Tensor3d>{adj.d_field, adj.d_logits};
    };
    worst = std::max(
        worst, finite_diff_check(op,
                                 {rand_tensor<double>(4, 4, 2, 37),
                                  rand_tensor<double>(4, 4, kConvexLogitChannels,
                                                      38, -1.5, 1.5)},
                                 1e-5)
                   .max_rel_error);
  }

  const double elapsed = seconds_since(start);
  Outcome o;
  o.passed = worst < 1e-5 && elapsed < 60.0;
  std::ostringstream ss;
  ss << "warp/gather/distribute/upsample adjoints, max rel err " << worst
     << " (<1e-5), " << elapsed << " s (<60)";
  o.detail = ss.str();
  return o;
}

// 5. cmd_fit_motion on a 64x64 synthetic translation by (3, -2): interior
//    endpoint error < 0.1 px within 500 iterations, under 30 s.
Outcome criterion_motion_fit() {
  const auto i0 = synthetic_texture<double>(64, 64, 0);
  const auto i1 = translate_fractional(i0, 3.0, -2.0);
  const auto p0 = (g_tmp / "fit0.ppm").string();
  const auto p1 = (g_tmp / "fit1.ppm").string();
  save_image(i0, p0);
  save_image(i1, p1);

  const auto start = std::chrono::steady_clock::now();
  const auto r = test_util::run_command(g_cli_path + " fit-motion " + p0 + " " +
                                        p1 + " --truth-flow -3,2 --threads 1");
  const double elapsed = seconds_since(start);

  Outcome o;
  double epe = 1e9;
  const auto pos = r.output.find("mean_endpoint_error_interior: ");
  if (pos != std::string::npos) epe = std::stod(r.output.substr(pos + 30));
  o.passed = r.exit_code == 0 && epe < 0.1 && elapsed < 30.0;
  std::ostringstream ss;
  ss << "cmd_fit_motion interior EPE " << epe << " px (<0.1), " << elapsed
     << " s (<30), exit " << r.exit_code;
  o.detail = ss.str();
  return o;
}

// 6. End-to-end shape contract with the default configuration.
Outcome criterion_shapes() {
  const RunConfig cfg;  // library defaults
  const auto schema = build_schema(cfg.pyramid, cfg.dims);
  const auto weights =
      unpack_weights<float>(init_weights(schema, cfg.seed), cfg.pyramid, cfg.dims);

  const auto a = synthetic_texture<float>(64, 64, 1);
  const auto b = synthetic_texture<float>(64, 64, 2);
  const auto r64 = interpolate_midframe(a, b, weights, cfg.pyramid, 0.5f);

  bool ok = r64.frame.height() == 64 && r64.frame.width() == 64 &&
            r64.frame.channels() == 3 && r64.diagnostics.trace.size() == 4;
  const int expect[4] = {8, 16, 32, 64};
  for (int i = 0; i < 4 && ok; ++i) {
    ok = r64.diagnostics.trace[i].first.height() == expect[i] &&
         r64.diagnostics.trace[i].first.width() == expect[i];
  }
  ok = ok && r64.diagnostics.occlusion.height() == 64 &&
       r64.diagnostics.padded_height == 64;

  const auto c = synthetic_texture<float>(100, 68, 3);
  const auto d = synthetic_texture<float>(100, 68, 4);
  const auto r100 = interpolate_midframe(c, d, weights, cfg.pyramid, 0.5f);
  ok = ok && r100.frame.height() == 100 && r100.frame.width() == 68 &&
       r100.diagnostics.padded_height == 104 &&
       r100.diagnostics.padded_width == 72 && r100.frame.all_finite();

  Outcome o;
  o.passed = ok;
  o.detail =
      "64x64 -> trace 8/16/32/64 + 64x64x3 output; 100x68 -> pad 104x72 -> "
      "100x68 output";
  return o;
}

// 7. Composition degenerate cases, exact.
Outcome criterion_composition() {
  const auto w0 = rand_tensor<double>(6, 6, 3, 41, 0.0, 1.0);
  const auto w1 = rand_tensor<double>(6, 6, 3, 42, 0.0, 1.0);
  const Tensor3d zero1(6, 6, 1);
  const Tensor3d zero3(6, 6, 3);
  const auto one = OcclusionMap<double>(Tensor3d::filled(6, 6, 1, 1.0));
  const auto zero = OcclusionMap<double>(Tensor3d::filled(6, 6, 1, 0.0));
  const auto half = OcclusionMap<double>(Tensor3d::filled(6, 6, 1, 0.5));

  bool ok = compose_frame(w0, w1, one, zero1, zero3).bitwise_equal(w0) &&
            compose_frame(w0, w1, zero, zero1, zero3).bitwise_equal(w1);
  const auto blend = compose_frame(w0, w1, half, zero1, zero3);
  for (size_t i = 0; i < blend.size() && ok; ++i) {
    ok = blend.data()[i] == 0.5 * (w0.data()[i] + w1.data()[i]);
  }
  Outcome o;
  o.passed = ok;
  o.detail = "O=1 -> warped0, O=0 -> warped1, O=0.5 -> exact average";
  return o;
}

// 8. Loss unit values, 64-bit exact.
Outcome criterion_losses() {
  bool ok = true;
  const auto a = Tensor3d::filled(4, 4, 3, 0.75);
  const auto b = Tensor3d::filled(4, 4, 3, 0.25);
  ok = ok && reconstruction_loss(a, a) == 0.0;
  ok = ok && reconstruction_loss(a, b) == 0.5;

  const auto frame = rand_tensor<double>(6, 6, 3, 51, 0.0, 1.0);
  const auto zero_field = MotionField<double>::zeros(6, 6);
  const auto half = OcclusionMap<double>(Tensor3d::filled(6, 6, 1, 0.5));
  ok = ok && teacher_reconstruction_loss(frame, frame, zero_field, zero_field,
                                         half, frame) == 0.0;

  const auto teacher =
      MotionField<double>(rand_tensor<double>(16, 16, 2, 52, -2.0, 2.0));
  std::vector<std::pair<MotionField<double>, MotionField<double>>> trace{
      {teacher, teacher}};
  LossConfig single;
  single.distill_level_weights = {1.0};
  ok = ok && distillation_loss(trace, teacher, teacher, single) == 0.0;

  LossConfig def;
  const double total = total_loss(1.0, 1.0, 1.0, def);
  ok = ok && total == 1.0 + 1.0 * 1.0 + 0.01 * 1.0 &&
       std::abs(total - 2.01) < 1e-12;

  Outcome o;
  o.passed = ok;
  o.detail = "identical -> 0, offset 0.5 -> 0.5, total(1,1,1) = 2.01";
  return o;
}

// 9. Determinism: cmd_interpolate byte-identical across 2 runs x {1,4}
//    threads; init_weights matches the committed golden checksum.
Outcome criterion_determinism() {
  const auto a = synthetic_texture<float>(64, 64, 5);
  const auto b = synthetic_texture<float>(64, 64, 6);
  const auto pa = (g_tmp / "det_a.ppm").string();
  const auto pb = (g_tmp / "det_b.ppm").string();
  save_image(a, pa);
  save_image(b, pb);

  std::vector<std::string> outputs;
  bool ran_ok = true;
  int run = 0;
  for (int repeat = 0; repeat < 2; ++repeat) {
    for (int threads : {1, 4}) {
      const auto out = (g_tmp / ("det_out" + std::to_string(run++) + ".ppm")).string();
      const auto r = test_util::run_command(
          g_cli_path + " interpolate " + pa + " " + pb + " " + out +
          " --seed 42 --threads " + std::to_string(threads));
      ran_ok = ran_ok && r.exit_code == 0;
      outputs.push_back(out);
    }
  }
  bool identical = ran_ok;
  const auto reference = slurp(outputs[0]);
  identical = identical && !reference.empty();
  for (size_t i = 1; i < outputs.size() && identical; ++i) {
    identical = slurp(outputs[i]) == reference;
  }

  const RunConfig cfg;
  const auto bytes =
      serialize_archive(init_weights(build_schema(cfg.pyramid, cfg.dims), cfg.seed));
  const bool checksum_ok = fnv1a64_bytes(bytes) == UINT64_C(0xaf6d312b4dc02145);

  Outcome o;
  o.passed = identical && checksum_ok;
  std::ostringstream ss;
  ss << "4 CLI runs byte-identical: " << (identical ? "yes" : "NO")
     << "; golden checksum match: " << (checksum_ok ? "yes" : "NO");
  o.detail = ss.str();
  return o;
}

// 10. Archive round-trip and corruption rejection.
Outcome criterion_archive() {
  const RunConfig cfg;
  const auto schema = build_schema(cfg.pyramid, cfg.dims);
  const auto archive = init_weights(schema, 7);

  const auto p1 = (g_tmp / "arch1.dqbw").string();
  const auto p2 = (g_tmp / "arch2.dqbw").string();
  save_archive(archive, p1);
  save_archive(load_archive(p1), p2);
  const bool round_trip = slurp(p1) == slurp(p2) && !slurp(p1).empty();

  auto corrupted = archive;
  std::string missing_name = corrupted.entries[5].name;
  corrupted.entries.erase(corrupted.entries.begin() + 5);
  bool named_rejection = false;
  try {
    validate_archive(corrupted, schema);
  } catch (const ValidationError& e) {
    named_rejection = std::string(e.what()).find(missing_name) != std::string::npos;
  }

  Outcome o;
  o.passed = round_trip && named_rejection;
  std::ostringstream ss;
  ss << "save->load->save byte-identical: " << (round_trip ? "yes" : "NO")
     << "; corrupted archive rejected naming " << missing_name << ": "
     << (named_rejection ? "yes" : "NO");
  o.detail = ss.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc + 1; ++i) {
    if (std::string(argv[i]) == "--cli" && i + 1 < argc) {
      g_cli_path = argv[i + 1];
      ++i;
    }
  }
  g_tmp = fs::temp_directory_path() /
          ("dqbc_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(g_tmp);

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"correlation oracle equivalence", criterion_oracle_equivalence},
      {"channel-count identity", criterion_channel_counts},
      {"exactness suite", criterion_exactness},
      {"gradient suite", criterion_gradients},
      {"motion-fit demo", criterion_motion_fit},
      {"end-to-end shape contract", criterion_shapes},
      {"composition degenerate cases", criterion_composition},
      {"loss unit values", criterion_losses},
      {"determinism", criterion_determinism},
      {"weight archive", criterion_archive},
  };

  bool all_passed = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].run();
    } catch (const std::exception& e) {
      outcome.passed = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %2zu. %s — %s\n", outcome.passed ? "PASS" : "FAIL", i + 1,
                criteria[i].name, outcome.detail.c_str());
    std::fflush(stdout);
    all_passed = all_passed && outcome.passed;
  }

  fs::remove_all(g_tmp);
  std::printf("%s\n", all_passed ? "ACCEPTANCE: all criteria passed"
                                 : "ACCEPTANCE: FAILURES present");
  return all_passed ? 0 : 1;
}
