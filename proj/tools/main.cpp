#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dqbc/config.hpp"
#include "dqbc/fit_motion.hpp"
#include "dqbc/flow_viz.hpp"
#include "dqbc/image_io.hpp"
#include "dqbc/pipeline.hpp"
#include "dqbc/selfcheck.hpp"

namespace {

using namespace dqbc;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitPropertyFailure = 3;

struct InterpolateArgs {
  std::string frame0, frame1, out;
  std::string weights_path, config_path;
  uint64_t seed = 0;
  bool seed_given = false;
  bool dump_flow = false;
};

struct BenchArgs {
  std::string op = "all";
  std::string sizes = "32x32x96";
  int reps = 5;
  uint64_t seed = 42;
};

struct FitMotionArgs {
  std::string frame0, frame1;
  int iterations = 500;
  double step = 0.5;
  std::string truth_flow;
};

template <typename T>
Tensor3<T> crop_to(const Tensor3<T>& t, int h, int w) {
  return (t.height() == h && t.width() == w) ? t : crop(t, 0, 0, h, w);
}

template <typename T>
int interpolate_impl(const InterpolateArgs& args, const RunConfig& cfg) {
  const Tensor3<T> img0 = load_image<T>(args.frame0);
  const Tensor3<T> img1 = load_image<T>(args.frame1);

  WeightArchive archive;
  if (!args.weights_path.empty()) {
    archive = load_archive(args.weights_path);
  } else {
    archive = init_weights(build_schema(cfg.pyramid, cfg.dims), cfg.seed);
  }
  const ModelWeights<T> weights =
      unpack_weights<T>(archive, cfg.pyramid, cfg.dims);

  const auto result = interpolate_midframe(img0, img1, weights, cfg.pyramid,
                                           static_cast<T>(cfg.t));
  save_image(result.frame, args.out);

  if (args.dump_flow) {
    const int h = img0.height(), w = img0.width();
    const auto& d = result.diagnostics;
    auto aux = [&](const char* suffix, const char* ext) {
      std::filesystem::path p(args.out);
      p.replace_extension();
      return p.string() + "." + suffix + ext;
    };
    save_image(flow_to_color(MotionField<T>(crop_to(d.field0.tensor(), h, w))),
               aux("flow0", ".ppm"));
    save_image(flow_to_color(MotionField<T>(crop_to(d.field1.tensor(), h, w))),
               aux("flow1", ".ppm"));
    save_image(crop_to(d.occlusion.tensor(), h, w), aux("occ", ".pgm"));
    save_image(crop_to(d.occlusion_final, h, w), aux("occ_final", ".pgm"));
  }
  std::printf("wrote %s (%dx%d)\n", args.out.c_str(), result.frame.width(),
              result.frame.height());
  return kExitOk;
}

int run_interpolate(const InterpolateArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_run_config(args.config_path);
  if (args.seed_given) cfg.seed = args.seed;
  if (cfg.precision == Precision::kF64) {
    return interpolate_impl<double>(args, cfg);
  }
  return interpolate_impl<float>(args, cfg);
}

int run_check(const std::string& selector) {
  const auto results = selfcheck::run_suites(selector);
  bool all_passed = true;
  for (const auto& r : results) {
    std::printf("[%s] %-28s max_err=%-12.3e (%.2f s)\n",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.max_error,
                r.seconds);
    all_passed = all_passed && r.passed;
  }
  std::printf("%zu suites, %s\n", results.size(),
              all_passed ? "all passed" : "FAILURES present");
  return all_passed ? kExitOk : kExitPropertyFailure;
}

struct BenchCase {
  int h = 0, w = 0, c = 0;
};

std::vector<BenchCase> parse_sizes(const std::string& sizes) {
  std::vector<BenchCase> out;
  size_t pos = 0;
  while (pos < sizes.size()) {
    const size_t end = sizes.find(',', pos);
    const std::string tok =
        sizes.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    BenchCase bc;
    if (std::sscanf(tok.c_str(), "%dx%dx%d", &bc.h, &bc.w, &bc.c) != 3 ||
        bc.h <= 0 || bc.w <= 0 || bc.c <= 0) {
      throw ConfigError("bench: bad size \"" + tok + "\" (expected HxWxC)");
    }
    out.push_back(bc);
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  if (out.empty()) throw ConfigError("bench: no sizes given");
  return out;
}

// Times fn reps times and returns the median nanoseconds.
template <typename Fn>
int64_t median_ns(int reps, Fn&& fn) {
  std::vector<int64_t> times;
  times.reserve(reps);
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(
        std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start)
            .count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

int run_bench(const BenchArgs& args) {
  const std::vector<std::string> known = {"gather", "warp", "conv", "upsample"};
  std::vector<std::string> ops;
  if (args.op == "all") {
    ops = known;
  } else if (std::find(known.begin(), known.end(), args.op) != known.end()) {
    ops = {args.op};
  } else {
    throw ConfigError("bench: unknown op \"" + args.op +
                      "\" (expected all, gather, warp, conv or upsample)");
  }
  if (args.reps < 1) throw ConfigError("bench: repetitions must be >= 1");

  std::printf("op,height,width,channels,config,median_ns,throughput_elems_per_s\n");
  for (const auto& bc : parse_sizes(args.sizes)) {
    for (const auto& op : ops) {
      uint64_t state = args.seed;
      auto rnd = [&](int h, int w, int c) {
        Tensor3f t(h, w, c);
        for (size_t i = 0; i < t.size(); ++i) {
          t.data()[i] = float(splitmix64_unit(state)) * 2.0f - 1.0f;
        }
        return t;
      };
      std::string config = "-";
      size_t out_elems = 0;
      int64_t ns = 0;
      if (op == "gather") {
        PyramidConfig cfg;  // default L=3, radii 6,5,4
        const int m = 1 << (cfg.levels - 1);
        if (bc.h % m != 0 || bc.w % m != 0) {
          throw ConfigError("bench: gather sizes must be multiples of " +
                            std::to_string(m));
        }
        config = "L3_r6-5-4";
        const auto queries = rnd(bc.h, bc.w, bc.c);
        const auto keys = build_key_pyramid(rnd(bc.h, bc.w, bc.c), cfg);
        CorrelationVolume<float> volume;
        ns = median_ns(args.reps, [&] {
          volume = gather_unilateral_correlation(queries, keys, cfg);
        });
        out_elems = volume.scores.size();
      } else if (op == "warp") {
        config = "bilinear";
        const auto source = rnd(bc.h, bc.w, bc.c);
        auto flow = MotionField<float>::zeros(bc.h, bc.w);
        for (size_t i = 0; i < flow.tensor().size(); ++i) {
          flow.tensor().data()[i] = float(splitmix64_unit(state)) * 4.0f - 2.0f;
        }
        Tensor3f out;
        ns = median_ns(args.reps, [&] { out = backward_warp(source, flow); });
        out_elems = out.size();
      } else if (op == "conv") {
        config = "k3_s1";
        const auto input = rnd(bc.h, bc.w, bc.c);
        ConvSpec<float> spec = ConvSpec<float>::zeros(bc.c, bc.c, 3, 3, 1, 1);
        for (auto& v : spec.kernel) {
          v = float(splitmix64_unit(state)) * 0.2f - 0.1f;
        }
        Tensor3f out;
        ns = median_ns(args.reps, [&] { out = conv2d(input, spec); });
        out_elems = out.size();
      } else {  // upsample
        config = "x2";
        const MotionField<float> field(rnd(bc.h, bc.w, 2));
        const auto logits = rnd(bc.h, bc.w, kConvexLogitChannels);
        MotionField<float> fine;
        ns = median_ns(args.reps, [&] { fine = convex_upsample(field, logits); });
        out_elems = fine.tensor().size();
      }
      const double throughput = ns > 0 ? double(out_elems) * 1e9 / double(ns) : 0.0;
      std::printf("%s,%d,%d,%d,%s,%lld,%.3e\n", op.c_str(), bc.h, bc.w,
                  op == "upsample" ? 2 : bc.c, config.c_str(),
                  static_cast<long long>(ns), throughput);
    }
  }
  return kExitOk;
}

int run_fit_motion(const FitMotionArgs& args) {
  const auto img0 = load_image<double>(args.frame0);
  const auto img1 = load_image<double>(args.frame1);
  require_same_shape(img0, img1, "fit-motion");

  FitMotionOptions opts;
  opts.iterations = args.iterations;
  opts.step = args.step;
  const auto result = fit_motion(img0, img1, opts);

  std::printf("iterations: %d\n", result.iterations_run);
  std::printf("initial_loss: %.6e\n", result.initial_loss);
  std::printf("final_loss: %.6e\n", result.final_loss);
  if (!args.truth_flow.empty()) {
    double dx = 0.0, dy = 0.0;
    if (std::sscanf(args.truth_flow.c_str(), "%lf,%lf", &dx, &dy) != 2) {
      throw ConfigError("fit-motion: --truth-flow expects \"dx,dy\"");
    }
    const double epe = mean_endpoint_error(result.field, dx, dy, 0.8);
    std::printf("mean_endpoint_error_interior: %.4f px\n", epe);
  }
  if (result.diverged) {
    std::fprintf(stderr, "fit-motion: loss diverged to non-finite values\n");
    return kExitPropertyFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Densely queried bilateral correlation frame interpolation"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "worker threads for tensor kernels")
      ->capture_default_str();

  app.fallthrough();

  InterpolateArgs in_args;
  auto* interp = app.add_subcommand(
      "interpolate", "Synthesize the mid frame between two images");
  interp->fallthrough();
  interp->add_option("frame0", in_args.frame0, "first frame (binary PPM)")
      ->required();
  interp->add_option("frame1", in_args.frame1, "second frame (binary PPM)")
      ->required();
  interp->add_option("output", in_args.out, "output image path")->required();
  interp->add_option("--weights", in_args.weights_path, "DQBW weight archive");
  interp->add_option("--config", in_args.config_path, "JSON run configuration");
  auto* seed_opt = interp->add_option(
      "--seed", in_args.seed, "weight-init seed when no archive is given");
  interp->add_flag("--dump-flow", in_args.dump_flow,
                   "also write flow color maps and occlusion maps");

  std::string selector = "all";
  auto* check = app.add_subcommand("check", "Run the property suites (64-bit)");
  check->fallthrough();
  check->add_option("suite", selector, "all | oracle | grad | exact");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time the main kernels, CSV output");
  bench->fallthrough();
  bench->add_option("--op", bench_args.op, "all | gather | warp | conv | upsample")
      ->capture_default_str();
  bench->add_option("--sizes", bench_args.sizes, "comma-separated HxWxC list")
      ->capture_default_str();
  bench->add_option("--reps", bench_args.reps, "repetitions per case")
      ->capture_default_str();
  bench->add_option("--seed", bench_args.seed, "input generation seed");

  FitMotionArgs fit_args;
  auto* fit = app.add_subcommand(
      "fit-motion", "Recover a dense motion field by gradient descent");
  fit->fallthrough();
  fit->add_option("frame0", fit_args.frame0, "source frame")->required();
  fit->add_option("frame1", fit_args.frame1, "target frame")->required();
  fit->add_option("--iterations", fit_args.iterations, "iteration budget")
      ->capture_default_str();
  fit->add_option("--step", fit_args.step, "initial step size")
      ->capture_default_str();
  fit->add_option("--truth-flow", fit_args.truth_flow,
                  "reference constant flow \"dx,dy\" for the error report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  set_num_threads(threads);
  in_args.seed_given = seed_opt->count() > 0;

  try {
    if (interp->parsed()) return run_interpolate(in_args);
    if (check->parsed()) return run_check(selector);
    if (bench->parsed()) return run_bench(bench_args);
    if (fit->parsed()) return run_fit_motion(fit_args);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
