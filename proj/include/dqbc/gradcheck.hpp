#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "dqbc/tensor.hpp"

namespace dqbc {

// A differentiable operation bundled for verification: a forward map from a
// list of tensors to one tensor, and an adjoint returning one cotangent
// tensor per input for a given output cotangent. Runs in 64-bit mode.
struct DifferentiableOp {
  std::function<Tensor3d(const std::vector<Tensor3d>&)> forward;
  std::function<std::vector<Tensor3d>(const std::vector<Tensor3d>&,
                                      const Tensor3d&)>
      adjoint;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool gradients_finite = true;
  int worst_input = -1;
  size_t worst_element = 0;
};

namespace detail {
// abs floor keeps near-zero gradient pairs from blowing up the ratio
inline double rel_error(double a, double b) {
  const double denom = std::max({1e-8, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

inline uint64_t splitmix64_next(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double splitmix64_unit(uint64_t& state) {
  return static_cast<double>(splitmix64_next(state) >> 11) * 0x1.0p-53;
}
}  // namespace detail

// Compares the analytic adjoint against central finite differences of the
// scalar s(x) = <f(x), cotangent>, element by element over every input.
// Returns the maximum relative error (absolute floor 1e-8 in the
// denominator). Inputs should stay small; the sweep costs two forward
// evaluations per input element.
inline GradCheckReport finite_diff_check(const DifferentiableOp& op,
                                         std::vector<Tensor3d> inputs,
                                         const Tensor3d& cotangent,
                                         double epsilon) {
  GradCheckReport report;
  const std::vector<Tensor3d> analytic = op.adjoint(inputs, cotangent);
  if (analytic.size() != inputs.size()) {
    throw ConfigError("finite_diff_check: adjoint returned " +
                      std::to_string(analytic.size()) + " cotangents for " +
                      std::to_string(inputs.size()) + " inputs");
  }
  for (const auto& g : analytic) {
    if (!g.all_finite()) {
      report.gradients_finite = false;
      report.max_rel_error = std::numeric_limits<double>::infinity();
      return report;
    }
  }
  auto inner = [&](const Tensor3d& y) {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
      s += y.data()[i] * cotangent.data()[i];
    }
    return s;
  };
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor3d& x = inputs[i];
    for (size_t j = 0; j < x.size(); ++j) {
      const double saved = x.data()[j];
      x.data()[j] = saved + epsilon;
      const double plus = inner(op.forward(inputs));
      x.data()[j] = saved - epsilon;
      const double minus = inner(op.forward(inputs));
      x.data()[j] = saved;
      const double fd = (plus - minus) / (2.0 * epsilon);
      const double err = detail::rel_error(fd, analytic[i].data()[j]);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = static_cast<int>(i);
        report.worst_element = j;
      }
    }
  }
  return report;
}

// Convenience overload with a deterministic pseudo-random cotangent in
// [0.5, 1.5) so no output element cancels out of the scalar probe.
inline GradCheckReport finite_diff_check(const DifferentiableOp& op,
                                         const std::vector<Tensor3d>& inputs,
                                         double epsilon,
                                         uint64_t cotangent_seed = 7) {
  const Tensor3d probe = op.forward(inputs);
  Tensor3d cotangent(probe.height(), probe.width(), probe.channels());
  uint64_t state = cotangent_seed;
  for (size_t i = 0; i < cotangent.size(); ++i) {
    cotangent.data()[i] = 0.5 + detail::splitmix64_unit(state);
  }
  return finite_diff_check(op, inputs, cotangent, epsilon);
}

}  // namespace dqbc
