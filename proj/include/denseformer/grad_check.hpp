#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "denseformer/tensor.hpp"

namespace denseformer::ag {

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of this many per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  // The floor keeps coordinates whose true derivative is ~0 from reporting
  // pure finite-difference noise as a large relative error.
  double floor = 1e-4;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarProgram = std::function<Tensor<double>(Tape<double>&)>;

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h against the tape's
// analytic gradient, over the coordinates of every tensor in `params`.
// `f` must return a single-element tensor.
GradCheckReport grad_check(const ScalarProgram& f, std::span<Tensor<double>> params,
                           const GradCheckOptions& options = {});

}  // namespace denseformer::ag
