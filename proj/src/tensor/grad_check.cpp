#include "denseformer/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace denseformer::ag {

namespace {

double evaluate(const ScalarProgram& f) {
  Tape<double> tape(false);
  auto out = f(tape);
  if (out.size() != 1) throw ShapeError("grad_check: program is not scalar-valued");
  return out.item();
}

}  // namespace

GradCheckReport grad_check(const ScalarProgram& f, std::span<Tensor<double>> params, const GradCheckOptions& options) {
  for (auto& p : params) {
    p.clear_grad();
    p.set_requires_grad(true);
  }
  Tape<double> tape;
  auto loss = f(tape);
  if (loss.size() != 1) throw ShapeError("grad_check: program is not scalar-valued");
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.size(), 0.0);
    }
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  const double h = options.step;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<std::size_t> coords(p.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      double& v = p.data()[c];
      const double saved = v;
      v = saved + h;
      const double up = evaluate(f);
      v = saved - h;
      const double down = evaluate(f);
      v = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (report.coords_checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace denseformer::ag
