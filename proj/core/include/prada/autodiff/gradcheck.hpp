#pragma once

#include <functional>
#include <vector>

#include "prada/autodiff/tape.hpp"

namespace prada::ad {

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  // Flattened over all checked inputs, in input order.
  std::vector<double> analytic;
  std::vector<double> numeric;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative errors divide by max(|analytic|, |numeric|, floor), so
  // near-zero coordinates are judged on an absolute scale of `floor`.
  double floor = 1e-5;
};

using ScalarFn = std::function<Var(Tape&, Var)>;
using MultiScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h against tape gradients.
GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& options = {});

// Same, perturbing every coordinate of every input.
GradCheckReport finite_diff_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs,
                                  const GradCheckOptions& options = {});

}  // namespace prada::ad
