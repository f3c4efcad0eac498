#include "prada/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "prada/util/error.hpp"

namespace prada::ad {
namespace {

double evaluate(const MultiScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

}  // namespace

GradCheckReport finite_diff_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  GradCheckReport report;

  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, true));
    Var out = f(tape, vars);
    GradientMap grads = tape.backward(out);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto it = grads.find(vars[k].id());
      for (std::size_t i = 0; i < inputs[k].size(); ++i) {
        report.analytic.push_back(it == grads.end() ? 0.0 : it->second[i]);
      }
    }
  }

  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + options.step;
      const double up = evaluate(f, probe);
      probe[k][i] = orig - options.step;
      const double down = evaluate(f, probe);
      probe[k][i] = orig;
      report.numeric.push_back((up - down) / (2.0 * options.step));
    }
  }

  for (std::size_t i = 0; i < report.analytic.size(); ++i) {
    const double a = report.analytic[i], n = report.numeric[i];
    const double abs_err = std::abs(a - n);
    const double denom = std::max({std::abs(a), std::abs(n), options.floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& options) {
  MultiScalarFn wrapped = [&f](Tape& tape, const std::vector<Var>& v) { return f(tape, v.front()); };
  return finite_diff_check(wrapped, std::vector<Tensor>{x}, options);
}

}  // namespace prada::ad
