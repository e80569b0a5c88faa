#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shapecm/autodiff/param_vector.hpp"
#include "shapecm/autodiff/tape.hpp"

namespace shapecm::ad {

/// One tape leaf per ParamVector segment, in segment order.
struct BoundParams {
  std::vector<Var> vars;
  const ParamVector* source = nullptr;

  Var operator[](const std::string& name) const;
  /// Accumulates the tape adjoints of the bound leaves into `grad`
  /// (same layout as the source), scaled by `weight`.
  void add_grad_to(ParamVector& grad, double weight = 1.0) const;
};

BoundParams bind(Tape& tape, const ParamVector& params);

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  bool finite = true;  // false: f non-finite at a perturbed point
};

/// Central-difference check of an analytic gradient. Relative error per
/// parameter is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckResult check_gradients(
    const std::function<double(const ParamVector&)>& f,
    const std::function<ParamVector(const ParamVector&)>& analytic_grad,
    const ParamVector& at, double step = 1e-6);

}  // namespace shapecm::ad
