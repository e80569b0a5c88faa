#pragma once

#include <functional>

#include "shapecm/autodiff/grad_check.hpp"
#include "shapecm/autodiff/param_vector.hpp"
#include "shapecm/autodiff/tape.hpp"
#include "shapecm/channels.hpp"

namespace shapecm::testing {

/// Finite-difference check of a tape-built scalar against its backward pass.
inline ad::GradCheckResult check_tape_fn(
    const std::function<ad::Var(ad::Tape&, const ad::BoundParams&)>& build,
    const ad::ParamVector& at, double step = 1e-6) {
  auto value = [&](const ad::ParamVector& pv) {
    ad::Tape tape;
    const ad::BoundParams bp = ad::bind(tape, pv);
    return tape.scalar(build(tape, bp));
  };
  auto grad = [&](const ad::ParamVector& pv) {
    ad::Tape tape;
    const ad::BoundParams bp = ad::bind(tape, pv);
    const ad::Var root = build(tape, bp);
    tape.backward(root);
    ad::ParamVector g = pv.zeros_like();
    bp.add_grad_to(g);
    return g;
  };
  return ad::check_gradients(value, grad, at, step);
}

inline Eigen::ArrayXd random_array(Eigen::Index n, RngStream& rng, double lo,
                                   double hi) {
  Eigen::ArrayXd out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out[i] = lo + (hi - lo) * rng.uniform();
  return out;
}

}  // namespace shapecm::testing
