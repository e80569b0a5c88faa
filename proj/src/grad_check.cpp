#include "shapecm/autodiff/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace shapecm::ad {

Var BoundParams::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < source->segments().size(); ++i)
    if (source->segments()[i].name == name) return vars[i];
  throw std::invalid_argument("bound params: no segment '" + name + "'");
}

void BoundParams::add_grad_to(ParamVector& grad, double weight) const {
  if (!grad.same_layout(*source))
    throw std::invalid_argument("bound params: gradient layout mismatch");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& seg = source->segments()[i];
    grad.values().segment(seg.offset, seg.size()) +=
        weight * vars[i].tape->grad(vars[i]);
  }
}

BoundParams bind(Tape& tape, const ParamVector& params) {
  BoundParams bp;
  bp.source = &params;
  bp.vars.reserve(params.segments().size());
  for (const auto& seg : params.segments())
    bp.vars.push_back(
        tape.leaf(params.values().segment(seg.offset, seg.size())));
  return bp;
}

GradCheckResult check_gradients(
    const std::function<double(const ParamVector&)>& f,
    const std::function<ParamVector(const ParamVector&)>& analytic_grad,
    const ParamVector& at, double step) {
  GradCheckResult res;
  const ParamVector g = analytic_grad(at);
  ParamVector probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double x0 = at.values()[i];
    probe.values()[i] = x0 + step;
    const double fp = f(probe);
    probe.values()[i] = x0 - step;
    const double fm = f(probe);
    probe.values()[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      res.finite = false;
      res.worst_index = i;
      res.max_rel_error = std::numeric_limits<double>::infinity();
      return res;
    }
    const double num = (fp - fm) / (2.0 * step);
    const double ana = g.values()[i];
    const double rel = std::abs(ana - num) /
                       std::max({std::abs(ana), std::abs(num), 1e-12});
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace shapecm::ad
