#pragma once

#include "exlasso/common.hpp"
#include "exlasso/loss.hpp"
#include "exlasso/model.hpp"
#include "exlasso/prox.hpp"

namespace exlasso {

/// f(x) = h(Ax) - <c,x> + lambda * Delta(x).
inline double primal_objective(const ProblemInstance& inst,
                               const Eigen::Ref<const Vector>& x) {
  detail::require_size(x.size(), inst.n(), "primal_objective x");
  const Vector Ax = inst.A * x;
  const double f = loss_value(inst.loss, Ax, inst.b) - inst.c.dot(x) +
                   inst.lambda * regularizer_value(x, inst.w, inst.partition);
  if (!std::isfinite(f)) throw NumericalError("primal_objective: non-finite value");
  return f;
}

/// Same as primal_objective with Ax supplied by the caller.
inline double primal_objective(const ProblemInstance& inst,
                               const Eigen::Ref<const Vector>& x,
                               const Eigen::Ref<const Vector>& Ax) {
  return loss_value(inst.loss, Ax, inst.b) - inst.c.dot(x) +
         inst.lambda * regularizer_value(x, inst.w, inst.partition);
}

/**
 * Relative KKT residual
 *   ||x - Prox_{lambda p}(x - A^T grad h(Ax) + c)|| / (1 + ||x|| + ||A^T grad h(Ax)||).
 * Zero exactly at minimizers.
 */
inline double kkt_residual(const ProblemInstance& inst,
                           const Eigen::Ref<const Vector>& x,
                           const Eigen::Ref<const Vector>& Ax) {
  detail::require_size(x.size(), inst.n(), "kkt_residual x");
  detail::require(x.allFinite(), "kkt_residual: x must be finite");
  const Vector grad = inst.A.transpose() *
                      loss_value_grad(inst.loss, Ax, inst.b).gradient;
  const Vector trial = x - grad + inst.c;
  const Vector p = prox_exclusive(trial, inst.lambda, inst.w, inst.partition).y;
  return (x - p).norm() / (1.0 + x.norm() + grad.norm());
}

inline double kkt_residual(const ProblemInstance& inst,
                           const Eigen::Ref<const Vector>& x) {
  detail::require_size(x.size(), inst.n(), "kkt_residual x");
  const Vector Ax = inst.A * x;
  return kkt_residual(inst, x, Ax);
}

}  // namespace exlasso
