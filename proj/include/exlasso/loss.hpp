#pragma once

#include "exlasso/common.hpp"
#include "exlasso/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace exlasso {

/// Value, gradient and (diagonal) Hessian of a coordinate-separable loss.
struct LossEval {
  double value = 0.0;
  Vector gradient;
  Vector hessian_diag;
};

/// y = Prox_{nu h}(z), H_diag = diag of its derivative (I + nu h''(y))^{-1},
/// env = E_{nu h}(z).
struct LossProx {
  Vector y;
  Vector H_diag;
  double env = 0.0;
};

namespace detail {

/// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

/// 1 / (1 + exp(-t)) without overflow.
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline void check_labels(LossKind kind, const Eigen::Ref<const Vector>& b) {
  if (kind != LossKind::Logistic) return;
  for (Index i = 0; i < b.size(); ++i) {
    if (b[i] != 1.0 && b[i] != -1.0) {
      throw InvalidArgument("logistic loss: label " + std::to_string(i + 1) +
                            " is not +-1");
    }
  }
}

// Logistic scalar pieces for h(y) = log(1 + exp(-b y)).
inline double logistic_d1(double y, double b) { return -b * sigmoid(-b * y); }
inline double logistic_d2(double y, double b) {
  return sigmoid(b * y) * sigmoid(-b * y);
}

/**
 * Root of g(y) = y - z + nu h'(y) for the logistic term with label b.
 * |h'| < 1 and sign(h') = -b, so the root lies in [z, z + nu] (b = 1) or
 * [z - nu, z] (b = -1); Newton steps are kept inside the shrinking bracket
 * and replaced by bisection whenever they would leave it or the residual
 * failed to halve on the previous step.
 */
inline double logistic_prox_scalar(double z, double b, double nu) {
  double lo = b > 0 ? z : z - nu;
  double hi = b > 0 ? z + nu : z;
  double y = z;
  const double tol = 1e-12 * (1.0 + std::abs(z));
  double prev_g = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    const double g = y - z + nu * logistic_d1(y, b);
    if (std::abs(g) <= tol) return y;
    const bool slow = std::abs(g) > 0.5 * prev_g;
    prev_g = std::abs(g);
    if (g > 0) hi = y; else lo = y;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max(1.0, std::max(std::abs(lo), std::abs(hi)))) {
      return y;
    }
    const double dg = 1.0 + nu * logistic_d2(y, b);
    double next = y - g / dg;
    if (slow || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    y = next;
  }
  throw NumericalError("logistic prox: scalar solve did not converge");
}

}  // namespace detail

inline LossEval loss_value_grad(LossKind kind, const Eigen::Ref<const Vector>& y,
                                const Eigen::Ref<const Vector>& b) {
  detail::require_size(b.size(), y.size(), "loss labels");
  detail::check_labels(kind, b);
  LossEval out;
  const Index m = y.size();
  if (kind == LossKind::LeastSquares) {
    out.gradient = y - b;
    out.value = 0.5 * out.gradient.squaredNorm();
    out.hessian_diag = Vector::Ones(m);
    return out;
  }
  out.gradient.resize(m);
  out.hessian_diag.resize(m);
  double v = 0.0;
  for (Index i = 0; i < m; ++i) {
    v += detail::softplus(-b[i] * y[i]);
    out.gradient[i] = detail::logistic_d1(y[i], b[i]);
    out.hessian_diag[i] = detail::logistic_d2(y[i], b[i]);
  }
  out.value = v;
  return out;
}

inline double loss_value(LossKind kind, const Eigen::Ref<const Vector>& y,
                         const Eigen::Ref<const Vector>& b) {
  if (kind == LossKind::LeastSquares) return 0.5 * (y - b).squaredNorm();
  double v = 0.0;
  for (Index i = 0; i < y.size(); ++i) v += detail::softplus(-b[i] * y[i]);
  return v;
}

/// h(p) - h(q), evaluated termwise so that nearby arguments do not lose the
/// difference to cancellation between two large totals.
inline double loss_difference(LossKind kind, const Eigen::Ref<const Vector>& p,
                              const Eigen::Ref<const Vector>& q,
                              const Eigen::Ref<const Vector>& b) {
  if (kind == LossKind::LeastSquares) {
    // (|p-b|^2 - |q-b|^2)/2 = <p-q, p+q-2b>/2
    return 0.5 * (p - q).dot(p + q - 2.0 * b);
  }
  double v = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    v += detail::softplus(-b[i] * p[i]) - detail::softplus(-b[i] * q[i]);
  }
  return v;
}

/// Upper bound on h'' (1 for least squares, 1/4 for logistic).
inline double loss_curvature_bound(LossKind kind) {
  return kind == LossKind::LeastSquares ? 1.0 : 0.25;
}

inline LossProx prox_loss(LossKind kind, const Eigen::Ref<const Vector>& z,
                          double nu, const Eigen::Ref<const Vector>& b) {
  detail::require(nu > 0.0 && std::isfinite(nu), "prox_loss: nu must be positive");
  detail::require_size(b.size(), z.size(), "prox_loss labels");
  detail::check_labels(kind, b);
  LossProx out;
  const Index m = z.size();
  if (kind == LossKind::LeastSquares) {
    out.y = (z + nu * b) / (1.0 + nu);
    out.H_diag = Vector::Constant(m, 1.0 / (1.0 + nu));
    out.env = 0.5 * (out.y - z).squaredNorm() + nu * 0.5 * (out.y - b).squaredNorm();
    return out;
  }
  out.y.resize(m);
  out.H_diag.resize(m);
  double hv = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double yi = detail::logistic_prox_scalar(z[i], b[i], nu);
    out.y[i] = yi;
    out.H_diag[i] = 1.0 / (1.0 + nu * detail::logistic_d2(yi, b[i]));
    hv += detail::softplus(-b[i] * yi);
  }
  out.env = 0.5 * (out.y - z).squaredNorm() + nu * hv;
  return out;
}

}  // namespace exlasso
