#pragma once

#include "exlasso/common.hpp"
#include "exlasso/linalg.hpp"
#include "exlasso/loss.hpp"
#include "exlasso/model.hpp"
#include "exlasso/objective.hpp"
#include "exlasso/prox.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

namespace exlasso {

struct AdmmParams {
  double sigma = 1.0;
  double step_length = 1.618;
  Index max_iters = 200000;
  /// Rebalance sigma every this many iterations from the primal/dual residual
  /// ratio; 0 keeps sigma fixed.
  Index rebalance_every = 50;
};

struct ApgParams {
  /// Lipschitz constant of the smooth part; lambda_max(A^T A) * sup h'' when unset.
  std::optional<double> lipschitz;
  bool restart = true;
  Index max_iters = 100000;
};

struct IlsaParams {
  double eps_smooth = 1e-10;
  Index max_iters = 5000;
};

struct BaselineParams {
  double tol = 1e-6;
  double max_seconds = std::numeric_limits<double>::infinity();
  /// eta_KKT is evaluated every this many iterations (and at the last one).
  Index check_every = 10;
  /// Multiplies the power-iteration estimate of lambda_max(A^T A).
  double lipschitz_safety = 1.01;
  AdmmParams admm;
  ApgParams apg;
  IlsaParams ilsa;

  void validate() const {
    detail::require(tol > 0.0, "baselines: tol must be positive");
    detail::require(check_every >= 1, "baselines: check_every must be >= 1");
    detail::require(admm.sigma > 0.0, "admm: sigma must be positive");
    detail::require(admm.step_length > 0.0 && admm.step_length < (1.0 + std::sqrt(5.0)) / 2.0,
                    "admm: step length must lie in (0, (1+sqrt 5)/2)");
    detail::require(ilsa.eps_smooth > 0.0, "ilsa: eps_smooth must be positive");
  }
};

namespace detail {

class BaselineClock {
 public:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline void finish_report(SolveReport& rep, const ProblemInstance& inst, const Vector& x,
                          const Vector& Ax, double eta, double tol, const BaselineClock& clk) {
  rep.x = x;
  rep.eta_kkt = eta;
  rep.objective = primal_objective(inst, x, Ax);
  rep.converged = eta <= tol;
  rep.nnz_per_group = nnz_per_group(x, inst.partition);
  if (rep.message.empty() && !rep.converged) rep.message = "iteration cap reached";
  rep.times.total = clk.elapsed();
}

template <class F>
double timed(double& acc, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  const double v = f();
  acc += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return v;
}

}  // namespace detail

/**
 * Linearized ADMM on  min h(y) - <c,x> + lambda p(x)  s.t.  Ax - y = 0.
 *
 * x-step: one exclusive prox with proximal term (eta I - A^T A), eta >= lambda_max(A^T A).
 * y-step: prox of h / sigma.
 * multiplier: z += step_length * sigma * (Ax - y).
 * The reported dual u is z, which approximates grad h(Ax) at a solution.
 */
inline SolveReport admm_solve(const ProblemInstance& inst, const BaselineParams& params = {}) {
  inst.validate();
  params.validate();
  detail::BaselineClock clk;
  SolveReport rep;
  rep.solver = "admm";
  const double eta_lin = params.lipschitz_safety * lambda_max_gram(inst.A);
  const double eta = eta_lin > 0.0 ? eta_lin : 1.0;
  const double kappa = params.admm.step_length;
  double sigma = params.admm.sigma;

  Vector x = Vector::Zero(inst.n());
  Vector Ax = Vector::Zero(inst.m());
  Vector y = Vector::Zero(inst.m());
  Vector z = Vector::Zero(inst.m());
  Vector y_prev = y;
  double kkt = detail::timed(rep.times.kkt_check, [&] { return kkt_residual(inst, x, Ax); });
  rep.history.push_back({0, kkt, primal_objective(inst, x, Ax)});

  for (Index it = 1; it <= params.admm.max_iters && kkt > params.tol; ++it) {
    const Vector r = Ax - y + z / sigma;
    const Vector trial = x - (inst.A.transpose() * r) / eta + inst.c / (sigma * eta);
    const double t0 = clk.elapsed();
    x = prox_exclusive(trial, inst.lambda / (sigma * eta), inst.w, inst.partition).y;
    Ax.noalias() = inst.A * x;
    const Vector zs = Ax + z / sigma;
    y_prev = y;
    y = prox_loss(inst.loss, zs, 1.0 / sigma, inst.b).y;
    rep.times.prox += clk.elapsed() - t0;
    const Vector pres = Ax - y;
    z += kappa * sigma * pres;
    rep.matvecs += 2;
    rep.outer_iters = it;

    const Index rb = params.admm.rebalance_every;
    if (rb > 0 && it % rb == 0) {
      const double primal = pres.norm();
      const double dual = sigma * (inst.A.transpose() * (y - y_prev)).norm();
      rep.matvecs += 1;
      if (primal > 10.0 * dual) {
        sigma *= 2.0;
      } else if (dual > 10.0 * primal) {
        sigma /= 2.0;
      }
    }
    if (it % params.check_every == 0 || it == params.admm.max_iters) {
      kkt = detail::timed(rep.times.kkt_check, [&] { return kkt_residual(inst, x, Ax); });
      rep.matvecs += 1;
      rep.history.push_back({it, kkt, primal_objective(inst, x, Ax)});
      if (clk.elapsed() > params.max_seconds) {
        rep.message = "time cap reached";
        break;
      }
    }
  }
  rep.u = z;
  detail::finish_report(rep, inst, x, Ax, kkt, params.tol, clk);
  return rep;
}

/**
 * FISTA on F(x) = h(Ax) - <c,x> + lambda p(x) with step 1/L and function-value
 * restart: momentum is reset whenever F increases.
 */
inline SolveReport apg_solve(const ProblemInstance& inst, const BaselineParams& params = {}) {
  inst.validate();
  params.validate();
  detail::BaselineClock clk;
  SolveReport rep;
  rep.solver = "apg";
  double L = params.apg.lipschitz.value_or(params.lipschitz_safety * lambda_max_gram(inst.A) *
                                           loss_curvature_bound(inst.loss));
  if (!(L > 0.0)) L = 1.0;

  Vector x = Vector::Zero(inst.n());
  Vector Ax = Vector::Zero(inst.m());
  Vector x_prev = x;
  Vector Ax_prev = Ax;
  double t = 1.0;
  double F = primal_objective(inst, x, Ax);
  double kkt = detail::timed(rep.times.kkt_check, [&] { return kkt_residual(inst, x, Ax); });
  rep.history.push_back({0, kkt, F});

  for (Index it = 1; it <= params.apg.max_iters && kkt > params.tol; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    const Vector v = x + beta * (x - x_prev);
    const Vector Av = Ax + beta * (Ax - Ax_prev);
    const Vector g = inst.A.transpose() * loss_value_grad(inst.loss, Av, inst.b).gradient - inst.c;
    const double t0 = clk.elapsed();
    Vector x_new = prox_exclusive(v - g / L, inst.lambda / L, inst.w, inst.partition).y;
    rep.times.prox += clk.elapsed() - t0;
    Vector Ax_new = inst.A * x_new;
    rep.matvecs += 2;
    const double F_new = primal_objective(inst, x_new, Ax_new);
    rep.outer_iters = it;

    if (params.apg.restart && F_new > F && beta > 0.0) {
      // Restart from x with a plain proximal gradient step.
      x_prev = x;
      Ax_prev = Ax;
      t = 1.0;
      continue;
    }
    x_prev = std::move(x);
    Ax_prev = std::move(Ax);
    x = std::move(x_new);
    Ax = std::move(Ax_new);
    F = F_new;
    t = t_next;

    if (it % params.check_every == 0 || it == params.apg.max_iters) {
      kkt = detail::timed(rep.times.kkt_check, [&] { return kkt_residual(inst, x, Ax); });
      rep.matvecs += 1;
      rep.history.push_back({it, kkt, F});
      if (clk.elapsed() > params.max_seconds) {
        rep.message = "time cap reached";
        break;
      }
    }
  }
  rep.u = loss_value_grad(inst.loss, Ax, inst.b).gradient;
  detail::finish_report(rep, inst, x, Ax, kkt, params.tol, clk);
  return rep;
}

/**
 * Iterative least squares: x+ solves (A^T A + 2 lambda F) x = A^T b + c where
 * F is the diagonal quadratic majorizer of the regularizer at the current x,
 *   F_ii = w_i * Theta_g / max(|x_i|, eps),  Theta_g = sum_{k in g} w_k max(|x_k|, eps).
 * Least squares only. Starts from the ridge solution with penalty lambda.
 */
inline SolveReport ilsa_solve(const ProblemInstance& inst, const BaselineParams& params = {}) {
  inst.validate();
  params.validate();
  if (inst.loss != LossKind::LeastSquares) {
    throw InvalidArgument("ilsa: only the least-squares loss is supported");
  }
  detail::BaselineClock clk;
  SolveReport rep;
  rep.solver = "ilsa";
  const Index m = inst.m();
  const Index n = inst.n();
  const double eps = params.ilsa.eps_smooth;
  const Vector rhs = inst.A.transpose() * inst.b + inst.c;
  const bool wide = m < n;
  const Matrix gram = wide ? Matrix(inst.A * inst.A.transpose()) : Matrix(inst.A.transpose() * inst.A);

  // Solves (A^T A + Diag(D)) x = rhs; Woodbury through the m-by-m side when m < n.
  auto solve_shifted = [&](const Vector& D) -> Vector {
    if (!wide) {
      Matrix K = gram;
      K.diagonal() += D;
      Eigen::LLT<Matrix> llt(K);
      if (llt.info() != Eigen::Success) throw NumericalError("ilsa: system not positive definite");
      return llt.solve(rhs);
    }
    const Vector Dinv = D.cwiseInverse();
    const Vector Dr = Dinv.cwiseProduct(rhs);
    Matrix K = inst.A * Dinv.asDiagonal() * inst.A.transpose();
    K.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() != Eigen::Success) throw NumericalError("ilsa: system not positive definite");
    const Vector s = llt.solve(inst.A * Dr);
    return Dr - Dinv.cwiseProduct(inst.A.transpose() * s);
  };

  Vector x = [&] {
    double t = clk.elapsed();
    Vector v = solve_shifted(Vector::Constant(n, inst.lambda));
    rep.times.linear_solve += clk.elapsed() - t;
    return v;
  }();
  Vector Ax = inst.A * x;
  double kkt = detail::timed(rep.times.kkt_check, [&] { return kkt_residual(inst, x, Ax); });
  rep.history.push_back({0, kkt, primal_objective(inst, x, Ax)});

  Vector D(n);
  for (Index it = 1; it <= params.ilsa.max_iters && kkt > params.tol; ++it) {
    for (Index j = 0; j < inst.partition.num_groups(); ++j) {
      const auto& g = inst.partition.groups()[static_cast<std::size_t>(j)];
      double theta = 0.0;
      for (Index i : g) theta += inst.w[i] * std::max(std::abs(x[i]), eps);
      for (Index i : g) D[i] = 2.0 * inst.lambda * inst.w[i] * theta / std::max(std::abs(x[i]), eps);
    }
    const double t0 = clk.elapsed();
    x = solve_shifted(D);
    rep.times.linear_solve += clk.elapsed() - t0;
    Ax.noalias() = inst.A * x;
    rep.matvecs += 1;
    rep.outer_iters = it;
    if (it % params.check_every == 0 || it == params.ilsa.max_iters || it <= 10) {
      kkt = detail::timed(rep.times.kkt_check, [&] { return kkt_residual(inst, x, Ax); });
      rep.history.push_back({it, kkt, primal_objective(inst, x, Ax)});
      if (clk.elapsed() > params.max_seconds) {
        rep.message = "time cap reached";
        break;
      }
    }
  }
  rep.u = Ax - inst.b;
  detail::finish_report(rep, inst, x, Ax, kkt, params.tol, clk);
  return rep;
}

}  // namespace exlasso
