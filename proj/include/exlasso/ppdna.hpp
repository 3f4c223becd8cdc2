#pragma once

#include "exlasso/common.hpp"
#include "exlasso/linalg.hpp"
#include "exlasso/model.hpp"
#include "exlasso/objective.hpp"
#include "exlasso/ssn.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace exlasso {

/// Outer proximal point parameters.
struct PpaParams {
  /// Preconditioner weight; 1/lambda_max(A A^T) when unset.
  std::optional<double> tau;
  double sigma0 = 1.0;
  double sigma_growth = 3.0;       // sigma_k = sigma0 * growth^floor(k/2)
  double sigma_cap_factor = 1e8;   // sigma_k <= cap_factor * sigma0
  double eps0 = 0.5;               // eps_k = delta_k = eps0 / eps_rate^k
  double eps_rate = 1.06;
  Index max_outer = 200;
  double tol = 1e-6;               // on eta_KKT
  double max_seconds = std::numeric_limits<double>::infinity();
  SsnParams ssn;

  double sigma(Index k) const {
    const double s = sigma0 * std::pow(sigma_growth, static_cast<double>(k / 2));
    return std::min(s, sigma_cap_factor * sigma0);
  }
  double eps(Index k) const { return eps0 / std::pow(eps_rate, static_cast<double>(k)); }
  double delta(Index k) const { return eps(k); }
};

struct PpaStepResult {
  double sigma = 0.0;
  Vector x_next;
  Vector Ax_next;
  Vector u_next;
  double gap = 0.0;
  bool criterion_a = false;
  bool criterion_b = false;
  /// Inner solve stopped because the gradient reached its rounding floor
  /// rather than because (A) and (B) were verified.
  bool stopped_at_noise_floor = false;
  bool inner_converged = false;
  SsnStats inner;
};

namespace detail {

/// Size of |grad psi| that is indistinguishable from rounding. Both prox
/// arguments carry a relative error of order eps, and the error in
/// x_hat = x_k + sigma c - sigma A^T u reaches the gradient through A.
inline double gradient_noise_floor(double norm_A, const DualEvaluation& ev) {
  return 4.0 * std::numeric_limits<double>::epsilon() *
         (norm_A * ev.x_hat.norm() + ev.z.norm());
}

}  // namespace detail

/**
 * One outer iteration: maximize psi_k from u_warm until the duality gap of the
 * subproblem satisfies
 *   (A) gap <= eps_k^2 / (2 sigma_k)
 *   (B) gap <= delta_k^2 / (2 sigma_k) (|x+ - x_k|^2 + tau |A x+ - A x_k|^2)
 * with x+ = Prox_{sigma_k lambda p}(x_k + sigma_k c - sigma_k A^T u).
 * sigma_cap, when given, bounds sigma_k from above.
 */
inline PpaStepResult ppa_step(const ProblemInstance& inst, const Eigen::Ref<const Vector>& x_k,
                              const Eigen::Ref<const Vector>& Ax_k,
                              const Eigen::Ref<const Vector>& u_warm, double tau,
                              double norm_A, const PpaParams& params, Index k,
                              std::optional<double> sigma_cap = std::nullopt) {
  const double sigma = std::min(params.sigma(k), sigma_cap.value_or(params.sigma(k)));
  const double eps = params.eps(k);
  const double del = params.delta(k);
  SubproblemContext ctx(inst, x_k, Ax_k, sigma, tau);

  PpaStepResult out;
  out.sigma = sigma;
  auto stop = [&](const SsnIterate& it) {
    const DualEvaluation& ev = it.eval;
    const double gap = duality_gap(ctx, ev);
    const Vector dx = ev.xprox.y - ctx.x_k;
    const Vector dAx = ev.Ax - ctx.Ax_k;
    const bool a = gap <= eps * eps / (2.0 * sigma);
    const bool b = gap <= del * del / (2.0 * sigma) * (dx.squaredNorm() + tau * dAx.squaredNorm());
    out.gap = gap;
    out.criterion_a = a;
    out.criterion_b = b;
    if (a && b) return true;
    if (it.grad_norm <= detail::gradient_noise_floor(norm_A, ev)) {
      out.stopped_at_noise_floor = true;
      return true;
    }
    return false;
  };
  SsnResult r = ssn_solve(ctx, u_warm, params.ssn, stop);
  out.inner_converged = r.converged;
  out.inner = std::move(r.stats);
  out.x_next = std::move(r.eval.xprox.y);
  out.Ax_next = std::move(r.eval.Ax);
  out.u_next = std::move(r.eval.u);
  return out;
}

/**
 * Preconditioned proximal point method with semismooth Newton inner solves.
 * Stops when the relative KKT residual drops to params.tol, at the outer
 * iteration cap, or at the time cap.
 *
 * Once an inner solve ends at the rounding floor of the dual gradient, sigma
 * stops growing: larger values only amplify the rounding in sigma A^T u.
 */
inline SolveReport ppdna_solve(const ProblemInstance& inst, const PpaParams& params = {},
                               std::optional<Vector> x0 = std::nullopt,
                               std::optional<Vector> u0 = std::nullopt) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };
  inst.validate();

  SolveReport rep;
  rep.solver = "ppdna";
  const double lmax = lambda_max_gram(inst.A);
  const double tau = params.tau.value_or(lmax > 0.0 ? 1.0 / lmax : 1.0);
  const double norm_A = std::sqrt(std::max(lmax, 0.0));

  Vector x = x0 ? *x0 : Vector::Zero(inst.n());
  detail::require_size(x.size(), inst.n(), "ppdna x0");
  detail::require(x.allFinite(), "ppdna: x0 must be finite");
  Vector u = u0 ? *u0 : Vector::Zero(inst.m());
  detail::require_size(u.size(), inst.m(), "ppdna u0");
  Vector Ax = inst.A * x;
  rep.matvecs += 1;

  auto t_kkt = clock::now();
  double eta = kkt_residual(inst, x, Ax);
  rep.times.kkt_check += std::chrono::duration<double>(clock::now() - t_kkt).count();
  rep.history.push_back({0, eta, primal_objective(inst, x, Ax)});

  Index inner_failures = 0;
  std::optional<double> sigma_cap;
  double best_eta = eta;
  Vector best_x = x;
  Vector best_u = u;
  Vector best_Ax = Ax;
  for (Index k = 0; eta > params.tol && k < params.max_outer; ++k) {
    if (elapsed() > params.max_seconds) {
      rep.message = "time cap reached";
      break;
    }
    PpaStepResult step = ppa_step(inst, x, Ax, u, tau, norm_A, params, k, sigma_cap);
    if (step.stopped_at_noise_floor && !sigma_cap) sigma_cap = step.sigma;
    rep.outer_iters = k + 1;
    rep.inner_iters += step.inner.iterations;
    rep.cg_iters += step.inner.cg_iters;
    rep.matvecs += step.inner.matvecs;
    rep.times.prox += step.inner.prox_seconds;
    rep.times.linear_solve += step.inner.solve_seconds;
    if (!step.inner_converged) ++inner_failures;
    x = std::move(step.x_next);
    Ax = std::move(step.Ax_next);
    u = std::move(step.u_next);

    t_kkt = clock::now();
    eta = kkt_residual(inst, x, Ax);
    rep.matvecs += 1;
    rep.times.kkt_check += std::chrono::duration<double>(clock::now() - t_kkt).count();
    rep.history.push_back({k + 1, eta, primal_objective(inst, x, Ax)});
    if (eta < best_eta) {
      best_eta = eta;
      best_x = x;
      best_u = u;
      best_Ax = Ax;
    }
  }
  // On the cap the best iterate seen is returned, not the last one.
  if (best_eta < eta) {
    x = std::move(best_x);
    u = std::move(best_u);
    Ax = std::move(best_Ax);
    eta = best_eta;
  }
  rep.x = std::move(x);
  rep.u = std::move(u);
  rep.eta_kkt = eta;
  rep.converged = eta <= params.tol;
  rep.objective = primal_objective(inst, rep.x, Ax);
  rep.nnz_per_group = nnz_per_group(rep.x, inst.partition);
  if (!rep.converged && rep.message.empty()) rep.message = "outer iteration cap reached";
  if (inner_failures > 0) {
    rep.message += (rep.message.empty() ? "" : "; ") + std::to_string(inner_failures) +
                   " inner solve(s) hit the iteration cap";
  }
  rep.times.total = elapsed();
  return rep;
}

/**
 * Solves for each lambda in turn. With warm_start the previous (x, u) seeds
 * the next solve; otherwise every solve starts from zero. A failing lambda is
 * recorded in its report and the sweep continues.
 */
inline std::vector<SolveReport> solve_path(const ProblemInstance& inst,
                                           const std::vector<double>& lambdas,
                                           const PpaParams& params = {},
                                           bool warm_start = true) {
  for (double l : lambdas) {
    detail::require(l > 0.0 && std::isfinite(l), "solve_path: lambdas must be positive");
  }
  std::vector<SolveReport> out;
  out.reserve(lambdas.size());
  ProblemInstance cur = inst;
  std::optional<Vector> x;
  std::optional<Vector> u;
  for (double l : lambdas) {
    cur.lambda = l;
    try {
      SolveReport r = warm_start ? ppdna_solve(cur, params, x, u) : ppdna_solve(cur, params);
      if (warm_start) {
        x = r.x;
        u = r.u;
      }
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      SolveReport r;
      r.solver = "ppdna";
      r.message = std::string("failed: ") + e.what();
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// n points from hi down to lo, equally spaced in log scale.
inline std::vector<double> log_grid(double hi, double lo, Index n) {
  detail::require(hi > 0.0 && lo > 0.0 && n >= 1, "log_grid: positive bounds and n >= 1");
  std::vector<double> g(static_cast<std::size_t>(n));
  if (n == 1) {
    g[0] = hi;
    return g;
  }
  const double a = std::log(hi);
  const double b = std::log(lo);
  for (Index i = 0; i < n; ++i) {
    g[static_cast<std::size_t>(i)] =
        std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  g.front() = hi;
  g.back() = lo;
  return g;
}

}  // namespace exlasso
