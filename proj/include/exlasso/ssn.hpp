#pragma once

#include "exlasso/common.hpp"
#include "exlasso/jacobian.hpp"
#include "exlasso/loss.hpp"
#include "exlasso/model.hpp"
#include "exlasso/prox.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace exlasso {

/**
 * Data of one proximal-point subproblem
 *   min_x h(Ax) - <c,x> + lambda Delta(x) + |x - x_k|^2/(2 sigma)
 *                                           + tau |Ax - Ax_k|^2/(2 sigma),
 * whose dual psi_k(u) is maximized by the semismooth Newton method.
 */
struct SubproblemContext {
  const ProblemInstance& inst;
  Vector x_k;
  Vector Ax_k;
  double sigma;
  double tau;

  SubproblemContext(const ProblemInstance& instance, Vector anchor, double sigma_k,
                    double tau_)
      : inst(instance), x_k(std::move(anchor)), sigma(sigma_k), tau(tau_) {
    detail::require(sigma > 0.0 && tau > 0.0, "subproblem: sigma and tau must be positive");
    detail::require_size(x_k.size(), inst.n(), "subproblem anchor");
    Ax_k = inst.A * x_k;
  }

  SubproblemContext(const ProblemInstance& instance, Vector anchor, Vector A_anchor,
                    double sigma_k, double tau_)
      : inst(instance), x_k(std::move(anchor)), Ax_k(std::move(A_anchor)),
        sigma(sigma_k), tau(tau_) {
    detail::require(sigma > 0.0 && tau > 0.0, "subproblem: sigma and tau must be positive");
    detail::require_size(x_k.size(), inst.n(), "subproblem anchor");
    detail::require_size(Ax_k.size(), inst.m(), "subproblem A*anchor");
  }

  /// Prox parameter of the loss block, sigma / tau.
  double loss_nu() const { return sigma / tau; }
  /// Prox parameter of the regularizer block, sigma * lambda.
  double reg_nu() const { return sigma * inst.lambda; }
};

enum class NewtonStrategy { Auto, DirectCholesky, WoodburyInverse, ConjugateGradient };

inline std::string_view to_string(NewtonStrategy s) {
  switch (s) {
    case NewtonStrategy::DirectCholesky: return "cholesky";
    case NewtonStrategy::WoodburyInverse: return "woodbury";
    case NewtonStrategy::ConjugateGradient: return "cg";
    default: return "auto";
  }
}

inline std::optional<NewtonStrategy> parse_strategy(std::string_view s) {
  if (s == "auto") return NewtonStrategy::Auto;
  if (s == "cholesky" || s == "direct") return NewtonStrategy::DirectCholesky;
  if (s == "woodbury" || s == "smw") return NewtonStrategy::WoodburyInverse;
  if (s == "cg") return NewtonStrategy::ConjugateGradient;
  return std::nullopt;
}

struct StrategyThresholds {
  double woodbury_active_ratio = 0.25;  // |K| <= ratio * m
  Index woodbury_max_active = 2000;
  Index cholesky_max_m = 4000;
};

inline NewtonStrategy select_strategy(Index m, Index active,
                                      const StrategyThresholds& th = {}) {
  if (static_cast<double>(active) <= th.woodbury_active_ratio * static_cast<double>(m) &&
      active <= th.woodbury_max_active) {
    return NewtonStrategy::WoodburyInverse;
  }
  if (m <= th.cholesky_max_m) return NewtonStrategy::DirectCholesky;
  return NewtonStrategy::ConjugateGradient;
}

/// Everything computed when psi_k is evaluated at u. The gradient part is
/// filled in only for accepted iterates.
struct DualEvaluation {
  Vector u;
  Vector Atu;
  Vector z;        // Ax_k + (sigma/tau) u
  LossProx yprox;  // Prox_{sigma h / tau}(z)
  Vector x_hat;    // x_k + sigma c - sigma A^T u
  ExclusiveProx xprox;
  double value = 0.0;
  double scale = 0.0;  // sum of magnitudes of the terms in value

  bool has_gradient = false;
  Vector Ax;    // A x(u)
  Vector grad;  // A x(u) - y(u)
};

namespace detail {

/// A * x for sparse x, touching only the columns where x is nonzero.
inline Vector sparse_matvec(const Matrix& A, const Eigen::Ref<const Vector>& x) {
  Vector out = Vector::Zero(A.rows());
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) out.noalias() += x[i] * A.col(i);
  }
  return out;
}

/**
 * psi_k in Lagrangian form
 *   h(y) + tau|y - Ax_k|^2/(2 sigma) - <u,y>
 *     + lambda Delta(x) + |x - x_k|^2/(2 sigma) - <c,x> + <A^T u, x>,
 * with x = x(u), y = y(u). This equals the two-envelope expression of the dual
 * exactly, but does not subtract the O(sigma/tau) quadratic terms from each
 * other.
 */
inline DualEvaluation evaluate_dual(const SubproblemContext& ctx, Vector u, Vector Atu) {
  const auto& inst = ctx.inst;
  DualEvaluation ev;
  ev.u = std::move(u);
  ev.Atu = std::move(Atu);
  const double nu = ctx.loss_nu();
  ev.z = ctx.Ax_k + nu * ev.u;
  ev.yprox = prox_loss(inst.loss, ev.z, nu, inst.b);
  ev.x_hat = ctx.x_k + ctx.sigma * inst.c - ctx.sigma * ev.Atu;
  ev.xprox = prox_exclusive(ev.x_hat, ctx.reg_nu(), inst.w, inst.partition);
  const Vector& y = ev.yprox.y;
  const Vector& x = ev.xprox.y;
  const double terms[] = {
      loss_value(inst.loss, y, inst.b),
      (y - ctx.Ax_k).squaredNorm() / (2.0 * nu),
      -ev.u.dot(y),
      inst.lambda * regularizer_value(x, inst.w, inst.partition),
      (x - ctx.x_k).squaredNorm() / (2.0 * ctx.sigma),
      -inst.c.dot(x),
      ev.Atu.dot(x),
  };
  ev.value = 0.0;
  ev.scale = 0.0;
  for (double t : terms) {
    ev.value += t;
    ev.scale += std::abs(t);
  }
  return ev;
}

inline void complete_gradient(const SubproblemContext& ctx, DualEvaluation& ev) {
  ev.Ax = sparse_matvec(ctx.inst.A, ev.xprox.y);
  ev.grad = ev.Ax - ev.yprox.y;
  ev.has_gradient = true;
}

}  // namespace detail

inline DualEvaluation evaluate_dual(const SubproblemContext& ctx,
                                    const Eigen::Ref<const Vector>& u) {
  detail::require_size(u.size(), ctx.inst.m(), "dual u");
  DualEvaluation ev = detail::evaluate_dual(ctx, u, ctx.inst.A.transpose() * u);
  detail::complete_gradient(ctx, ev);
  return ev;
}

/// psi_k(u).
inline double dual_value(const SubproblemContext& ctx, const Eigen::Ref<const Vector>& u) {
  detail::require_size(u.size(), ctx.inst.m(), "dual u");
  return detail::evaluate_dual(ctx, u, ctx.inst.A.transpose() * u).value;
}

struct DualGradient {
  Vector g;
  Vector x_of_u;
  Vector x_hat;
  std::vector<GroupProxCertificate> certs;
};

/// grad psi_k(u) = -Prox_{sigma h/tau}(Ax_k + sigma u/tau) + A Prox_{sigma lambda p}(x_hat).
inline DualGradient dual_gradient(const SubproblemContext& ctx,
                                  const Eigen::Ref<const Vector>& u) {
  DualEvaluation ev = evaluate_dual(ctx, u);
  return DualGradient{std::move(ev.grad), std::move(ev.xprox.y), std::move(ev.x_hat),
                      std::move(ev.xprox.certs)};
}

/**
 * Sub-problem objective f_k(x) minus psi_k(u), evaluated as
 *   h(Ax) - h(y) + tau <r, Ax + y - 2Ax_k>/(2 sigma) - <u, r>,   r = Ax - y,
 * which is what remains of f_k(x(u)) - psi_k(u) after the common terms cancel.
 */
inline double duality_gap(const SubproblemContext& ctx, const DualEvaluation& ev) {
  detail::require(ev.has_gradient, "duality_gap: evaluation lacks A x(u)");
  const Vector& y = ev.yprox.y;
  return loss_difference(ctx.inst.loss, ev.Ax, y, ctx.inst.b) +
         ev.grad.dot(ev.Ax + y - 2.0 * ctx.Ax_k) / (2.0 * ctx.loss_nu()) -
         ev.u.dot(ev.grad);
}

/// f_k(x) with Ax supplied.
inline double subproblem_objective(const SubproblemContext& ctx,
                                   const Eigen::Ref<const Vector>& x,
                                   const Eigen::Ref<const Vector>& Ax) {
  const auto& inst = ctx.inst;
  return loss_value(inst.loss, Ax, inst.b) - inst.c.dot(x) +
         inst.lambda * regularizer_value(x, inst.w, inst.partition) +
         (x - ctx.x_k).squaredNorm() / (2.0 * ctx.sigma) +
         (Ax - ctx.Ax_k).squaredNorm() / (2.0 * ctx.loss_nu());
}

struct NewtonSolveOptions {
  NewtonStrategy strategy = NewtonStrategy::Auto;
  StrategyThresholds thresholds;
  /// Absolute residual target for CG; when unset CG runs to relative 1e-10.
  std::optional<double> cg_abs_tol;
  double cg_rel_tol = 1e-10;
};

struct NewtonSolution {
  Vector d;
  NewtonStrategy used = NewtonStrategy::Auto;
  Index cg_iters = 0;
  Index active = 0;
  /// Matrix columns read while forming or applying the reduced operator.
  Index columns_touched = 0;
  double residual_norm = 0.0;
};

namespace detail {

/// Active columns of A grouped as in the Jacobian blocks, with v_j = (w_tilde_j)_{K_j}.
struct ActiveStructure {
  std::vector<Index> columns;      // original column indices, block by block
  std::vector<Index> block_start;  // size l+1 into `columns`
  Vector v;                        // concatenated v_j
  std::vector<double> coef;
  std::vector<double> rho;
};

inline ActiveStructure active_structure(const JacobianElement& J) {
  ActiveStructure s;
  s.block_start.reserve(J.blocks.size() + 1);
  s.block_start.push_back(0);
  std::vector<double> v;
  for (std::size_t j = 0; j < J.blocks.size(); ++j) {
    const auto& blk = J.blocks[j];
    const Index begin = J.offsets[j];
    for (Index k = 0; k < blk.xi.size(); ++k) {
      if (blk.xi[k] != 0.0) {
        s.columns.push_back(J.perm[static_cast<std::size_t>(begin + k)]);
        v.push_back(blk.w_tilde[k]);
      }
    }
    s.block_start.push_back(static_cast<Index>(s.columns.size()));
    s.coef.push_back(blk.coef);
    s.rho.push_back(blk.rho);
  }
  s.v = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  return s;
}

/// t <- Diag(M_hat_1..M_hat_l) t with M_hat_j = I - c_j v_j v_j^T.
inline void apply_reduced_blocks(const ActiveStructure& s, Vector& t) {
  for (std::size_t j = 0; j + 1 < s.block_start.size(); ++j) {
    const Index b = s.block_start[j];
    const Index len = s.block_start[j + 1] - b;
    if (len == 0) continue;
    const double proj = s.coef[j] * s.v.segment(b, len).dot(t.segment(b, len));
    t.segment(b, len) -= proj * s.v.segment(b, len);
  }
}

}  // namespace detail

/**
 * Solves ((sigma/tau) Diag(H) + sigma A J A^T) d = rhs using only the columns
 * of A in the active set K of J.
 *
 * With L = Diag(H)^{1/2} and B = sqrt(tau) L^{-1} A_K the system becomes
 * (I + B M_hat B^T) L d = (tau/sigma) L^{-1} rhs, which the direct strategies
 * factor either as an m x m Cholesky or through the |K| x |K| Woodbury
 * inverse. CG works on the unscaled system so that its residual is the one
 * the Newton forcing term refers to.
 */
inline NewtonSolution assemble_and_solve(const SubproblemContext& ctx,
                                         const Eigen::Ref<const Vector>& H_diag,
                                         const JacobianElement& J,
                                         const Eigen::Ref<const Vector>& rhs,
                                         const NewtonSolveOptions& opts = {}) {
  const Matrix& A = ctx.inst.A;
  const Index m = A.rows();
  detail::require_size(H_diag.size(), m, "newton H");
  detail::require_size(rhs.size(), m, "newton rhs");
  detail::require_size(J.n(), A.cols(), "newton jacobian");
  for (Index i = 0; i < m; ++i) {
    if (!(H_diag[i] > 0.0)) throw InvalidArgument("newton: H must be positive");
  }
  const double sigma = ctx.sigma;
  const double tau = ctx.tau;

  const detail::ActiveStructure act = detail::active_structure(J);
  const Index nk = static_cast<Index>(act.columns.size());

  NewtonSolution sol;
  sol.active = nk;
  sol.used = opts.strategy == NewtonStrategy::Auto
                 ? select_strategy(m, nk, opts.thresholds)
                 : opts.strategy;

  if (nk == 0) {
    sol.d = (tau / sigma) * rhs.cwiseQuotient(H_diag);
    return sol;
  }

  const Vector sqrtH = H_diag.cwiseSqrt();

  if (sol.used == NewtonStrategy::ConjugateGradient) {
    Matrix AK(m, nk);
    for (Index k = 0; k < nk; ++k) AK.col(k) = A.col(act.columns[static_cast<std::size_t>(k)]);
    const Vector diag = (sigma / tau) * H_diag;
    auto op = [&](const Vector& p) {
      Vector t = AK.transpose() * p;
      detail::apply_reduced_blocks(act, t);
      sol.columns_touched += 2 * nk;
      return Vector(diag.cwiseProduct(p) + sigma * (AK * t));
    };
    const double rhs_norm = rhs.norm();
    const double tol = opts.cg_abs_tol ? *opts.cg_abs_tol : opts.cg_rel_tol * rhs_norm;
    Vector d = Vector::Zero(m);
    Vector r = rhs;
    double rr = r.squaredNorm();
    Vector p = r;
    const Index max_iters = 10 * m;
    while (std::sqrt(rr) > tol) {
      if (sol.cg_iters >= max_iters) {
        throw NumericalError("newton: CG stagnated after " + std::to_string(max_iters) +
                             " iterations");
      }
      const Vector q = op(p);
      const double pq = p.dot(q);
      if (!(pq > 0.0)) throw NumericalError("newton: CG lost positive definiteness");
      const double alpha = rr / pq;
      d.noalias() += alpha * p;
      r.noalias() -= alpha * q;
      const double rr_new = r.squaredNorm();
      p = r + (rr_new / rr) * p;
      rr = rr_new;
      ++sol.cg_iters;
    }
    sol.residual_norm = std::sqrt(rr);
    sol.d = std::move(d);
    return sol;
  }

  // B = sqrt(tau) L^{-1} A_K
  Matrix B(m, nk);
  const Vector row_scale = std::sqrt(tau) * sqrtH.cwiseInverse();
  for (Index k = 0; k < nk; ++k) {
    B.col(k) = row_scale.cwiseProduct(A.col(act.columns[static_cast<std::size_t>(k)]));
  }
  sol.columns_touched += nk;
  const Vector rhs_hat = (tau / sigma) * rhs.cwiseQuotient(sqrtH);
  Vector d_hat;

  if (sol.used == NewtonStrategy::DirectCholesky) {
    // I + B B^T - sum_j c_j (B_j v_j)(B_j v_j)^T
    Matrix G = Matrix::Identity(m, m);
    G.selfadjointView<Eigen::Lower>().rankUpdate(B);
    for (std::size_t j = 0; j + 1 < act.block_start.size(); ++j) {
      const Index b = act.block_start[j];
      const Index len = act.block_start[j + 1] - b;
      if (len == 0) continue;
      const Vector Bv = B.middleCols(b, len) * act.v.segment(b, len);
      G.selfadjointView<Eigen::Lower>().rankUpdate(Bv, -act.coef[j]);
    }
    Eigen::LLT<Matrix, Eigen::Lower> llt(G);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("newton: Cholesky factorization failed");
    }
    d_hat = llt.solve(rhs_hat);
  } else {
    // (I + B M B^T)^{-1} = I - B (M^{-1} + B^T B)^{-1} B^T, where
    // M_j^{-1} = I + (1/c_j - v_j^T v_j)^{-1} v_j v_j^T and
    // 1/c_j - v_j^T v_j = 1/(2 rho_j).
    Matrix S = Matrix::Identity(nk, nk);
    S.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose());
    for (std::size_t j = 0; j + 1 < act.block_start.size(); ++j) {
      const Index b = act.block_start[j];
      const Index len = act.block_start[j + 1] - b;
      if (len == 0) continue;
      const Vector vj = act.v.segment(b, len);
      S.block(b, b, len, len).selfadjointView<Eigen::Lower>().rankUpdate(vj, 2.0 * act.rho[j]);
    }
    Eigen::LLT<Matrix, Eigen::Lower> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("newton: Woodbury inner factorization failed");
    }
    const Vector t = llt.solve(B.transpose() * rhs_hat);
    d_hat = rhs_hat - B * t;
  }
  sol.d = d_hat.cwiseQuotient(sqrtH);
  return sol;
}

struct SsnParams {
  double mu = 1e-4;          // Armijo constant, in (0, 1/2)
  double tau_bar = 0.5;      // forcing exponent, in (0, 1]
  double gamma_bar = 0.005;  // forcing cap, in (0, 1)
  double delta = 0.5;        // backtracking factor, in (0, 1)
  Index max_iters = 100;
  int max_halvings = 50;
  NewtonSolveOptions newton;
};

struct SsnIterate {
  Index iteration = 0;
  const DualEvaluation& eval;
  double grad_norm = 0.0;
};

struct SsnStats {
  Index iterations = 0;
  Index cg_iters = 0;
  Index matvecs = 0;
  Index columns_touched = 0;
  std::vector<double> grad_norms;  // at every visited iterate, including the start
  std::vector<double> step_sizes;
  std::vector<Index> active_sizes;
  std::vector<NewtonStrategy> strategies;
  double prox_seconds = 0.0;
  double solve_seconds = 0.0;
};

struct SsnResult {
  DualEvaluation eval;  // final iterate, with gradient
  SsnStats stats;
  bool converged = false;  // the stopping predicate accepted the final iterate
};

/// Caller-supplied stopping rule evaluated at every iterate.
using SsnStopPredicate = std::function<bool(const SsnIterate&)>;

inline SsnStopPredicate gradient_norm_below(double tol) {
  return [tol](const SsnIterate& it) { return it.grad_norm <= tol; };
}

/**
 * Semismooth Newton ascent on psi_k from u0.
 *
 * Each iteration rebuilds the Jacobian element from the prox certificates at
 * the current iterate, solves the Newton system to the forcing tolerance
 * min(gamma_bar, |grad|^{1+tau_bar}), and backtracks by delta until the
 * Armijo condition holds. Armijo comparisons allow a slack of a few ulps of
 * the magnitude of psi's terms, below which increments are not resolvable.
 */
inline SsnResult ssn_solve(const SubproblemContext& ctx, const Eigen::Ref<const Vector>& u0,
                           const SsnParams& params, const SsnStopPredicate& stop) {
  using clock = std::chrono::steady_clock;
  const auto& inst = ctx.inst;
  detail::require_size(u0.size(), inst.m(), "ssn u0");
  detail::require(params.mu > 0.0 && params.mu < 0.5, "ssn: mu must lie in (0, 1/2)");
  detail::require(params.delta > 0.0 && params.delta < 1.0, "ssn: delta must lie in (0, 1)");

  SsnResult res;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  auto t0 = clock::now();
  DualEvaluation cur = detail::evaluate_dual(ctx, u0, inst.A.transpose() * u0);
  detail::complete_gradient(ctx, cur);
  res.stats.prox_seconds += seconds_since(t0);
  res.stats.matvecs += 2;

  for (Index j = 0;; ++j) {
    const double gnorm = cur.grad.norm();
    res.stats.grad_norms.push_back(gnorm);
    if (stop(SsnIterate{j, cur, gnorm})) {
      res.converged = true;
      break;
    }
    if (gnorm == 0.0 || j >= params.max_iters) break;

    // Newton direction
    t0 = clock::now();
    const JacobianElement J = jac_exclusive(cur.x_hat, ctx.reg_nu(), inst.w,
                                            inst.partition, cur.xprox.certs);
    NewtonSolveOptions nopts = params.newton;
    nopts.cg_abs_tol = std::min(params.gamma_bar, std::pow(gnorm, 1.0 + params.tau_bar));
    const NewtonSolution ns = assemble_and_solve(ctx, cur.yprox.H_diag, J, cur.grad, nopts);
    res.stats.solve_seconds += seconds_since(t0);
    res.stats.cg_iters += ns.cg_iters;
    res.stats.columns_touched += ns.columns_touched;
    res.stats.active_sizes.push_back(ns.active);
    res.stats.strategies.push_back(ns.used);

    const Vector& d = ns.d;
    const double slope = cur.grad.dot(d);
    if (!(slope > 0.0)) {
      throw NumericalError("ssn: Newton direction is not an ascent direction");
    }

    // Armijo backtracking
    t0 = clock::now();
    const Vector Atd = inst.A.transpose() * d;
    res.stats.matvecs += 1;
    double alpha = 1.0;
    std::optional<DualEvaluation> trial;
    for (int h = 0; h <= params.max_halvings; ++h) {
      DualEvaluation ev = detail::evaluate_dual(ctx, cur.u + alpha * d, cur.Atu + alpha * Atd);
      const double slack = 16.0 * std::numeric_limits<double>::epsilon() *
                           std::max(cur.scale, ev.scale);
      if (ev.value >= cur.value + params.mu * alpha * slope - slack) {
        trial = std::move(ev);
        break;
      }
      alpha *= params.delta;
    }
    if (!trial) {
      throw NumericalError("ssn: line search failed after " +
                           std::to_string(params.max_halvings) + " reductions");
    }
    detail::complete_gradient(ctx, *trial);
    res.stats.prox_seconds += seconds_since(t0);
    res.stats.step_sizes.push_back(alpha);
    cur = std::move(*trial);
    res.stats.iterations = j + 1;
  }
  res.eval = std::move(cur);
  return res;
}

}  // namespace exlasso
