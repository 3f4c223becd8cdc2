#pragma once

#include "exlasso/common.hpp"
#include "exlasso/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>

namespace exlasso {

/**
 * Reproducible random source. The engine is std::mt19937_64, whose output
 * sequence is fixed by the C++ standard; the conversions below are done by
 * hand because the standard distributions are implementation-defined.
 *
 *   uniform01: top 53 bits of one draw, times 2^-53, in [0, 1)
 *   normal:    Box-Muller, u1 = 1 - uniform01 in (0, 1], one draw per pair
 *              is cached
 *   index(k):  rejection sampling on the 64-bit draw, unbiased
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(th);
    has_cached_ = true;
    return r * std::cos(th);
  }

  /// Uniform integer in [0, k).
  std::uint64_t index(std::uint64_t k) {
    detail::require(k > 0, "Rng::index: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % k;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % k;
  }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

enum class WeightKind { Ones, Uniform01 };

struct SyntheticSpec {
  Index m = 200;
  Index l = 20;
  Index p = 50;
  double rho_in = 0.9;
  double rho_out = 0.3;
  Index nnz_per_group = 10;
  double signal_lo = 0.0;
  double signal_hi = 10.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::LeastSquares;
  WeightKind weights = WeightKind::Ones;
  double lambda = 1.0;

  Index n() const { return l * p; }

  void validate() const {
    detail::require(m > 0 && l > 0 && p > 0, "synthetic: m, l, p must be positive");
    detail::require(p <= std::numeric_limits<Index>::max() / l,
                    "synthetic: l * p overflows the index type");
    detail::require(nnz_per_group >= 0 && nnz_per_group <= p,
                    "synthetic: nnz_per_group must lie in [0, p]");
    detail::require(rho_in >= 0.0 && rho_in < 1.0 && rho_out >= 0.0 && rho_out < 1.0,
                    "synthetic: correlation bases must lie in [0, 1)");
    detail::require(signal_lo <= signal_hi, "synthetic: empty signal range");
    detail::require(noise_std >= 0.0, "synthetic: noise_std must be nonnegative");
    detail::require(lambda > 0.0, "synthetic: lambda must be positive");
  }
};

struct SyntheticInstance {
  ProblemInstance instance;
  Vector x_star;
  /// Sigma needed eigenvalue clipping before it could be factored.
  bool sigma_clipped = false;
};

/// Sigma_ij = rho_in^|i-j| within a group, rho_out^|i-j| across groups, with
/// contiguous groups of size p and global index distance.
inline Matrix synthetic_covariance(const SyntheticSpec& spec) {
  const Index n = spec.n();
  Matrix S(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double base = (i / spec.p == j / spec.p) ? spec.rho_in : spec.rho_out;
      S(i, j) = std::pow(base, static_cast<double>(std::abs(i - j)));
    }
  }
  return S;
}

/// Returns L with L L^T = Sigma. Falls back to a symmetric eigenvalue
/// factorization with eigenvalues clipped at 1e-10 when Cholesky fails.
inline Matrix covariance_factor(const Matrix& S, bool* clipped = nullptr) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() == Eigen::Success) {
    if (clipped) *clipped = false;
    return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  if (es.info() != Eigen::Success) {
    throw NumericalError("synthetic: eigen-decomposition of the covariance failed");
  }
  const Vector ev = es.eigenvalues().cwiseMax(1e-10);
  std::cerr << "warning: covariance is not positive definite (min eigenvalue "
            << es.eigenvalues().minCoeff() << "); clipping at 1e-10\n";
  if (clipped) *clipped = true;
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

/**
 * Draws A with i.i.d. N(0, Sigma) rows, x_star with nnz_per_group uniform
 * nonzeros per group at uniformly random positions, and
 *   b = A x_star + eps                 (least squares)
 *   b_i = +1 if (A x_star + eps)_i >= 0, else -1    (logistic).
 * Draw order: A row by row, then x_star group by group, then eps, then weights.
 */
inline SyntheticInstance gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Index m = spec.m;
  const Index n = spec.n();
  Rng rng(spec.seed);
  SyntheticInstance out;

  const Matrix L = covariance_factor(synthetic_covariance(spec), &out.sigma_clipped);
  Matrix Z(m, n);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) Z(i, j) = rng.normal();
  }
  Matrix A = Z * L.transpose();

  out.x_star = Vector::Zero(n);
  std::vector<Index> slots(static_cast<std::size_t>(spec.p));
  for (Index g = 0; g < spec.l; ++g) {
    for (Index k = 0; k < spec.p; ++k) slots[static_cast<std::size_t>(k)] = k;
    for (Index k = 0; k < spec.nnz_per_group; ++k) {
      const auto pick = k + static_cast<Index>(rng.index(static_cast<std::uint64_t>(spec.p - k)));
      std::swap(slots[static_cast<std::size_t>(k)], slots[static_cast<std::size_t>(pick)]);
      double v = rng.uniform(spec.signal_lo, spec.signal_hi);
      if (v == 0.0) v = spec.signal_hi;  // keep exactly nnz_per_group nonzeros
      out.x_star[g * spec.p + slots[static_cast<std::size_t>(k)]] = v;
    }
  }

  Vector b = A * out.x_star;
  for (Index i = 0; i < m; ++i) b[i] += spec.noise_std * rng.normal();
  if (spec.loss == LossKind::Logistic) {
    for (Index i = 0; i < m; ++i) b[i] = b[i] >= 0.0 ? 1.0 : -1.0;
  }

  Vector w(n);
  if (spec.weights == WeightKind::Ones) {
    w.setOnes();
  } else {
    for (Index i = 0; i < n; ++i) w[i] = 1.0 - rng.uniform01();
  }

  ProblemInstance& inst = out.instance;
  inst.A = std::move(A);
  inst.b = std::move(b);
  inst.c = Vector::Zero(n);
  inst.lambda = spec.lambda;
  inst.w = std::move(w);
  inst.partition = GroupPartition::uniform(spec.l, spec.p);
  inst.loss = spec.loss;
  inst.validate();
  return out;
}

/// lambda = lambda_b * ||A^T b||_inf.
inline double lambda_from_fraction(const Matrix& A, const Eigen::Ref<const Vector>& b,
                                   double lambda_b) {
  detail::require(lambda_b > 0.0 && std::isfinite(lambda_b),
                  "lambda_from_fraction: lambda_b must be positive");
  detail::require_size(b.size(), A.rows(), "lambda_from_fraction b");
  const double s = (A.transpose() * b).cwiseAbs().maxCoeff();
  if (!(s > 0.0)) throw InvalidArgument("lambda_from_fraction: A^T b is zero");
  return lambda_b * s;
}

}  // namespace exlasso
