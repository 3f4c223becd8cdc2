#pragma once

#include "exlasso/common.hpp"

namespace exlasso {

/// Largest eigenvalue of A A^T (= that of A^T A) by power iteration on the
/// smaller Gram side. Stops after max_iters or when the estimate changes by
/// less than rel_tol relatively.
inline double lambda_max_gram(const Matrix& A, int max_iters = 50,
                              double rel_tol = 1e-8) {
  detail::require(A.size() > 0, "lambda_max_gram: empty matrix");
  const bool rows_side = A.rows() <= A.cols();
  const Index dim = rows_side ? A.rows() : A.cols();
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector next = rows_side ? Vector(A * (A.transpose() * v))
                            : Vector(A.transpose() * (A * v));
    const double nrm = next.norm();
    if (nrm == 0.0) return 0.0;
    const double prev = est;
    est = v.dot(next);
    v = next / nrm;
    if (it > 0 && std::abs(est - prev) <= rel_tol * std::abs(est)) break;
  }
  return est;
}

}  // namespace exlasso
