#pragma once

#include "exlasso/common.hpp"
#include "exlasso/model.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace exlasso {

/**
 * Certificate of one group prox evaluation.
 *
 * The prox output is exactly signs o (|a| - 2 rho alpha_bar w)^+, and
 * active_mask marks the coordinates where that output is nonzero. The
 * Jacobian construction consumes the mask and signs directly.
 */
struct GroupProxCertificate {
  double alpha_bar = 0.0;
  Vector active_mask;  // 0/1
  Vector signs;        // -1/0/+1 of the input

  Index active_count() const {
    return static_cast<Index>((active_mask.array() != 0.0).count());
  }
};

struct NonnegProx {
  Vector x;
  double alpha_bar = 0.0;
};

struct GroupProx {
  Vector x;
  GroupProxCertificate cert;
};

namespace detail {

inline void check_prox_args(const Eigen::Ref<const Vector>& a,
                            const Eigen::Ref<const Vector>& w, double rho) {
  require(rho > 0.0 && std::isfinite(rho), "prox: rho must be positive");
  require_size(w.size(), a.size(), "prox weights");
  for (Index i = 0; i < w.size(); ++i) {
    require(w[i] > 0.0, "prox: weights must be strictly positive");
  }
}

/// max_i s_i / (1 + 2 rho L_i) over prefixes of d sorted by d_i / w_i,
/// non-increasing, ties broken by position.
inline double sorted_prefix_alpha(const Eigen::Ref<const Vector>& d,
                                  const Eigen::Ref<const Vector>& w,
                                  double rho, std::vector<Index>& order) {
  const Index t = d.size();
  order.resize(static_cast<std::size_t>(t));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) {
    return d[i] / w[i] > d[j] / w[j];
  });
  double s = 0.0;
  double L = 0.0;
  double best = 0.0;
  for (Index k : order) {
    s += w[k] * d[k];
    L += w[k] * w[k];
    best = std::max(best, s / (1.0 + 2.0 * rho * L));
  }
  return best;
}

}  // namespace detail

/**
 * Prox of rho * ||w o .||_1^2 restricted to the nonnegative orthant input:
 * x(d) = (d - 2 rho alpha_bar w)^+ with alpha_bar the largest prefix ratio
 * s_i / (1 + 2 rho L_i) after sorting d_i / w_i in non-increasing order.
 */
inline NonnegProx prox_sq_l1_nonneg(const Eigen::Ref<const Vector>& d,
                                    const Eigen::Ref<const Vector>& w,
                                    double rho) {
  detail::check_prox_args(d, w, rho);
  for (Index i = 0; i < d.size(); ++i) {
    detail::require(d[i] >= 0.0, "prox_sq_l1_nonneg: input must be nonnegative");
  }
  std::vector<Index> order;
  NonnegProx out;
  out.alpha_bar = detail::sorted_prefix_alpha(d, w, rho, order);
  out.x.resize(d.size());
  const double shift = 2.0 * rho * out.alpha_bar;
  for (Index i = 0; i < d.size(); ++i) {
    out.x[i] = std::max(d[i] - shift * w[i], 0.0);
  }
  return out;
}

/// Output reconstructed from a certificate: sign(a) o (|a| - 2 rho alpha_bar w)^+.
inline Vector reconstruct_from_certificate(const GroupProxCertificate& cert,
                                           const Eigen::Ref<const Vector>& a,
                                           const Eigen::Ref<const Vector>& w,
                                           double rho) {
  Vector x(a.size());
  const double shift = 2.0 * rho * cert.alpha_bar;
  for (Index i = 0; i < a.size(); ++i) {
    x[i] = cert.signs[i] * std::max(std::abs(a[i]) - shift * w[i], 0.0);
  }
  return x;
}

/// Prox of rho * ||w o .||_1^2 at an arbitrary point, with its certificate.
inline GroupProx prox_sq_l1(const Eigen::Ref<const Vector>& a,
                            const Eigen::Ref<const Vector>& w, double rho) {
  detail::check_prox_args(a, w, rho);
  const Index t = a.size();
  GroupProx out;
  out.cert.signs.resize(t);
  Vector d(t);
  for (Index i = 0; i < t; ++i) {
    out.cert.signs[i] = detail::sign(a[i]);
    d[i] = std::abs(a[i]);
  }
  std::vector<Index> order;
  out.cert.alpha_bar = detail::sorted_prefix_alpha(d, w, rho, order);
  out.x = reconstruct_from_certificate(out.cert, a, w, rho);
  out.cert.active_mask.resize(t);
  for (Index i = 0; i < t; ++i) out.cert.active_mask[i] = out.x[i] != 0.0 ? 1.0 : 0.0;
  return out;
}

/// Prox of nu * Delta(.) plus per-group certificates (groups in partition
/// order, coordinates within a group in the order listed by the partition).
struct ExclusiveProx {
  Vector y;
  std::vector<GroupProxCertificate> certs;
};

inline ExclusiveProx prox_exclusive(const Eigen::Ref<const Vector>& x, double nu,
                                    const Eigen::Ref<const Vector>& w,
                                    const GroupPartition& partition) {
  detail::require(nu > 0.0, "prox_exclusive: nu must be positive");
  detail::require_size(x.size(), partition.n(), "prox_exclusive x");
  detail::require_size(w.size(), partition.n(), "prox_exclusive w");
  const Vector xp = partition.gather(x);
  const Vector wp = partition.gather(w);
  Vector yp(xp.size());
  ExclusiveProx out;
  out.certs.reserve(static_cast<std::size_t>(partition.num_groups()));
  for (Index j = 0; j < partition.num_groups(); ++j) {
    const Index begin = partition.group_begin(j);
    const Index size = partition.group_size(j);
    GroupProx gp = prox_sq_l1(xp.segment(begin, size), wp.segment(begin, size), nu);
    yp.segment(begin, size) = gp.x;
    out.certs.push_back(std::move(gp.cert));
  }
  out.y = partition.scatter(yp);
  return out;
}

/// E_{nu Delta}(x) given its already computed prox.
inline double moreau_env_exclusive(const Eigen::Ref<const Vector>& x,
                                   const ExclusiveProx& prox, double nu,
                                   const Eigen::Ref<const Vector>& w,
                                   const GroupPartition& partition) {
  return 0.5 * (prox.y - x).squaredNorm() +
         nu * regularizer_value(prox.y, w, partition);
}

inline double moreau_env_exclusive(const Eigen::Ref<const Vector>& x, double nu,
                                   const Eigen::Ref<const Vector>& w,
                                   const GroupPartition& partition) {
  return moreau_env_exclusive(x, prox_exclusive(x, nu, w, partition), nu, w,
                              partition);
}

}  // namespace exlasso
