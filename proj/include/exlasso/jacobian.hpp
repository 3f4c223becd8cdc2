#pragma once

#include "exlasso/common.hpp"
#include "exlasso/model.hpp"
#include "exlasso/prox.hpp"

#include <vector>

namespace exlasso {

/// M = Diag(xi) - coef * w_tilde w_tilde^T for one group.
struct JacobianBlock {
  Vector xi;
  Vector w_tilde;
  double coef = 0.0;
  double rho = 0.0;
  /// All coordinates survive: the block is Q^{-1} = I - coef * w w^T up to signs.
  bool full_support = false;
};

/**
 * One element of the generalized Jacobian of Prox_{nu Delta}, stored factored
 * as P^T Diag(M_1, ..., M_l) P. Nothing n-by-n is ever formed.
 */
struct JacobianElement {
  Vector xi;  // global mask in permuted order
  std::vector<JacobianBlock> blocks;
  std::vector<Index> perm;
  std::vector<Index> offsets;

  Index n() const { return xi.size(); }
  Index active_count() const {
    return static_cast<Index>((xi.array() != 0.0).count());
  }
};

/**
 * Block for the active-set selection K = I(|a|): xi_i = 0 exactly where the
 * prox output vanishes, w_tilde = sign(a) o xi o w and
 * coef = 2 rho / (1 + 2 rho w_tilde^T w_tilde).
 *
 * The certificate is checked against (a, w, rho); a mismatch means it came
 * from a different evaluation and is rejected.
 */
inline JacobianBlock jac_element_group(const Eigen::Ref<const Vector>& a,
                                       const Eigen::Ref<const Vector>& w,
                                       double rho,
                                       const GroupProxCertificate& cert) {
  detail::check_prox_args(a, w, rho);
  const Index t = a.size();
  if (cert.active_mask.size() != t || cert.signs.size() != t) {
    throw InvalidArgument("jacobian: certificate size does not match the group");
  }
  const double shift = 2.0 * rho * cert.alpha_bar;
  JacobianBlock blk;
  blk.xi = cert.active_mask;
  blk.w_tilde.resize(t);
  for (Index i = 0; i < t; ++i) {
    const bool survives = std::abs(a[i]) - shift * w[i] > 0.0 && a[i] != 0.0;
    if (cert.signs[i] != detail::sign(a[i]) ||
        (cert.active_mask[i] != 0.0) != survives) {
      throw InvalidArgument("jacobian: stale prox certificate at coordinate " +
                            std::to_string(i + 1));
    }
    blk.w_tilde[i] = cert.signs[i] * blk.xi[i] * w[i];
  }
  blk.rho = rho;
  blk.coef = 2.0 * rho / (1.0 + 2.0 * rho * blk.w_tilde.squaredNorm());
  blk.full_support = (blk.xi.array() != 0.0).all();
  return blk;
}

inline JacobianElement jac_exclusive(const Eigen::Ref<const Vector>& x_hat,
                                     double nu, const Eigen::Ref<const Vector>& w,
                                     const GroupPartition& partition,
                                     const std::vector<GroupProxCertificate>& certs) {
  detail::require_size(x_hat.size(), partition.n(), "jacobian x_hat");
  if (static_cast<Index>(certs.size()) != partition.num_groups()) {
    throw InvalidArgument("jacobian: one certificate per group is required");
  }
  const Vector xp = partition.gather(x_hat);
  const Vector wp = partition.gather(w);
  JacobianElement J;
  J.xi.resize(partition.n());
  J.perm = partition.perm();
  J.offsets = partition.offsets();
  J.blocks.reserve(certs.size());
  for (Index j = 0; j < partition.num_groups(); ++j) {
    const Index begin = partition.group_begin(j);
    const Index size = partition.group_size(j);
    JacobianBlock blk = jac_element_group(xp.segment(begin, size),
                                          wp.segment(begin, size), nu,
                                          certs[static_cast<std::size_t>(j)]);
    J.xi.segment(begin, size) = blk.xi;
    J.blocks.push_back(std::move(blk));
  }
  return J;
}

/// P^T [Diag(xi) Pv - sum_j c_j (w_j^T (Pv)_j) w_j], O(n).
inline Vector apply_jacobian(const JacobianElement& J,
                             const Eigen::Ref<const Vector>& v) {
  detail::require_size(v.size(), J.n(), "apply_jacobian v");
  Vector out(J.n());
  for (std::size_t j = 0; j < J.blocks.size(); ++j) {
    const auto& blk = J.blocks[j];
    const Index begin = J.offsets[j];
    const Index size = J.offsets[j + 1] - begin;
    double proj = 0.0;
    for (Index k = 0; k < size; ++k) {
      proj += blk.w_tilde[k] * v[J.perm[static_cast<std::size_t>(begin + k)]];
    }
    proj *= blk.coef;
    for (Index k = 0; k < size; ++k) {
      const Index i = J.perm[static_cast<std::size_t>(begin + k)];
      out[i] = blk.xi[k] * v[i] - proj * blk.w_tilde[k];
    }
  }
  return out;
}

}  // namespace exlasso
