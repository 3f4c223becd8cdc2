#pragma once

#include "exlasso/common.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace exlasso {

/**
 * A partition of {0..n-1} into nonempty disjoint groups.
 *
 * Groups are kept both as index lists and in permutation form: perm()[k] is
 * the original coordinate sitting at position k once all groups are laid out
 * back to back, and group j occupies positions [offsets()[j], offsets()[j+1]).
 * Gathering x by perm() therefore yields the concatenation x_{g_1};...;x_{g_l}.
 */
class GroupPartition {
public:
  GroupPartition() = default;

  /// Validates that `groups` (0-based) cover {0..n-1} exactly once, with no
  /// empty group. Throws InvalidArgument naming the offending index.
  GroupPartition(std::vector<std::vector<Index>> groups, Index n)
      : groups_(std::move(groups)), n_(n) {
    detail::require(n_ > 0, "partition: n must be positive");
    detail::require(!groups_.empty(), "partition: no groups");
    std::vector<Index> owner(static_cast<std::size_t>(n_), -1);
    perm_.reserve(static_cast<std::size_t>(n_));
    offsets_.reserve(groups_.size() + 1);
    offsets_.push_back(0);
    for (std::size_t j = 0; j < groups_.size(); ++j) {
      if (groups_[j].empty()) {
        throw InvalidArgument("partition: group " + std::to_string(j + 1) +
                              " is empty");
      }
      for (Index i : groups_[j]) {
        if (i < 0 || i >= n_) {
          throw InvalidArgument("partition: index " + std::to_string(i + 1) +
                                " out of range 1.." + std::to_string(n_));
        }
        auto& o = owner[static_cast<std::size_t>(i)];
        if (o != -1) {
          throw InvalidArgument("partition: index " + std::to_string(i + 1) +
                                " appears more than once");
        }
        o = static_cast<Index>(j);
        perm_.push_back(i);
      }
      offsets_.push_back(static_cast<Index>(perm_.size()));
    }
    for (Index i = 0; i < n_; ++i) {
      if (owner[static_cast<std::size_t>(i)] == -1) {
        throw InvalidArgument("partition: index " + std::to_string(i + 1) +
                              " is not covered by any group");
      }
    }
    owner_ = std::move(owner);
  }

  /// l consecutive blocks of the given sizes.
  static GroupPartition contiguous(const std::vector<Index>& sizes) {
    std::vector<std::vector<Index>> groups;
    Index next = 0;
    for (Index s : sizes) {
      detail::require(s > 0, "partition: block sizes must be positive");
      std::vector<Index> g(static_cast<std::size_t>(s));
      for (auto& i : g) i = next++;
      groups.push_back(std::move(g));
    }
    return GroupPartition(std::move(groups), next);
  }

  static GroupPartition uniform(Index num_groups, Index group_size) {
    return contiguous(std::vector<Index>(static_cast<std::size_t>(num_groups),
                                         group_size));
  }

  Index n() const { return n_; }
  Index num_groups() const { return static_cast<Index>(groups_.size()); }
  const std::vector<std::vector<Index>>& groups() const { return groups_; }
  const std::vector<Index>& perm() const { return perm_; }
  const std::vector<Index>& offsets() const { return offsets_; }
  Index group_of(Index i) const { return owner_[static_cast<std::size_t>(i)]; }
  Index group_begin(Index j) const { return offsets_[static_cast<std::size_t>(j)]; }
  Index group_size(Index j) const {
    return offsets_[static_cast<std::size_t>(j) + 1] -
           offsets_[static_cast<std::size_t>(j)];
  }

  /// x -> Px
  Vector gather(const Eigen::Ref<const Vector>& x) const {
    detail::require_size(x.size(), n_, "partition gather");
    Vector out(n_);
    for (Index k = 0; k < n_; ++k) out[k] = x[perm_[static_cast<std::size_t>(k)]];
    return out;
  }

  /// y -> P^T y
  Vector scatter(const Eigen::Ref<const Vector>& y) const {
    detail::require_size(y.size(), n_, "partition scatter");
    Vector out(n_);
    for (Index k = 0; k < n_; ++k) out[perm_[static_cast<std::size_t>(k)]] = y[k];
    return out;
  }

  friend bool operator==(const GroupPartition& a, const GroupPartition& b) {
    return a.n_ == b.n_ && a.groups_ == b.groups_;
  }

private:
  std::vector<std::vector<Index>> groups_;
  std::vector<Index> perm_;
  std::vector<Index> offsets_;
  std::vector<Index> owner_;
  Index n_ = 0;
};

enum class LossKind { LeastSquares, Logistic };

inline std::string_view to_string(LossKind k) {
  return k == LossKind::LeastSquares ? "ls" : "logistic";
}

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
  if (s == "ls" || s == "least_squares" || s == "leastsquares") {
    return LossKind::LeastSquares;
  }
  if (s == "logistic" || s == "logit") return LossKind::Logistic;
  return std::nullopt;
}

/// min_x h(Ax) - <c,x> + lambda * sum_j ||w_{g_j} o x_{g_j}||_1^2
struct ProblemInstance {
  Matrix A;
  Vector b;
  Vector c;
  double lambda = 1.0;
  Vector w;
  GroupPartition partition;
  LossKind loss = LossKind::LeastSquares;

  Index m() const { return A.rows(); }
  Index n() const { return A.cols(); }

  void validate() const {
    detail::require(A.rows() > 0 && A.cols() > 0, "instance: empty design");
    detail::require_size(b.size(), A.rows(), "instance b");
    detail::require_size(c.size(), A.cols(), "instance c");
    detail::require_size(w.size(), A.cols(), "instance w");
    detail::require(partition.n() == A.cols(),
                    "instance: partition does not match the column count");
    detail::require(lambda > 0.0 && std::isfinite(lambda),
                    "instance: lambda must be positive and finite");
    for (Index i = 0; i < w.size(); ++i) {
      if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
        throw InvalidArgument("instance: weight " + std::to_string(i + 1) +
                              " is not strictly positive");
      }
    }
    if (loss == LossKind::Logistic) {
      for (Index i = 0; i < b.size(); ++i) {
        if (b[i] != 1.0 && b[i] != -1.0) {
          throw InvalidArgument("instance: logistic label " +
                                std::to_string(i + 1) + " is not +-1");
        }
      }
    }
  }
};

/// Sum_j ||w_{g_j} o x_{g_j}||_1^2.
inline double regularizer_value(const Eigen::Ref<const Vector>& x,
                                const Eigen::Ref<const Vector>& w,
                                const GroupPartition& partition) {
  detail::require_size(x.size(), partition.n(), "regularizer x");
  detail::require_size(w.size(), partition.n(), "regularizer w");
  double total = 0.0;
  for (const auto& g : partition.groups()) {
    double s = 0.0;
    for (Index i : g) s += std::abs(w[i] * x[i]);
    total += s * s;
  }
  return total;
}

/// Number of nonzero coordinates in each group.
inline std::vector<Index> nnz_per_group(const Eigen::Ref<const Vector>& x,
                                        const GroupPartition& partition) {
  std::vector<Index> out;
  out.reserve(partition.groups().size());
  for (const auto& g : partition.groups()) {
    Index k = 0;
    for (Index i : g) k += (x[i] != 0.0);
    out.push_back(k);
  }
  return out;
}

struct HistoryEntry {
  Index iteration = 0;
  double eta_kkt = 0.0;
  double objective = 0.0;
};

struct PhaseTimes {
  double total = 0.0;
  double prox = 0.0;          // prox evaluations (regularizer and loss)
  double linear_solve = 0.0;  // Newton systems / ILSA systems
  double kkt_check = 0.0;
};

struct SolveReport {
  std::string solver;
  Vector x;
  Vector u;
  Index outer_iters = 0;
  Index inner_iters = 0;
  Index cg_iters = 0;
  Index matvecs = 0;
  double eta_kkt = 0.0;
  double objective = 0.0;
  bool converged = false;
  std::string message;
  std::vector<HistoryEntry> history;
  PhaseTimes times;
  std::vector<Index> nnz_per_group;

  /// "outer(inner)" as printed in comparison tables; first-order methods
  /// report the plain iteration count.
  std::string iteration_summary() const {
    if (inner_iters > 0) {
      return std::to_string(outer_iters) + "(" + std::to_string(inner_iters) + ")";
    }
    return std::to_string(outer_iters);
  }
};

}  // namespace exlasso
