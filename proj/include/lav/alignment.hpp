#pragma once

#include <Eigen/Dense>

#include <array>
#include <limits>
#include <optional>
#include <vector>

#include "lav/numeric.hpp"

namespace lav {

/// One cell of a warping path, 0-based (row of X, row of Y).
struct PathStep {
  Index i = 0;
  Index j = 0;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// Monotone path from (0, 0) to (n-1, m-1) using down, right and diagonal moves.
using AlignmentPath = std::vector<PathStep>;

template <typename Scalar>
struct AlignmentResultT {
  Scalar value{};
  std::optional<AlignmentPath> path;
  /// d value / d D, same shape as D.
  std::optional<MatrixX<Scalar>> grad_d;
  /// Cumulative cost table r(i, j).
  std::optional<MatrixX<Scalar>> cumulative;
};
using AlignmentResult = AlignmentResultT<double>;

template <typename Scalar>
struct EmbeddingGradT {
  MatrixX<Scalar> grad_x;
  MatrixX<Scalar> grad_y;
  Scalar value{};
};
using EmbeddingGrad = EmbeddingGradT<double>;

struct SoftDtwOptions {
  /// Divide the value (and gradient) by n + m.
  bool normalize = false;
};

/// Maximum n + m accepted by dtw_bruteforce.
inline constexpr Index kBruteForceMaxSpan = 14;

namespace detail {

template <typename Derived>
void check_cost_matrix(const Eigen::MatrixBase<Derived>& d, const char* who) {
  if (d.rows() < 1 || d.cols() < 1) throw ContractError(std::string(who) + ": empty distance matrix");
  if (!all_finite(d)) throw ContractError(std::string(who) + ": non-finite distance entry");
}

template <typename Derived>
void check_gamma(typename Derived::Scalar gamma, const char* who) {
  if (!(gamma > 0)) throw ParameterError(std::string(who) + ": gamma must be > 0");
}

template <typename Derived>
void brute_force_walk(const Eigen::MatrixBase<Derived>& d, Index i, Index j, typename Derived::Scalar acc,
                      typename Derived::Scalar& best) {
  const Index n = d.rows(), m = d.cols();
  if (i == n - 1 && j == m - 1) {
    best = std::min(best, acc);
    return;
  }
  if (i + 1 < n && j + 1 < m) brute_force_walk(d, i + 1, j + 1, acc + d(i + 1, j + 1), best);
  if (i + 1 < n) brute_force_walk(d, i + 1, j, acc + d(i + 1, j), best);
  if (j + 1 < m) brute_force_walk(d, i, j + 1, acc + d(i, j + 1), best);
}

}  // namespace detail

/// Exact DTW by dynamic programming, with the optimal path.
///
/// Ties between predecessors resolve diagonal first, then vertical
/// (i-1, j), then horizontal (i, j-1).
template <typename Derived>
AlignmentResultT<typename Derived::Scalar> dtw(const Eigen::MatrixBase<Derived>& d) {
  using Scalar = typename Derived::Scalar;
  detail::check_cost_matrix(d, "dtw");
  const Index n = d.rows(), m = d.cols();
  MatrixX<Scalar> r(n, m);
  r(0, 0) = d(0, 0);
  for (Index j = 1; j < m; ++j) r(0, j) = d(0, j) + r(0, j - 1);
  for (Index i = 1; i < n; ++i) {
    r(i, 0) = d(i, 0) + r(i - 1, 0);
    for (Index j = 1; j < m; ++j) r(i, j) = d(i, j) + std::min({r(i - 1, j - 1), r(i - 1, j), r(i, j - 1)});
  }

  AlignmentPath path;
  Index i = n - 1, j = m - 1;
  path.push_back({i, j});
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const Scalar diag = r(i - 1, j - 1), up = r(i - 1, j), left = r(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.push_back({i, j});
  }
  std::reverse(path.begin(), path.end());

  AlignmentResultT<Scalar> out;
  out.value = r(n - 1, m - 1);
  out.path = std::move(path);
  out.cumulative = std::move(r);
  return out;
}

/// Minimum path cost by explicit enumeration of every monotone path.
template <typename Derived>
typename Derived::Scalar dtw_bruteforce(const Eigen::MatrixBase<Derived>& d) {
  using Scalar = typename Derived::Scalar;
  detail::check_cost_matrix(d, "dtw_bruteforce");
  if (d.rows() + d.cols() > kBruteForceMaxSpan) throw ParameterError("dtw_bruteforce: matrix too large to enumerate");
  Scalar best = std::numeric_limits<Scalar>::infinity();
  detail::brute_force_walk(d, 0, 0, d(0, 0), best);
  return best;
}

namespace detail {

// Forward pass shared by soft_dtw and soft_dtw_grad. Stores, per cell, the
// softmin weight given to each predecessor (diagonal, up, left).
template <typename Derived>
struct SoftDtwTables {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> r, w_diag, w_up, w_left;

  SoftDtwTables(const Eigen::MatrixBase<Derived>& d, Scalar gamma, bool keep_weights) {
    const Index n = d.rows(), m = d.cols();
    r.resize(n, m);
    if (keep_weights) {
      w_diag = MatrixX<Scalar>::Zero(n, m);
      w_up = MatrixX<Scalar>::Zero(n, m);
      w_left = MatrixX<Scalar>::Zero(n, m);
    }
    r(0, 0) = d(0, 0);
    for (Index j = 1; j < m; ++j) {
      r(0, j) = d(0, j) + r(0, j - 1);
      if (keep_weights) w_left(0, j) = Scalar(1);
    }
    Eigen::Array<Scalar, 3, 1> prev;
    for (Index i = 1; i < n; ++i) {
      r(i, 0) = d(i, 0) + r(i - 1, 0);
      if (keep_weights) w_up(i, 0) = Scalar(1);
      for (Index j = 1; j < m; ++j) {
        prev << r(i - 1, j - 1), r(i - 1, j), r(i, j - 1);
        r(i, j) = d(i, j) + softmin(prev, gamma);
        if (keep_weights) {
          const VectorX<Scalar> w = softmin_weights(prev, gamma);
          w_diag(i, j) = w(0);
          w_up(i, j) = w(1);
          w_left(i, j) = w(2);
        }
      }
    }
  }
};

}  // namespace detail

/// Soft-DTW value: the DTW recurrence with min replaced by softmin.
template <typename Derived>
AlignmentResultT<typename Derived::Scalar> soft_dtw(const Eigen::MatrixBase<Derived>& d,
                                                    typename Derived::Scalar gamma, SoftDtwOptions opts = {}) {
  using Scalar = typename Derived::Scalar;
  detail::check_cost_matrix(d, "soft_dtw");
  detail::check_gamma<Derived>(gamma, "soft_dtw");
  detail::SoftDtwTables<Derived> t(d, gamma, false);
  AlignmentResultT<Scalar> out;
  out.value = t.r(d.rows() - 1, d.cols() - 1);
  if (opts.normalize) out.value /= Scalar(d.rows() + d.cols());
  out.cumulative = std::move(t.r);
  return out;
}

/// Soft-DTW value and its exact gradient with respect to D.
///
/// The gradient is obtained by reverse accumulation over the forward
/// recurrence: E(n-1, m-1) = 1 and each cell collects E of its successors
/// weighted by the softmin weight that successor gave it.
template <typename Derived>
AlignmentResultT<typename Derived::Scalar> soft_dtw_grad(const Eigen::MatrixBase<Derived>& d,
                                                         typename Derived::Scalar gamma, SoftDtwOptions opts = {}) {
  using Scalar = typename Derived::Scalar;
  detail::check_cost_matrix(d, "soft_dtw_grad");
  detail::check_gamma<Derived>(gamma, "soft_dtw_grad");
  const Index n = d.rows(), m = d.cols();
  detail::SoftDtwTables<Derived> t(d, gamma, true);

  MatrixX<Scalar> e = MatrixX<Scalar>::Zero(n, m);
  e(n - 1, m - 1) = Scalar(1);
  for (Index i = n - 1; i >= 0; --i) {
    for (Index j = m - 1; j >= 0; --j) {
      if (i == n - 1 && j == m - 1) continue;
      Scalar acc(0);
      if (i + 1 < n && j + 1 < m) acc += e(i + 1, j + 1) * t.w_diag(i + 1, j + 1);
      if (i + 1 < n) acc += e(i + 1, j) * t.w_up(i + 1, j);
      if (j + 1 < m) acc += e(i, j + 1) * t.w_left(i, j + 1);
      e(i, j) = acc;
    }
  }

  AlignmentResultT<Scalar> out;
  out.value = t.r(n - 1, m - 1);
  if (opts.normalize) {
    const Scalar scale = Scalar(1) / Scalar(n + m);
    out.value *= scale;
    e *= scale;
  }
  out.grad_d = std::move(e);
  out.cumulative = std::move(t.r);
  return out;
}

/// Pulls a gradient on the cross-distance matrix back to both embedding sequences.
///
/// With D(i, j) = ||x_i - y_j||^2:
///   grad_x(i) = 2 * sum_j E(i, j) (x_i - y_j),  grad_y(j) = 2 * sum_i E(i, j) (y_j - x_i).
template <typename DerivedX, typename DerivedY, typename DerivedE>
void distance_backward(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                       const Eigen::MatrixBase<DerivedE>& e, MatrixX<typename DerivedX::Scalar>& grad_x,
                       MatrixX<typename DerivedX::Scalar>& grad_y) {
  using Scalar = typename DerivedX::Scalar;
  const VectorX<Scalar> row_sum = e.rowwise().sum();
  const VectorX<Scalar> col_sum = e.colwise().sum().transpose();
  grad_x = Scalar(2) * (row_sum.asDiagonal() * x - e * y);
  grad_y = Scalar(2) * (col_sum.asDiagonal() * y - e.transpose() * x);
}

/// Soft-DTW between two embedding sequences and its gradient with respect to both.
template <typename DerivedX, typename DerivedY>
EmbeddingGradT<typename DerivedX::Scalar> soft_dtw_embedding_grad(const Eigen::MatrixBase<DerivedX>& x,
                                                                  const Eigen::MatrixBase<DerivedY>& y,
                                                                  typename DerivedX::Scalar gamma,
                                                                  SoftDtwOptions opts = {}) {
  using Scalar = typename DerivedX::Scalar;
  if (x.cols() != y.cols()) throw ContractError("soft_dtw_embedding_grad: embedding dimensions differ");
  const MatrixX<Scalar> d = pairwise_sq_dist(x, y);
  auto res = soft_dtw_grad(d, gamma, opts);
  EmbeddingGradT<Scalar> out;
  out.value = res.value;
  distance_backward(x, y, *res.grad_d, out.grad_x, out.grad_y);
  return out;
}

}  // namespace lav
