#pragma once

#include <Eigen/Dense>

#include <cstdlib>
#include <span>

#include "lav/numeric.hpp"

namespace lav {

/// Contrastive temporal regularizer settings.
struct CIdmConfig {
  /// Frames farther apart than this are negative pairs.
  Index sigma = 15;
  /// Hinge margin on squared distance for negative pairs.
  double lambda_margin = 2.0;
  /// false drops both temporal weights (plain slow-feature / temporal coherence).
  bool weighted = true;

  void validate() const {
    if (sigma < 0) throw ParameterError("CIdmConfig: sigma must be >= 0");
    if (!(lambda_margin > 0)) throw ParameterError("CIdmConfig: lambda_margin must be > 0");
  }
};

template <typename Scalar>
struct RegularizerResultT {
  Scalar value{};
  MatrixX<Scalar> grad;
};
using RegularizerResult = RegularizerResultT<double>;

/// Temporal weight for close frames, 1 / ((i - j)^2 + 1).
inline double idm_weight(Index i, Index j) {
  const double g = static_cast<double>(i - j);
  return 1.0 / (g * g + 1.0);
}

/// Temporal weight for far frames, (i - j)^2 + 1.
inline double idm_inverse_weight(Index i, Index j) {
  const double g = static_cast<double>(i - j);
  return g * g + 1.0;
}

/// sum_ij S(i, j) / ((i - j)^2 + 1) over any supplied self-similarity matrix.
template <typename Derived>
typename Derived::Scalar idm_similarity(const Eigen::MatrixBase<Derived>& s) {
  using Scalar = typename Derived::Scalar;
  if (s.rows() != s.cols()) throw ContractError("idm_similarity: matrix must be square");
  Scalar acc(0);
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.cols(); ++j) acc += Scalar(idm_weight(i, j)) * s(i, j);
  return acc;
}

/// Frame times used for the temporal weights: `times` when given, else row indices.
class FrameTimes {
 public:
  FrameTimes(std::span<const Index> times, Index n) : times_(times) {
    if (!times_.empty() && static_cast<Index>(times_.size()) != n)
      throw ContractError("frame times must have one entry per embedding row");
  }
  Index operator()(Index i) const { return times_.empty() ? i : times_[static_cast<std::size_t>(i)]; }

 private:
  std::span<const Index> times_;
};

namespace detail {

// For L = sum_ij C(i, j) * ||x_i - x_j||^2 with C symmetric,
// dL/dx_i = 4 * (rowsum(C)_i * x_i - (C X)_i).
template <typename DerivedX, typename DerivedC>
MatrixX<typename DerivedX::Scalar> self_distance_backward(const Eigen::MatrixBase<DerivedX>& x,
                                                          const Eigen::MatrixBase<DerivedC>& c) {
  using Scalar = typename DerivedX::Scalar;
  const VectorX<Scalar> row_sum = c.rowwise().sum();
  return Scalar(4) * (row_sum.asDiagonal() * x - c * x);
}

}  // namespace detail

/// Minimization form of IDM: sum_ij ((i - j)^2 + 1) * (-D_X(i, j)).
///
/// Temporal gaps are measured on `times` (e.g. original indices of sampled
/// frames) when supplied, otherwise on row indices.
template <typename Derived>
RegularizerResultT<typename Derived::Scalar> idm_loss(const Eigen::MatrixBase<Derived>& x,
                                                      std::span<const Index> times = {}) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.rows();
  if (n < 1) throw ContractError("idm_loss: empty sequence");
  const FrameTimes t(times, n);
  const MatrixX<Scalar> d = pairwise_sq_dist(x, x);
  MatrixX<Scalar> c(n, n);
  Scalar value(0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      c(i, j) = -Scalar(idm_inverse_weight(t(i), t(j)));
      value += c(i, j) * d(i, j);
    }
  }
  return {value, detail::self_distance_backward(x, c)};
}

/// Contrastive-IDM on one embedding sequence.
///
///   sum_ij  y_ij * ((i-j)^2 + 1) * max(0, lambda - D_X(i, j))
///         + (1 - y_ij) / ((i-j)^2 + 1) * D_X(i, j),      y_ij = [|i - j| > sigma]
///
/// With cfg.weighted == false both temporal weights are 1. The hinge
/// subgradient at D_X == lambda is taken as 0. Temporal gaps use `times`
/// when supplied, otherwise row indices.
template <typename Derived>
RegularizerResultT<typename Derived::Scalar> contrastive_idm(const Eigen::MatrixBase<Derived>& x,
                                                             const CIdmConfig& cfg,
                                                             std::span<const Index> times = {}) {
  using Scalar = typename Derived::Scalar;
  cfg.validate();
  const Index n = x.rows();
  if (n < 1) throw ContractError("contrastive_idm: empty sequence");
  const FrameTimes t(times, n);
  const MatrixX<Scalar> d = pairwise_sq_dist(x, x);
  const Scalar margin(cfg.lambda_margin);
  MatrixX<Scalar> c = MatrixX<Scalar>::Zero(n, n);
  Scalar value(0);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const bool negative = std::abs(t(i) - t(j)) > cfg.sigma;
      if (negative) {
        const Scalar w = cfg.weighted ? Scalar(idm_inverse_weight(t(i), t(j))) : Scalar(1);
        const Scalar gap = margin - d(i, j);
        if (gap > 0) {
          value += w * gap;
          c(i, j) = -w;
        }
      } else {
        const Scalar w = cfg.weighted ? Scalar(idm_weight(t(i), t(j))) : Scalar(1);
        value += w * d(i, j);
        c(i, j) = w;
      }
    }
  }
  return {value, detail::self_distance_backward(x, c)};
}

}  // namespace lav
