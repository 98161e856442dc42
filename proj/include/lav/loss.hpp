#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <string_view>

#include "lav/alignment.hpp"
#include "lav/numeric.hpp"
#include "lav/regularizer.hpp"

namespace lav {

/// Rows with norm below this cannot be normalized.
inline constexpr double kMinRowNorm = 1e-12;

template <typename Scalar>
struct L2NormalizedT {
  MatrixX<Scalar> normalized;
  VectorX<Scalar> norms;
};
using L2Normalized = L2NormalizedT<double>;

/// Scales every row to unit Euclidean norm.
template <typename Derived>
L2NormalizedT<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& e) {
  using Scalar = typename Derived::Scalar;
  L2NormalizedT<Scalar> out;
  out.norms = e.rowwise().norm();
  for (Index i = 0; i < e.rows(); ++i) {
    if (!(out.norms(i) >= Scalar(kMinRowNorm)))
      throw DegenerateEmbeddingError("l2_normalize: row " + std::to_string(i) + " has near-zero norm");
  }
  out.normalized = out.norms.cwiseInverse().asDiagonal() * e;
  return out;
}

/// Backward of l2_normalize: g_in(i) = (I - u_i u_i^T) g_out(i) / ||v_i||.
template <typename Scalar, typename DerivedG>
MatrixX<Scalar> l2_normalize_backward(const L2NormalizedT<Scalar>& fwd, const Eigen::MatrixBase<DerivedG>& grad_out) {
  const MatrixX<Scalar>& u = fwd.normalized;
  const VectorX<Scalar> radial = u.cwiseProduct(grad_out).rowwise().sum();
  MatrixX<Scalar> g = grad_out - radial.asDiagonal() * u;
  return fwd.norms.cwiseInverse().asDiagonal() * g;
}

enum class RegularizerKind { None, Idm, ContrastiveIdm };

/// Combined objective settings: soft-DTW alignment plus alpha times a per-sequence regularizer.
struct LavConfig {
  double gamma = 0.1;
  double alpha = 1.0;
  CIdmConfig cidm;
  bool use_alignment = true;
  RegularizerKind regularizer = RegularizerKind::ContrastiveIdm;
  SoftDtwOptions sdtw;

  void validate() const {
    if (!(gamma > 0)) throw ParameterError("LavConfig: gamma must be > 0");
    if (!(alpha >= 0)) throw ParameterError("LavConfig: alpha must be >= 0");
    cidm.validate();
  }
};

/// Loss variants of the ablation table.
enum class LossArm { Lav, Sdtw, Cidm, Sfa, Idm, SdtwIdm, SdtwSfa };

inline std::string_view to_string(LossArm arm) {
  switch (arm) {
    case LossArm::Lav: return "lav";
    case LossArm::Sdtw: return "sdtw";
    case LossArm::Cidm: return "cidm";
    case LossArm::Sfa: return "sfa";
    case LossArm::Idm: return "idm";
    case LossArm::SdtwIdm: return "sdtw+idm";
    case LossArm::SdtwSfa: return "sdtw+sfa";
  }
  return "?";
}

inline LossArm parse_loss_arm(std::string_view name) {
  for (LossArm arm : {LossArm::Lav, LossArm::Sdtw, LossArm::Cidm, LossArm::Sfa, LossArm::Idm, LossArm::SdtwIdm,
                      LossArm::SdtwSfa})
    if (to_string(arm) == name) return arm;
  throw ParameterError("unknown loss arm '" + std::string(name) + "'");
}

/// Specializes a base configuration to one ablation arm. Arms without a
/// regularizer get alpha = 0; arms without alignment drop the soft-DTW term.
inline LavConfig apply_arm(LavConfig cfg, LossArm arm) {
  switch (arm) {
    case LossArm::Lav:
      cfg.use_alignment = true;
      cfg.regularizer = RegularizerKind::ContrastiveIdm;
      cfg.cidm.weighted = true;
      break;
    case LossArm::Sdtw:
      cfg.use_alignment = true;
      cfg.regularizer = RegularizerKind::None;
      cfg.alpha = 0.0;
      break;
    case LossArm::Cidm:
      cfg.use_alignment = false;
      cfg.regularizer = RegularizerKind::ContrastiveIdm;
      cfg.cidm.weighted = true;
      break;
    case LossArm::Sfa:
      cfg.use_alignment = false;
      cfg.regularizer = RegularizerKind::ContrastiveIdm;
      cfg.cidm.weighted = false;
      break;
    case LossArm::Idm:
      cfg.use_alignment = false;
      cfg.regularizer = RegularizerKind::Idm;
      break;
    case LossArm::SdtwIdm:
      cfg.use_alignment = true;
      cfg.regularizer = RegularizerKind::Idm;
      break;
    case LossArm::SdtwSfa:
      cfg.use_alignment = true;
      cfg.regularizer = RegularizerKind::ContrastiveIdm;
      cfg.cidm.weighted = false;
      break;
  }
  return cfg;
}

template <typename Scalar>
struct LossReportT {
  Scalar total{};
  Scalar alignment{};
  Scalar reg_x{};
  Scalar reg_y{};
  /// Gradients with respect to the embeddings before normalization.
  MatrixX<Scalar> grad_x;
  MatrixX<Scalar> grad_y;
};
using LossReport = LossReportT<double>;

template <typename Derived>
RegularizerResultT<typename Derived::Scalar> apply_regularizer(const Eigen::MatrixBase<Derived>& x,
                                                               const LavConfig& cfg,
                                                               std::span<const Index> times = {}) {
  using Scalar = typename Derived::Scalar;
  switch (cfg.regularizer) {
    case RegularizerKind::Idm: return idm_loss(x, times);
    case RegularizerKind::ContrastiveIdm: return contrastive_idm(x, cfg.cidm, times);
    case RegularizerKind::None: break;
  }
  return {Scalar(0), MatrixX<Scalar>::Zero(x.rows(), x.cols())};
}

/// L(X, Y) = dtw_gamma(X, Y) + alpha * (R(X) + R(Y)) on L2-normalized
/// embeddings, with gradients chained back through the normalization.
///
/// `times_x` / `times_y` optionally give the original frame index of each
/// row (for sampled frames) so regularizer gaps are measured in video time.
template <typename DerivedX, typename DerivedY>
LossReportT<typename DerivedX::Scalar> lav_loss(const Eigen::MatrixBase<DerivedX>& x_emb,
                                                const Eigen::MatrixBase<DerivedY>& y_emb, const LavConfig& cfg,
                                                std::span<const Index> times_x = {},
                                                std::span<const Index> times_y = {}) {
  using Scalar = typename DerivedX::Scalar;
  cfg.validate();
  if (x_emb.cols() != y_emb.cols()) throw ContractError("lav_loss: embedding dimensions differ");
  const auto nx = l2_normalize(x_emb);
  const auto ny = l2_normalize(y_emb);

  LossReportT<Scalar> rep;
  MatrixX<Scalar> gx = MatrixX<Scalar>::Zero(x_emb.rows(), x_emb.cols());
  MatrixX<Scalar> gy = MatrixX<Scalar>::Zero(y_emb.rows(), y_emb.cols());
  if (cfg.use_alignment) {
    auto al = soft_dtw_embedding_grad(nx.normalized, ny.normalized, Scalar(cfg.gamma), cfg.sdtw);
    rep.alignment = al.value;
    gx += al.grad_x;
    gy += al.grad_y;
  }
  if (cfg.regularizer != RegularizerKind::None) {
    auto rx = apply_regularizer(nx.normalized, cfg, times_x);
    auto ry = apply_regularizer(ny.normalized, cfg, times_y);
    rep.reg_x = rx.value;
    rep.reg_y = ry.value;
    gx += Scalar(cfg.alpha) * rx.grad;
    gy += Scalar(cfg.alpha) * ry.grad;
  }
  rep.total = rep.alignment + Scalar(cfg.alpha) * (rep.reg_x + rep.reg_y);
  rep.grad_x = l2_normalize_backward(nx, gx);
  rep.grad_y = l2_normalize_backward(ny, gy);
  return rep;
}

}  // namespace lav
