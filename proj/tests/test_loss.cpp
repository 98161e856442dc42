#include <doctest.h>

#include "lav/errors.hpp"
#include "lav/loss.hpp"
#include "support.hpp"

using namespace lav;
using lav::testing::numeric_gradient;
using lav::testing::random_matrix;
using lav::testing::rel_error;

TEST_CASE("l2_normalize") {
  Matrix e(1, 2);
  e << 3, 4;
  const auto n = l2_normalize(e);
  CHECK(n.normalized(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.normalized(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(n.norms(0) == 5.0);

  Rng rng(1);
  const Matrix unit = l2_normalize(random_matrix(rng, 5, 3)).normalized;
  CHECK((l2_normalize(unit).normalized - unit).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((unit.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-15);

  Matrix degenerate = Matrix::Ones(3, 2);
  degenerate.row(1).setZero();
  CHECK_THROWS_AS(l2_normalize(degenerate), DegenerateEmbeddingError);
  degenerate.row(1).setConstant(1e-13);
  CHECK_THROWS_AS(l2_normalize(degenerate), DegenerateEmbeddingError);
}

TEST_CASE("l2_normalize_backward matches central differences") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Matrix e = random_matrix(rng, 4, 3);
    const Matrix w = random_matrix(rng, 4, 3);
    const auto fwd = l2_normalize(e);
    const Matrix g = l2_normalize_backward(fwd, w);
    const auto f = [&](const Matrix& z) { return l2_normalize(z).normalized.cwiseProduct(w).sum(); };
    CHECK(rel_error(g, numeric_gradient(f, e)) < 1e-6);
    // Scaling a row does not change its direction, so the gradient is orthogonal to it.
    CHECK(g.cwiseProduct(e).rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("lav_loss with alpha 0 reduces to soft-DTW on normalized embeddings") {
  Rng rng(3);
  const Matrix x = random_matrix(rng, 6, 4), y = random_matrix(rng, 7, 4);
  LavConfig cfg;
  cfg.alpha = 0.0;
  const auto r = lav_loss(x, y, cfg);
  const double expect = soft_dtw(pairwise_sq_dist(l2_normalize(x).normalized, l2_normalize(y).normalized), 0.1).value;
  CHECK(r.total == expect);
  CHECK(r.alignment == expect);
}

TEST_CASE("lav_loss is additive over its components") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = random_matrix(rng, 6, 4), y = random_matrix(rng, 7, 4);
    LavConfig cfg;
    cfg.alpha = rng.uniform(0, 2);
    cfg.cidm.sigma = 2;
    const auto r = lav_loss(x, y, cfg);
    const Matrix nx = l2_normalize(x).normalized, ny = l2_normalize(y).normalized;
    CHECK(r.alignment == soft_dtw(pairwise_sq_dist(nx, ny), cfg.gamma).value);
    CHECK(r.reg_x == contrastive_idm(nx, cfg.cidm).value);
    CHECK(r.reg_y == contrastive_idm(ny, cfg.cidm).value);
    CHECK(std::abs(r.total - (r.alignment + cfg.alpha * (r.reg_x + r.reg_y))) <= 1e-10);
  }
}

TEST_CASE("lav_loss alignment term is symmetric and identical inputs balance") {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 5, 3), y = random_matrix(rng, 8, 3);
  LavConfig cfg;
  CHECK(lav_loss(x, y, cfg).alignment == doctest::Approx(lav_loss(y, x, cfg).alignment).epsilon(1e-13));

  const Matrix c = Matrix::Ones(4, 3);
  const auto r = lav_loss(c, c, cfg);
  CHECK(r.alignment <= 0.0);
  CHECK(r.alignment >= -cfg.gamma * std::log(3.0) * 8);
  CHECK(r.reg_x == r.reg_y);
}

TEST_CASE("lav_loss full gradient matches central differences") {
  Rng rng(6);
  for (LossArm arm : {LossArm::Lav, LossArm::Sdtw, LossArm::SdtwIdm, LossArm::SdtwSfa, LossArm::Cidm}) {
    for (int t = 0; t < 5; ++t) {
      const Matrix x = random_matrix(rng, 6, 4), y = random_matrix(rng, 7, 4);
      LavConfig cfg;
      cfg.cidm.sigma = 2;
      cfg = apply_arm(cfg, arm);
      const auto r = lav_loss(x, y, cfg);
      const auto fx = [&](const Matrix& z) { return lav_loss(z, y, cfg).total; };
      const auto fy = [&](const Matrix& z) { return lav_loss(x, z, cfg).total; };
      CHECK(rel_error(r.grad_x, numeric_gradient(fx, x)) < 1e-5);
      CHECK(rel_error(r.grad_y, numeric_gradient(fy, y)) < 1e-5);
    }
  }
}

TEST_CASE("lav_loss rejects bad input") {
  LavConfig cfg;
  CHECK_THROWS_AS(lav_loss(Matrix::Zero(3, 2), Matrix::Ones(3, 2), cfg), DegenerateEmbeddingError);
  CHECK_THROWS_AS(lav_loss(Matrix::Ones(3, 2), Matrix::Ones(3, 4), cfg), ContractError);
  cfg.gamma = 0;
  CHECK_THROWS_AS(lav_loss(Matrix::Ones(3, 2), Matrix::Ones(3, 2), cfg), ParameterError);
  cfg.gamma = 0.1;
  cfg.alpha = -1;
  CHECK_THROWS_AS(lav_loss(Matrix::Ones(3, 2), Matrix::Ones(3, 2), cfg), ParameterError);
}

TEST_CASE("loss arms") {
  const LavConfig base;
  CHECK(apply_arm(base, LossArm::Sdtw).alpha == 0.0);
  CHECK(apply_arm(base, LossArm::Sdtw).regularizer == RegularizerKind::None);
  CHECK(apply_arm(base, LossArm::Lav).use_alignment);
  CHECK(apply_arm(base, LossArm::Lav).cidm.weighted);
  CHECK_FALSE(apply_arm(base, LossArm::Sfa).use_alignment);
  CHECK_FALSE(apply_arm(base, LossArm::Sfa).cidm.weighted);
  CHECK_FALSE(apply_arm(base, LossArm::SdtwSfa).cidm.weighted);
  CHECK(apply_arm(base, LossArm::SdtwSfa).use_alignment);
  CHECK(apply_arm(base, LossArm::Idm).regularizer == RegularizerKind::Idm);
  CHECK_FALSE(apply_arm(base, LossArm::Cidm).use_alignment);

  for (LossArm arm : {LossArm::Lav, LossArm::Sdtw, LossArm::Cidm, LossArm::Sfa, LossArm::Idm, LossArm::SdtwIdm,
                      LossArm::SdtwSfa})
    CHECK(parse_loss_arm(to_string(arm)) == arm);
  CHECK_THROWS_AS(parse_loss_arm("tcc"), ParameterError);

  // Without alignment the total is the regularizer alone.
  Rng rng(7);
  const Matrix x = random_matrix(rng, 5, 3), y = random_matrix(rng, 5, 3);
  const auto r = lav_loss(x, y, apply_arm(base, LossArm::Cidm));
  CHECK(r.alignment == 0.0);
  CHECK(r.total == r.reg_x + r.reg_y);
}
