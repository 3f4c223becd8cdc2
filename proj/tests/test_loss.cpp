#include "exlasso/loss.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace exlasso;

namespace {

Vector random_labels(oracle::RandomData& rd, Index m) {
  Vector b(m);
  for (Index i = 0; i < m; ++i) b[i] = rd.rng.uniform01() < 0.5 ? -1.0 : 1.0;
  return b;
}

}  // namespace

TEST(LossValueGrad, LeastSquaresAtResponse) {
  const Vector b{{1.0, -2.0, 3.5}};
  auto e = loss_value_grad(LossKind::LeastSquares, b, b);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.gradient, Vector::Zero(3));
  EXPECT_EQ(e.hessian_diag, Vector::Ones(3));
}

TEST(LossValueGrad, LogisticAtOrigin) {
  const Vector b{{1.0, -1.0, 1.0, 1.0}};
  auto e = loss_value_grad(LossKind::Logistic, Vector::Zero(4), b);
  EXPECT_NEAR(e.value, 4.0 * std::log(2.0), 1e-15);
  EXPECT_LE((e.gradient + 0.5 * b).norm(), 1e-16);
  EXPECT_LE((e.hessian_diag - Vector::Constant(4, 0.25)).norm(), 1e-16);
}

TEST(LossValueGrad, GradientMatchesFiniteDifferences) {
  oracle::RandomData rd(7);
  for (LossKind kind : {LossKind::LeastSquares, LossKind::Logistic}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Index m = rd.integer(1, 20);
      const Vector b = kind == LossKind::Logistic ? random_labels(rd, m) : rd.normal(m);
      const Vector y = rd.normal(m, 3.0);
      const Vector g = loss_value_grad(kind, y, b).gradient;
      const Vector fd = oracle::fd_gradient([&](const Vector& v) { return loss_value(kind, v, b); }, y, 1e-5);
      EXPECT_LE((fd - g).norm(), 1e-7 * std::max(1.0, g.norm()));
    }
  }
}

TEST(LossValueGrad, LogisticIsOverflowSafeAndBounded) {
  const Vector y{{800.0, -800.0, 1e-300}};
  const Vector b{{1.0, 1.0, -1.0}};
  auto e = loss_value_grad(LossKind::Logistic, y, b);
  EXPECT_TRUE(std::isfinite(e.value));
  EXPECT_NEAR(e.value, 800.0 + std::log(2.0), 1e-9);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_GE(e.hessian_diag[i], 0.0);
    EXPECT_LE(e.hessian_diag[i], 0.25);
  }
}

TEST(LossValueGrad, RejectsInvalidLabels) {
  EXPECT_THROW(loss_value_grad(LossKind::Logistic, Vector::Zero(2), Vector{{1.0, 0.0}}),
               InvalidArgument);
  EXPECT_THROW(prox_loss(LossKind::Logistic, Vector::Zero(2), 1.0, Vector{{1.0, 2.0}}),
               InvalidArgument);
}

TEST(LossDifference, MatchesDirectDifference) {
  oracle::RandomData rd(8);
  for (LossKind kind : {LossKind::LeastSquares, LossKind::Logistic}) {
    const Vector b = kind == LossKind::Logistic ? random_labels(rd, 10) : rd.normal(Index{10});
    const Vector p = rd.normal(Index{10}), q = rd.normal(Index{10});
    EXPECT_NEAR(loss_difference(kind, p, q, b), loss_value(kind, p, b) - loss_value(kind, q, b), 1e-12);
  }
}

TEST(ProxLoss, LeastSquaresFixesResponse) {
  const Vector b{{0.3, -1.0, 2.0}};
  for (double nu : {1e-3, 1.0, 1e4}) {
    auto r = prox_loss(LossKind::LeastSquares, b, nu, b);
    EXPECT_LE((r.y - b).norm(), 1e-15 * (1.0 + nu));
    EXPECT_LE((r.H_diag - Vector::Constant(3, 1.0 / (1.0 + nu))).norm(), 1e-16);
  }
}

TEST(ProxLoss, LogisticRootAtOrigin) {
  // Root of y (1 + e^y) = 1, which is y - 0 + h'(y) = 0 for b = 1, nu = 1.
  const double ref = oracle::logistic_prox_bisect(0.0, 1.0, 1.0);
  EXPECT_NEAR(ref * (1.0 + std::exp(ref)), 1.0, 1e-14);
  EXPECT_NEAR(ref, 0.401058137541547, 1e-12);
  auto r = prox_loss(LossKind::Logistic, Vector::Zero(1), 1.0, Vector::Ones(1));
  EXPECT_NEAR(r.y[0], ref, 1e-10);
}

TEST(ProxLoss, LogisticMatchesBisectionOracle) {
  oracle::RandomData rd(9);
  for (int trial = 0; trial < 2000; ++trial) {
    const double z = rd.rng.uniform(-30.0, 30.0);
    const double b = rd.rng.uniform01() < 0.5 ? -1.0 : 1.0;
    const double nu = rd.log_uniform(1e-4, 1e6);
    auto r = prox_loss(LossKind::Logistic, Vector::Constant(1, z), nu, Vector::Constant(1, b));
    EXPECT_NEAR(r.y[0], oracle::logistic_prox_bisect(z, b, nu), 1e-10 * (1.0 + std::abs(r.y[0])))
        << "z=" << z << " b=" << b << " nu=" << nu;
  }
}

TEST(ProxLoss, LogisticConvergesWhereNewtonCycles) {
  // Plain Newton from y = z alternates between about 3.5 and -6.7 here.
  const double z = 3.7163294201250072, nu = 15.094029532681576;
  auto r = prox_loss(LossKind::Logistic, Vector::Constant(1, z), nu, Vector::Constant(1, -1.0));
  EXPECT_NEAR(r.y[0], oracle::logistic_prox_bisect(z, -1.0, nu), 1e-10 * (1.0 + std::abs(r.y[0])));
}

TEST(ProxLoss, DerivativeBoundsAndEnvelopeGradient) {
  oracle::RandomData rd(10);
  for (LossKind kind : {LossKind::LeastSquares, LossKind::Logistic}) {
    for (int trial = 0; trial < 100; ++trial) {
      const Index m = rd.integer(1, 10);
      const Vector b = kind == LossKind::Logistic ? random_labels(rd, m) : rd.normal(m);
      const Vector z = rd.normal(m, 3.0);
      const double nu = rd.log_uniform(1e-2, 1e2);
      auto r = prox_loss(kind, z, nu, b);
      EXPECT_GT(r.H_diag.minCoeff(), 0.0);
      EXPECT_LE(r.H_diag.maxCoeff(), 1.0);
      // env = 0.5|y - z|^2 + nu h(y) has gradient z - y.
      const Vector fd = oracle::fd_gradient([&](const Vector& v) { return prox_loss(kind, v, nu, b).env; }, z, 1e-6);
      EXPECT_LE((fd - (z - r.y)).norm(), 1e-6 * std::max(1.0, (z - r.y).norm()));
      // Derivative of the prox matches H_diag.
      const Matrix Jfd = oracle::fd_jacobian([&](const Vector& v) { return prox_loss(kind, v, nu, b).y; }, z, 1e-6);
      EXPECT_LE((Jfd - Matrix(r.H_diag.asDiagonal())).norm(), 1e-6);
    }
  }
}

TEST(ProxLoss, Nonexpansive) {
  oracle::RandomData rd(12);
  for (int trial = 0; trial < 300; ++trial) {
    const Index m = rd.integer(1, 10);
    const Vector b = random_labels(rd, m);
    const Vector z1 = rd.normal(m, 5.0), z2 = rd.normal(m, 5.0);
    const double nu = rd.log_uniform(1e-2, 1e2);
    const double lhs = (prox_loss(LossKind::Logistic, z1, nu, b).y - prox_loss(LossKind::Logistic, z2, nu, b).y).norm();
    EXPECT_LE(lhs, (z1 - z2).norm() * (1.0 + 1e-12));
  }
}

TEST(ProxLoss, LogisticScalarResidualIsIncreasing) {
  for (double b : {-1.0, 1.0}) {
    for (double nu : {0.1, 1.0, 10.0}) {
      double prev = -std::numeric_limits<double>::infinity();
      for (double y = -20.0; y <= 20.0; y += 0.01) {
        const double g = y - 0.7 + nu * oracle::logistic_dh(y, b);
        EXPECT_GT(g, prev);
        prev = g;
      }
    }
  }
}

TEST(ProxLoss, RejectsNonpositiveNu) {
  EXPECT_THROW(prox_loss(LossKind::LeastSquares, Vector::Zero(2), 0.0, Vector::Zero(2)), InvalidArgument);
}
