#include "exlasso/baselines.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace exlasso;

namespace {

ProblemInstance small_ls(oracle::RandomData& rd, Index m, Index l, Index t, double lambda) {
  ProblemInstance inst;
  inst.A = rd.normal_matrix(m, l * t);
  inst.b = rd.normal(m, 2.0);
  inst.c = Vector::Zero(l * t);
  inst.lambda = lambda;
  inst.w = rd.uniform(l * t, 0.5, 1.5);
  inst.partition = GroupPartition::uniform(l, t);
  return inst;
}

ProblemInstance scalar_instance(double a, double lambda) {
  ProblemInstance inst;
  inst.A = Matrix::Ones(1, 1);
  inst.b = Vector::Constant(1, a);
  inst.c = Vector::Zero(1);
  inst.lambda = lambda;
  inst.w = Vector::Ones(1);
  inst.partition = GroupPartition::uniform(1, 1);
  return inst;
}

using Solver = SolveReport (*)(const ProblemInstance&, const BaselineParams&);

struct Named {
  const char* name;
  Solver fn;
};

const Named kSolvers[] = {{"admm", admm_solve}, {"apg", apg_solve}, {"ilsa", ilsa_solve}};

}  // namespace

TEST(Baselines, ScalarClosedForm) {
  // min 0.5 (x - a)^2 + lambda x^2 has x = a / (1 + 2 lambda).
  BaselineParams p;
  p.tol = 1e-12;
  for (double a : {-3.0, 0.5, 2.0}) {
    for (double lambda : {0.1, 1.0, 7.0}) {
      const ProblemInstance inst = scalar_instance(a, lambda);
      for (const auto& s : kSolvers) {
        const SolveReport r = s.fn(inst, p);
        EXPECT_TRUE(r.converged) << s.name;
        EXPECT_NEAR(r.x[0], a / (1.0 + 2.0 * lambda), 1e-10) << s.name;
      }
    }
  }
}

TEST(Baselines, AgreeWithOracleOnSmallInstances) {
  oracle::RandomData rd(301);
  for (int trial = 0; trial < 4; ++trial) {
    const ProblemInstance inst = small_ls(rd, rd.integer(6, 12), rd.integer(1, 3), rd.integer(2, 4),
                                          rd.log_uniform(0.05, 2.0));
    const Vector ref = oracle::ls_solution_by_apg(inst.A, inst.b, inst.c, inst.lambda, inst.w,
                                                  inst.partition, 40000);
    BaselineParams p;
    p.tol = 1e-10;
    for (const auto& s : kSolvers) {
      const SolveReport r = s.fn(inst, p);
      ASSERT_TRUE(r.converged) << s.name << ": " << r.message;
      EXPECT_EQ(r.solver, s.name);
      EXPECT_LE((r.x - ref).norm(), 1e-6 * (1.0 + ref.norm())) << s.name;
      EXPECT_LE((r.u - (inst.A * r.x - inst.b)).norm(), 1e-4 * (1.0 + r.u.norm())) << s.name;
      EXPECT_NEAR(r.eta_kkt, kkt_residual(inst, r.x), 1e-15) << s.name;
      EXPECT_EQ(r.nnz_per_group, nnz_per_group(r.x, inst.partition));
    }
  }
}

TEST(Baselines, FirstOrderMethodsHandleLogisticLoss) {
  oracle::RandomData rd(303);
  ProblemInstance inst = small_ls(rd, 25, 3, 3, 0.05);
  for (Index i = 0; i < inst.m(); ++i) inst.b[i] = rd.rng.uniform01() < 0.5 ? -1.0 : 1.0;
  inst.loss = LossKind::Logistic;
  BaselineParams p;
  p.tol = 1e-8;
  const SolveReport a = admm_solve(inst, p);
  const SolveReport g = apg_solve(inst, p);
  ASSERT_TRUE(a.converged) << a.message;
  ASSERT_TRUE(g.converged) << g.message;
  EXPECT_LE((a.x - g.x).norm(), 1e-5 * (1.0 + g.x.norm()));
  EXPECT_THROW(ilsa_solve(inst, p), InvalidArgument);
}

TEST(Baselines, IlsaObjectiveIsNonincreasing) {
  oracle::RandomData rd(305);
  const ProblemInstance inst = small_ls(rd, 30, 4, 5, 0.3);
  BaselineParams p;
  p.tol = 1e-9;
  p.check_every = 1;
  const SolveReport r = ilsa_solve(inst, p);
  ASSERT_GE(r.history.size(), 2u);
  for (std::size_t k = 1; k < r.history.size(); ++k) {
    EXPECT_LE(r.history[k].objective, r.history[k - 1].objective * (1.0 + 1e-12) + 1e-12) << k;
  }
}

TEST(Baselines, ApgEndsBelowStartingObjective) {
  oracle::RandomData rd(307);
  const ProblemInstance inst = small_ls(rd, 30, 4, 5, 0.01);
  BaselineParams p;
  p.check_every = 1;
  const SolveReport r = apg_solve(inst, p);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.history.back().objective, r.history.front().objective);
  EXPECT_EQ(r.iteration_summary(), std::to_string(r.outer_iters));
}

TEST(Baselines, CapsAreReported) {
  oracle::RandomData rd(309);
  const ProblemInstance inst = small_ls(rd, 30, 4, 5, 1e-3);
  BaselineParams p;
  p.tol = 1e-14;
  p.admm.max_iters = 5;
  p.apg.max_iters = 5;
  p.ilsa.max_iters = 2;
  for (const auto& s : kSolvers) {
    const SolveReport r = s.fn(inst, p);
    EXPECT_FALSE(r.converged) << s.name;
    EXPECT_EQ(r.message, "iteration cap reached") << s.name;
  }
  BaselineParams q;
  q.max_seconds = 0.0;
  q.tol = 1e-14;
  EXPECT_EQ(admm_solve(inst, q).message, "time cap reached");
}

TEST(Baselines, ParameterValidation) {
  oracle::RandomData rd(311);
  const ProblemInstance inst = small_ls(rd, 5, 1, 2, 1.0);
  BaselineParams p;
  p.admm.step_length = 1.7;
  EXPECT_THROW(admm_solve(inst, p), InvalidArgument);
  p = BaselineParams{};
  p.admm.step_length = 1.618;
  EXPECT_NO_THROW(p.validate());
  p.tol = 0.0;
  EXPECT_THROW(apg_solve(inst, p), InvalidArgument);
  p = BaselineParams{};
  p.ilsa.eps_smooth = 0.0;
  EXPECT_THROW(ilsa_solve(inst, p), InvalidArgument);
}
