#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "slr/baseline.hpp"

namespace {

using slr::DenseMatrix;
using slr::Index;
using slr::Vector;

TEST(Baseline, SatisfiesSubgradientConditions) {
  std::mt19937 rng(1);
  std::normal_distribution<double> nd;
  DenseMatrix x(25, 10);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  Vector b(25);
  for (Index i = 0; i < 25; ++i) b[i] = i < 15 ? 1.0 : -1.0;
  const slr::ProblemInstance inst(slr::DesignMatrix(x), b, 0.02);
  slr::BaselineConfig cfg;
  cfg.tol = 1e-10;
  const slr::BaselineResult res = slr::prox_grad_solve(inst, cfg);
  ASSERT_TRUE(res.converged);
  EXPECT_NEAR(res.objective, slr::primal_objective(res.w, res.v, inst), 1e-15);

  auto smooth = [&](const Vector& z) { return oracle::loss(x * z.head(10) + Vector::Constant(25, z[10]), b); };
  Vector z(11);
  z << res.w, res.v;
  const Vector g = oracle::fd_gradient(smooth, z, 1e-6);
  for (Index j = 0; j < 10; ++j) {
    if (res.w[j] != 0.0) {
      EXPECT_NEAR(g[j] + 0.02 * (res.w[j] > 0.0 ? 1.0 : -1.0), 0.0, 1e-7);
    } else {
      EXPECT_LE(std::abs(g[j]), 0.02 + 1e-7);
    }
  }
  EXPECT_NEAR(g[10], 0.0, 1e-7);
}

TEST(Baseline, ZeroAboveLambdaMax) {
  const DenseMatrix x{{1.0, 0.0}, {0.5, 2.0}, {-1.0, 1.0}, {0.0, -3.0}};
  const Vector b{{1.0, 1.0, -1.0, 1.0}};
  const slr::DesignMatrix a(x);
  const slr::ProblemInstance inst(a, b, 1.001 * slr::lambda_max(a, b));
  const slr::BaselineResult res = slr::prox_grad_solve(inst);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.w, Vector::Zero(2));
  EXPECT_NEAR(res.v, std::log(3.0), 1e-6);
}

TEST(Baseline, ValidatesConfig) {
  const slr::ProblemInstance inst(slr::DesignMatrix(DenseMatrix{{1.0}, {-1.0}}), Vector{{1.0, -1.0}}, 0.1);
  slr::BaselineConfig cfg;
  cfg.backtrack_ratio = 1.0;
  EXPECT_THROW(slr::prox_grad_solve(inst, cfg), slr::InvalidArgument);
}

}  // namespace
