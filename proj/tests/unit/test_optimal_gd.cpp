#include "iclab/optimal_gd.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace iclab::opt {
namespace {

using data::PriorConfig;

TEST(Grids, DefaultAxes) {
  const auto a = default_alphas();
  ASSERT_EQ(a.size(), 25u);
  EXPECT_EQ(a.front(), 1e-4);
  EXPECT_EQ(a.back(), 1.0);
  EXPECT_NEAR(a[6], 1e-3, 1e-15);
  const auto c = default_cs();
  ASSERT_EQ(c.size(), 17u);
  EXPECT_EQ(c.front(), 0.0);
  EXPECT_EQ(c.back(), 1.6);
  EXPECT_NEAR(c[8], 0.8, 1e-15);
}

TEST(EstimateRisk, ZeroPredictorHasUnitRisk) {
  const RiskEstimate r = estimate_risk(0.0, 0.0, 10, 2, PriorConfig::e1(5, 0.1), 1000, 1);
  EXPECT_EQ(r.mean, 1.0);
  EXPECT_EQ(r.trials, 1000);
}

TEST(EstimateRisk, ScaledBetaStarMatchesAnalyticRisk) {
  const RiskEstimate r =
      estimate_risk(0.0, kSqrt2OverPi, 0, 1, PriorConfig::e1(20, 0.0), 100000, 2);
  const double expect = 1.0 - 2.0 / M_PI;
  EXPECT_NEAR(expect, 0.3634, 1e-4);
  EXPECT_LE(std::abs(r.mean - expect), 3 * r.std_err);
}

TEST(EstimateRisk, HugeRateDiverges) {
  const RiskEstimate r = estimate_risk(1e3, 0.5, 50, 40, PriorConfig::e1(10, 0.1), 200, 3);
  EXPECT_TRUE(r.diverged() || r.mean > 1e6);
  const RiskEstimate s = estimate_risk(1e6, 0.5, 50, 30, PriorConfig::e1(10, 0.1), 200, 3);
  EXPECT_TRUE(s.diverged());
}

TEST(CommonRandomNumbers, TrialsDependOnlyOnSeedAndIndex) {
  const PriorConfig p = PriorConfig::e1(8, 0.2);
  for (std::int64_t t = 0; t < 20; ++t) {
    const RiskTrial a = draw_risk_trial(p, 5, 77, t);
    const RiskTrial b = draw_risk_trial(p, 5, 77, t);
    EXPECT_EQ(a.task.w_star, b.task.w_star);
    EXPECT_EQ(a.prompt.prompt.matrix(), b.prompt.prompt.matrix());
  }
  EXPECT_NE(draw_risk_trial(p, 5, 77, 0).task.w_star, draw_risk_trial(p, 5, 77, 1).task.w_star);
}

TEST(CommonRandomNumbers, PointEstimateEqualsGridCell) {
  GridSpec spec;
  spec.alphas = {0.001, 0.01};
  spec.cs = {0.4, 0.8};
  spec.d = 6;
  spec.n = 12;
  spec.L = 3;
  spec.trials = 600;
  spec.seed = 9;
  spec.prior = PriorConfig::e1(6, 0.1);
  const auto depths = grid_search_depths(spec);
  for (const auto& r : depths)
    for (const auto& cell : r.table) {
      const RiskEstimate e = estimate_risk(cell.alpha, cell.c, spec.n, r.L, spec.prior, spec.trials, spec.seed);
      EXPECT_EQ(e.mean, cell.risk.mean);
      EXPECT_EQ(e.std_err, cell.risk.std_err);
    }
}

TEST(GridSearch, FindsMinimizerOfAnalyticProblem) {
  GridSpec spec;
  spec.alphas = {0.0};
  spec.cs = {0.0, 0.8, 1.6};
  spec.d = 10;
  spec.n = 5;
  spec.L = 1;
  spec.trials = 5000;
  spec.prior = PriorConfig::e1(10, 0.0);
  const GridResult r = grid_search(spec);
  EXPECT_EQ(r.alpha_opt, 0.0);
  EXPECT_EQ(r.c_opt, 0.8);
  EXPECT_EQ(r.table.size(), 3u);
}

TEST(GridSearch, TiesGoToSmallerAlpha) {
  // With an empty context every rate leaves w0 untouched, so all rates tie.
  GridSpec spec;
  spec.alphas = {1e-3, 1e-2, 1e-1};
  spec.cs = {0.8};
  spec.d = 3;
  spec.n = 0;
  spec.trials = 100;
  spec.prior = PriorConfig::e1(3, 0.1);
  const GridResult r = grid_search(spec);
  EXPECT_EQ(r.table[0].risk.mean, r.table[2].risk.mean);
  EXPECT_EQ(r.alpha_opt, 1e-3);
}

TEST(GridSearch, ReproducibleAndWorkerIndependent) {
  GridSpec spec;
  spec.d = 6;
  spec.n = 10;
  spec.L = 3;
  spec.trials = 1000;
  spec.seed = 4;
  spec.prior = PriorConfig::e1(6, 0.1);
  const GridResult a = grid_search(spec);
  spec.workers = 4;
  const GridResult b = grid_search(spec);
  ASSERT_EQ(a.table.size(), b.table.size());
  for (std::size_t i = 0; i < a.table.size(); ++i) EXPECT_EQ(a.table[i].risk.mean, b.table[i].risk.mean);
  EXPECT_EQ(a.alpha_opt, b.alpha_opt);
  EXPECT_EQ(a.c_opt, b.c_opt);
}

TEST(GridSearch, EntirelyDivergentGridIsAnError) {
  GridSpec spec;
  spec.alphas = {1e6};
  spec.cs = {0.5};
  spec.d = 10;
  spec.n = 50;
  spec.L = 30;
  spec.trials = 50;
  spec.prior = PriorConfig::e1(10, 0.1);
  try {
    grid_search(spec);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("entirely divergent"), std::string::npos);
  }
}

TEST(GridSearch, DoublingContextRoughlyHalvesOptimalRate) {
  for (int L : {1, 2}) {
    double alpha[2];
    for (int i = 0; i < 2; ++i) {
      GridSpec spec;
      spec.d = 20;
      spec.n = 50 << i;
      spec.L = L;
      spec.trials = 10000;
      spec.seed = cell_seed(2024, spec.d, spec.n);
      spec.prior = PriorConfig::e1(20, 0.1);
      alpha[i] = grid_search(spec).alpha_opt;
    }
    const double ratio = alpha[1] / alpha[0];
    EXPECT_GE(ratio, 0.3) << "L=" << L;
    EXPECT_LE(ratio, 0.8) << "L=" << L;
  }
}

TEST(ScalingStudy, SingleCellMatchesGridSearch) {
  ScalingSpec s;
  s.n_list = {20};
  s.L_list = {2};
  s.d_list = {5};
  s.trials = 800;
  s.seed = 5;
  const auto rows = scaling_study(s);
  ASSERT_EQ(rows.size(), 1u);
  GridSpec g;
  g.d = 5;
  g.n = 20;
  g.L = 2;
  g.trials = 800;
  g.seed = cell_seed(5, 5, 20);
  g.prior = s.prior.for_dim(5);
  const GridResult r = grid_search(g);
  EXPECT_EQ(rows[0].alpha_opt, r.alpha_opt);
  EXPECT_EQ(rows[0].c_opt, r.c_opt);
  EXPECT_DOUBLE_EQ(rows[0].alpha_times_nL, r.alpha_opt * 40);
}

TEST(InitScan, NoLearningGivesAnalyticMinimizer) {
  const PriorConfig p = PriorConfig::e1(6, 0.0);
  const Vec v = Vec::Unit(6, 1);
  const auto c1 = linspace(0.0, 1.6, 17);
  const auto c2 = linspace(-0.4, 0.4, 9);
  const InitScanResult r = init_direction_scan(c1, c2, v, 10, 3, 0.0, p, 20000, 6);
  EXPECT_NEAR(r.c1_opt, 0.8, 1e-12);
  EXPECT_NEAR(r.c2_opt, 0.0, 1e-12);
  for (const auto& cell : r.table) {
    const Vec w = cell.c1 * p.beta_star + cell.c2 * v;
    EXPECT_LE(std::abs(cell.risk.mean - fixed_predictor_risk_analytic(w, p.beta_star)),
              4 * cell.risk.std_err + 1e-12);
  }
}

TEST(InitScan, OptimalOffsetIsNearZeroAndSymmetric) {
  const PriorConfig p = PriorConfig::e1(20, 0.1);
  const Vec v = Vec::Unit(20, 3);
  const auto c2 = linspace(-0.4, 0.4, 9);
  GridSpec g;
  g.d = 20;
  g.n = 50;
  g.L = 2;
  g.trials = 4000;
  g.prior = p;
  const GridResult best = grid_search(g);
  const InitScanResult r =
      init_direction_scan({best.c_opt}, c2, v, 50, 2, best.alpha_opt, p, 10000, 7);
  EXPECT_LE(std::abs(r.c2_opt), 0.1 + 1e-12);
  for (std::size_t j = 0; j < c2.size(); ++j) {
    const auto& a = r.table[j].risk;
    const auto& b = r.table[c2.size() - 1 - j].risk;
    EXPECT_LE(std::abs(a.mean - b.mean), 3 * std::hypot(a.std_err, b.std_err));
  }
}

TEST(SignExpectation, MatchesIdentity) {
  const Vec e1 = Vec::Unit(5, 0);
  const auto same = check_sign_expectation(e1, e1, 100000, 1);
  EXPECT_NEAR(same.expected, 0.79788, 1e-5);
  EXPECT_LE(same.z_score(), 3.0);
  const auto orth = check_sign_expectation(Vec::Unit(5, 1), e1, 100000, 2);
  EXPECT_EQ(orth.expected, 0.0);
  EXPECT_LE(orth.z_score(), 3.0);
  const auto twice = check_sign_expectation(2 * e1, e1, 100000, 3);
  EXPECT_NEAR(twice.expected, 2 * kSqrt2OverPi, 1e-15);
  EXPECT_LE(twice.z_score(), 3.0);
}

TEST(FixedPredictorRisk, MatchesDecomposition) {
  Rng rng(8);
  for (int i = 0; i < 5; ++i) {
    const Vec ws = rng.normal_vector(10).normalized();
    const Vec w = 0.5 * rng.normal_vector(10);
    const auto r = fixed_predictor_risk(w, ws, 100000, 100 + static_cast<std::uint64_t>(i));
    EXPECT_LE(r.z_score(), 3.0) << "estimate " << r.estimate << " expected " << r.expected;
  }
}

}  // namespace
}  // namespace iclab::opt
