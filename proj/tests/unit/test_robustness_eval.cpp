#include "iclab/gd_engine.hpp"
#include "iclab/robustness_eval.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace iclab::robust {
namespace {

using data::PriorConfig;
using data::SigmaDist;

HijackTrial trial_at(std::int64_t i, int d = 20, const SigmaDist& s = SigmaDist::fixed(0.1)) {
  return draw_hijack_trial(PriorConfig::e1(d, 0.1), s, 31, i);
}

TEST(ClosedForm, NoLearningKeepsZeroShotMargin) {
  const HijackTrial t = trial_at(0);
  const MarginBreakdown m = hijack_margin_closed_form(t.sample, t.task, {0.7, 0.0, 3, 25, 20, 40});
  EXPECT_EQ(m.a_L, 0.0);
  EXPECT_EQ(m.decay_factor, 1.0);
  EXPECT_NEAR(m.margin, 0.7 * t.task.prior.beta_star.dot(t.sample.x_query), 1e-14);
}

TEST(ClosedForm, NoHijacksKeepsZeroShotMargin) {
  const HijackTrial t = trial_at(1);
  const MarginBreakdown m = hijack_margin_closed_form(t.sample, t.task, {0.7, 0.01, 3, 0, 20, 40});
  EXPECT_EQ(m.decay_factor, 1.0);
  EXPECT_NEAR(m.margin, 0.7 * t.sample.x_query.dot(t.task.prior.beta_star), 1e-14);
}

TEST(ClosedForm, MatchesExplicitGd) {
  for (std::int64_t i = 0; i < 2000; ++i) {
    const SigmaDist s = i % 2 ? SigmaDist::fixed(0.1) : SigmaDist::uniform(0.05, 0.8, true);
    const HijackTrial t = trial_at(i, 20, s);
    const HijackGdSpec spec{0.7, 0.002, 3, 30, 20, 40};
    const double closed = hijack_margin_closed_form(t.sample, t.task, spec).margin;
    const double loop = hijack_margin_explicit(t.sample, t.task, spec);
    ASSERT_LE(std::abs(closed - loop), 1e-10 * (1 + std::abs(loop)));
  }
}

TEST(ClosedForm, IteratePositiveSigmaExpansion) {
  for (std::int64_t i = 0; i < 200; ++i) {
    const HijackTrial t = trial_at(i);
    const HijackGdSpec spec{0.6, 0.004, 2, 40, 20, 40};
    const MarginBreakdown m = hijack_margin_closed_form(t.sample, t.task, spec);
    const Vec& beta = t.task.prior.beta_star;
    const double expand = spec.c * t.sample.sigma * t.task.w_star.dot(beta) - 1.0 +
                          m.decay_factor * (1.0 + spec.c * t.sample.x_perp.dot(beta));
    EXPECT_NEAR(m.margin, expand, 1e-10 * (1 + std::abs(expand)));
    const Vec w = spec.c * beta + m.a_L * t.sample.x_perp;
    const auto traj = gd::gd_run(gd::GdConfig::constant(spec.c * beta, spec.alpha, spec.L),
                                 gd::GdContext::repeated({t.sample.x_hc, t.sample.y_hc}, spec.N));
    EXPECT_LE((w - traj.final_iterate()).norm(), 1e-10 * (1 + w.norm()));
  }
}

TEST(ClosedForm, ZeroBoundaryComponentIsDegenerate) {
  HijackTrial t = trial_at(2);
  t.sample.x_perp.setZero();
  try {
    hijack_margin_closed_form(t.sample, t.task, {0.7, 0.01, 1, 5, 20, 40});
    FAIL() << "expected a degenerate-input error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
}

TEST(ClosedForm, MirroredDrawHasTheSameSignedMargin) {
  // (x_perp, sigma) -> (-x_perp, -sigma) preserves the sampling distribution
  // and y_query * margin, so the symmetric sigma mode has the same error rate
  // as the positive one.
  for (std::int64_t i = 0; i < 200; ++i) {
    const HijackTrial t = trial_at(i);
    data::HijackSample neg = t.sample;
    neg.x_perp = -t.sample.x_perp;
    neg.x_hc = neg.x_perp;
    neg.sigma = -t.sample.sigma;
    neg.x_query = neg.x_perp + neg.sigma * t.task.w_star;
    neg.y_query = -1.0;
    neg.y_hc = 1.0;
    const HijackGdSpec spec{0.7, 0.003, 2, 50, 20, 40};
    const double pos = hijack_margin_closed_form(t.sample, t.task, spec).margin;
    const double flip = hijack_margin_closed_form(neg, t.task, spec).margin;
    EXPECT_NEAR(t.sample.y_query * pos, neg.y_query * flip, 1e-12 * (1 + std::abs(pos)));
  }
}

TEST(EstimateError, NoLearningEqualsZeroShotError) {
  const PriorConfig prior = PriorConfig::e1(20, 0.1);
  const SigmaDist s = SigmaDist::fixed(0.1);
  const ErrorEstimate e = estimate_error({0.7, 0.0, 2, 50, 20, 40}, prior, s, 5000, 8);
  int wrong = 0;
  for (std::int64_t i = 0; i < 5000; ++i) {
    const HijackTrial t = draw_hijack_trial(prior, s, 8, i);
    wrong += 0.7 * prior.beta_star.dot(t.sample.x_query) * t.sample.y_query <= 0.0;
  }
  EXPECT_DOUBLE_EQ(e.error, wrong / 5000.0);
}

TEST(EstimateError, FullDecayRegimeMisclassifiesPositiveSigma) {
  const PriorConfig prior = PriorConfig::e1(20, 0.1);
  // alpha N ||x_perp||^2 is close to 1, so the decay factor vanishes quickly.
  const HijackGdSpec spec{0.7, 1.0 / (50 * 19.0), 12, 50, 20, 40};
  const ErrorEstimate e = estimate_error(spec, prior, SigmaDist::fixed(0.1), 4000, 9);
  EXPECT_GT(e.error, 0.95);
}

TEST(EstimateError, DeeperGdIsMoreRobust) {
  const PriorConfig prior = PriorConfig::e1(20, 0.1);
  const auto err = [&](int L) {
    return estimate_error({0.7, theta_scaled_alpha(40, L), L, 60, 20, 40}, prior,
                          SigmaDist::fixed(0.1), 10000, 10)
        .error;
  };
  EXPECT_LE(err(4), err(1));
}

CurveCell cell(int L, double alpha, double c = 0.7, int n = 40) {
  return {20, n, L, alpha, c, PriorConfig::e1(20, 0.1), SigmaDist::fixed(0.1)};
}

TEST(Curve, SinglePointAtZeroIsZeroShotAccuracy) {
  const CurveCell cc = cell(2, 0.003);
  const RobustnessCurve curve = robustness_curve(cc, {0}, 3000, 11, CurveSource::gd_closed_form);
  const ErrorEstimate e = estimate_error({cc.c, 0.0, 2, 0, 20, 40}, cc.prior, cc.sigma, 3000, 11);
  ASSERT_EQ(curve.points.size(), 1u);
  EXPECT_DOUBLE_EQ(curve.points[0].accuracy, 1.0 - e.error);
}

TEST(Curve, ClosedFormAndExplicitSourcesAgree) {
  const CurveCell cc = cell(3, 0.004);
  const std::vector<int> Ns{0, 20, 40, 60, 80, 100};
  const auto a = robustness_curve(cc, Ns, 3000, 12, CurveSource::gd_closed_form);
  const auto b = robustness_curve(cc, Ns, 3000, 12, CurveSource::gd_explicit);
  for (std::size_t i = 0; i < Ns.size(); ++i) EXPECT_EQ(a.points[i].accuracy, b.points[i].accuracy);
}

TEST(Curve, ConstructedTransformerMatchesExplicitGd) {
  const CurveCell cc = cell(2, 0.005);
  const std::vector<int> Ns{0, 5, 10, 20, 40};
  const auto a = robustness_curve(cc, Ns, 400, 13, CurveSource::transformer_constructed);
  const auto b = robustness_curve(cc, Ns, 400, 13, CurveSource::gd_explicit);
  for (std::size_t i = 0; i < Ns.size(); ++i) EXPECT_EQ(a.points[i].accuracy, b.points[i].accuracy);
}

TEST(Curve, WorkerCountDoesNotChangeResults) {
  const CurveCell cc = cell(2, 0.004);
  const auto a = robustness_curve(cc, {0, 30, 90}, 1200, 14, CurveSource::gd_explicit, nullptr, 1);
  const auto b = robustness_curve(cc, {0, 30, 90}, 1200, 14, CurveSource::gd_explicit, nullptr, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.points[i].accuracy, b.points[i].accuracy);
    EXPECT_EQ(a.points[i].std_err, b.points[i].std_err);
  }
}

TEST(Curve, Preconditions) {
  const CurveCell cc = cell(2, 0.004);
  try {
    robustness_curve(cc, {0, 10}, 100, 1, CurveSource::transformer_trained);
    FAIL() << "expected a missing-checkpoint error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  EXPECT_THROW(robustness_curve(cc, {10, 10}, 100, 1, CurveSource::gd_explicit), Error);
  EXPECT_THROW(robustness_curve(cc, {}, 100, 1, CurveSource::gd_explicit), Error);
}

TEST(Curve, RegimeFlags) {
  EXPECT_TRUE(in_joint_regime(10, 20, 400));
  EXPECT_FALSE(in_joint_regime(30, 20, 400));
  EXPECT_FALSE(in_joint_regime(0, 20, 400));
  EXPECT_TRUE(in_joint_regime(0, 20, 0));
}

TEST(CurveSourceNames, RoundTrip) {
  for (auto s : {CurveSource::gd_explicit, CurveSource::gd_closed_form,
                 CurveSource::transformer_trained, CurveSource::transformer_constructed})
    EXPECT_EQ(parse_curve_source(to_string(s)), s);
  EXPECT_THROW(parse_curve_source("gd"), Error);
}

TEST(SmallNGap, ZeroHijacksHaveNoGap) {
  const auto g = small_N_gap({0.7, 0.01, 2, 0, 20, 40}, PriorConfig::e1(20, 0.1),
                             SigmaDist::fixed(0.1), 1000, 15);
  EXPECT_EQ(g.gap, 0.0);
  EXPECT_TRUE(g.in_regime);
}

TEST(SmallNGap, SingleHijackWithLongContextIsHarmless) {
  const int n = 2000, L = 2;
  const auto g = small_N_gap({0.7, theta_scaled_alpha(n, L), L, 1, 20, n},
                             PriorConfig::e1(20, 0.1), SigmaDist::fixed(0.1), 10000, 16);
  EXPECT_LE(g.gap, 0.02);
  EXPECT_NEAR(g.regime_bound, 2000 / (20 * std::pow(20.0, 1.5)), 1e-12);
  EXPECT_TRUE(g.in_regime);
}

TEST(SmallNGap, GrowsAsHijacksLeaveTheSmallRegime) {
  const int n = 2000, L = 2;
  double prev = -1.0;
  for (int N : {1, 10, 100}) {
    const auto g = small_N_gap({0.7, theta_scaled_alpha(n, L), L, N, 20, n},
                               PriorConfig::e1(20, 0.1), SigmaDist::fixed(0.1), 10000, 17);
    EXPECT_GE(g.gap, prev) << "N=" << N;
    prev = g.gap;
  }
  EXPECT_GT(prev, 0.02);
}

TEST(BoundFit, RecoversSyntheticParameters) {
  const int d = 20, n = 200, L = 2;
  const double c1 = 0.9, c2 = 0.5, kappa = 0.3;
  std::vector<int> N;
  std::vector<double> err;
  for (int k = 0; k <= 20; ++k) {
    N.push_back(10 * k);
    err.push_back(c1 - c2 * std::pow(1 - kappa * 10 * k * d / double(n * L), L));
  }
  const BoundFit f = bound_shape_fit(N, err, d, n, L);
  EXPECT_LT(f.residual, 1e-6);
  EXPECT_NEAR(f.c1, c1, 0.01 * c1);
  EXPECT_NEAR(f.c2, c2, 0.01 * c2);
  EXPECT_NEAR(f.kappa, kappa, 0.01 * kappa);
}

TEST(BoundFit, ConstantCurveHasNoDecayTerm) {
  const BoundFit f = bound_shape_fit({0, 10, 20, 30, 40}, {0.3, 0.3, 0.3, 0.3, 0.3}, 20, 200, 2);
  EXPECT_NEAR(f.c2, 0.0, 1e-12);
  EXPECT_NEAR(f.c1, 0.3, 1e-12);
}

TEST(BoundFit, TooFewPointsReportsInfiniteResidual) {
  const BoundFit f = bound_shape_fit({0, 10, 20}, {0.1, 0.2, 0.3}, 20, 200, 2);
  EXPECT_TRUE(std::isinf(f.residual));
}

}  // namespace
}  // namespace iclab::robust
