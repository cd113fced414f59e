#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "panelfe/montecarlo.hpp"

using namespace panelfe;

namespace {
const Family probit{FamilyKind::probit};
}

TEST(Coverage, Intervals) {
  const auto [lo, hi] = mc::coverage_interval(1.0, 0.1);
  EXPECT_DOUBLE_EQ(lo, 0.804);
  EXPECT_DOUBLE_EQ(hi, 1.196);
  const auto [zlo, zhi] = mc::coverage_interval(0.0, 0.0);
  EXPECT_EQ(zlo, 0.0);
  EXPECT_EQ(zhi, 0.0);
  EXPECT_TRUE(mc::covers(1.0, 1.0, 0.1));
  EXPECT_FALSE(mc::covers(1.3, 1.0, 0.1));
  EXPECT_THROW(mc::coverage_interval(1.0, -0.1), domain_error);
}

TEST(VaryingT, ZeroShocksGiveAllOnes) {
  const std::size_t n = 3, T = 5;
  const std::vector<double> alpha(n, 0.0), u(n * (T + 1), 0.0), eps(n * T, 0.0);
  const auto panel = mc::build_varying_T(1.0, alpha, u, eps, T);
  double expected = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    expected = static_cast<double>(t) / 10.0 + expected / 2.0;
    EXPECT_NEAR(panel.regressor(1, t - 1, 0), expected, 1e-15);
  }
  for (double y : panel.y) EXPECT_EQ(y, 1.0);
}

TEST(VaryingT, FirstRegressorMoment) {
  auto d = mc::varying_T_design(100000, 1, 1, 1, 3, {});
  const auto panel = mc::generate_varying_T(d, 0);
  double mean = 0.0;
  for (double x : panel.X) mean += x;
  mean /= static_cast<double>(panel.X.size());
  const double sd = std::sqrt((0.25 + 1.0) / 12.0);
  EXPECT_LT(std::abs(mean - 0.1), 3.0 * sd / std::sqrt(1e5));
}

TEST(VaryingT, ReplicationsShareNoDraws) {
  auto d = mc::varying_T_design(200, 4, 2, 1, 3, {});
  const auto a = mc::generate_varying_T(d, 0), b = mc::generate_varying_T(d, 1);
  std::set<double> seen(a.X.begin(), a.X.end());
  for (double x : b.X) EXPECT_EQ(seen.count(x), 0u);
  const auto again = mc::generate_varying_T(d, 0);
  EXPECT_EQ(a.X, again.X);
  EXPECT_EQ(a.y, again.y);
}

TEST(Calibrate, TruthIsTheFit) {
  auto panel = mc::synthetic_probit_panel(5, 300, 6, false);
  const auto fit = fit_fe(panel, probit);
  ASSERT_FALSE(fit.dropped.empty());
  const auto c = mc::calibrate(panel, probit);
  EXPECT_EQ(c.theta, fit.theta_hat);
  EXPECT_EQ(c.alpha.size(), fit.used.size());
  EXPECT_EQ(c.panel.n, fit.used.size());
  for (std::size_t j = 0; j < fit.used.size(); ++j) EXPECT_EQ(c.alpha[j], fit.alpha_hat[fit.used[j]]);
}

TEST(Calibrate, RoundTripAtLongT) {
  // simulate from a known truth at T = 80 and recover it
  auto base = mc::synthetic_probit_panel(8, 200, 80, false);
  Vector truth(2);
  truth << -0.6, 0.4;
  std::vector<double> alpha(base.n);
  for (std::size_t i = 0; i < base.n; ++i) alpha[i] = 0.5 * std::sin(static_cast<double>(i));
  const auto shocks = draw_shocks(12, 1, base.n, base.T);
  const auto panel = with_outcomes(base, simulate_panel(probit, truth, alpha, base, shocks, 0));
  const auto c = mc::calibrate(panel, probit);
  EXPECT_LT((c.theta - truth).cwiseAbs().maxCoeff(), 0.08);
  double err = 0.0;
  const auto used = estimable_individuals(panel, probit);
  for (std::size_t j = 0; j < used.size(); ++j) err += std::abs(c.alpha[j] - alpha[used[j]]);
  EXPECT_LT(err / static_cast<double>(used.size()), 0.25);
}

TEST(Calibrated, FreezesRegressorsAndKeepsInitialConditions) {
  const auto c = mc::calibrate(mc::synthetic_probit_panel(4, 150, 6, true), probit);
  const auto d = mc::calibrated_design(c, probit, 3, 2, 9, {mc::Method::fe});
  EXPECT_EQ(d.kind, mc::DesignKind::calibrated_dynamic);
  const auto a = mc::generate(d, 0), b = mc::generate(d, 1);
  for (std::size_t i = 0; i < a.n; ++i) {
    EXPECT_EQ(a.regressor(i, 0, 0), c.panel.regressor(i, 0, 0));
    for (std::size_t t = 0; t < a.T; ++t) {
      EXPECT_EQ(a.regressor(i, t, 1), c.panel.regressor(i, t, 1));
      EXPECT_EQ(a.regressor(i, t, 2), b.regressor(i, t, 2));
      if (t > 0) EXPECT_EQ(a.regressor(i, t, 0), a.outcome(i, t - 1));
    }
  }
  EXPECT_NE(a.y, b.y);
}

TEST(RunDesign, TruthEchoIsExact) {
  auto d = mc::varying_T_design(50, 4, 20, 1, 1, {mc::Method::truth});
  const auto r = mc::run_design(d);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].bias, 0.0);
  EXPECT_EQ(r.rows[0].stddev, 0.0);
  EXPECT_EQ(r.rows[0].coverage, 1.0);
  EXPECT_EQ(r.rows[0].R_effective, 20u);
}

TEST(RunDesign, DeterministicAndScheduleInvariant) {
  auto d = mc::varying_T_design(60, 4, 8, 3, 11, {mc::Method::fe, mc::Method::ife, mc::Method::hbc});
  const auto a = mc::run_design(d);
  d.threads = 3;
  const auto b = mc::run_design(d);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].method, b.rows[k].method);
    EXPECT_EQ(a.rows[k].bias, b.rows[k].bias);
    EXPECT_EQ(a.rows[k].stddev, b.rows[k].stddev);
    EXPECT_EQ(a.rows[k].coverage, b.rows[k].coverage);
    EXPECT_EQ(a.rows[k].R_effective, b.rows[k].R_effective);
  }
}

TEST(RunDesign, RowShapeAndMetrics) {
  auto d = mc::varying_T_design(100, 4, 10, 2, 1, {mc::Method::fe, mc::Method::ife});
  const auto r = mc::run_design(d);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].method, "fe");
  EXPECT_EQ(r.rows[1].method, "ife-2");
  for (const auto& row : r.rows) {
    EXPECT_GE(row.coverage, 0.0);
    EXPECT_LE(row.coverage, 1.0);
    EXPECT_LE(row.R_effective, d.R);
  }
}

TEST(RunDesign, FailuresAreCountedAndFlagged) {
  auto d = mc::varying_T_design(100, 4, 5, 2, 1, {mc::Method::fe});
  d.fit.max_iterations = 1;
  const auto r = mc::run_design(d);
  EXPECT_EQ(r.rows[0].R_effective, 0u);
  EXPECT_TRUE(r.unreliable);
}

TEST(RunDesign, RejectsMismatchedTruth) {
  auto d = mc::varying_T_design(10, 4, 1, 1, 1, {mc::Method::fe});
  d.theta0 = Vector::Ones(2);
  EXPECT_THROW(mc::run_design(d), domain_error);
  d.theta0 = Vector::Ones(1);
  d.R = 0;
  EXPECT_THROW(mc::run_design(d), domain_error);
}

TEST(RunDesign, CorrectionBeatsFixedEffectsAtShortT) {
  auto d = mc::varying_T_design(100, 4, 500, 10, 1, {mc::Method::fe, mc::Method::ife});
  const auto r = mc::run_design(d);
  EXPECT_LT(std::abs(r.at("ife-10", "x").bias), std::abs(r.at("fe", "x").bias));
}

TEST(RunDesign, CorrectionRestoresCoverage) {
  auto d = mc::varying_T_design(200, 4, 200, 10, 2, {mc::Method::fe, mc::Method::ife});
  const auto r = mc::run_design(d);
  EXPECT_LT(r.at("fe", "x").coverage, r.at("ife-10", "x").coverage);
}

TEST(RunDesign, CalibratedStaticCorrections) {
  const auto c = mc::calibrate(mc::synthetic_probit_panel(21, 500, 9, false), probit);
  auto d = mc::calibrated_design(c, probit, 100, 10, 3, {mc::Method::fe, mc::Method::ife, mc::Method::bc_hn});
  const auto r = mc::run_design(d);
  for (const std::string k : {"kids", "income"}) {
    EXPECT_LT(std::abs(r.at("ife-10", k).bias), std::abs(r.at("fe", k).bias)) << k;
    EXPECT_LT(std::abs(r.at("bc_hn", k).bias), 10.0) << k;
  }
}
