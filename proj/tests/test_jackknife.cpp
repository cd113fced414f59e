#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "panelfe/jackknife.hpp"
#include "panelfe/montecarlo.hpp"
#include "panelfe/neyman_scott.hpp"

using namespace panelfe;

namespace {

const Family probit{FamilyKind::probit};
const Family ns_family{FamilyKind::neyman_scott};

PanelData probit_panel(std::size_t n, std::size_t T, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z;
  std::vector<double> y(n * T), X(n * T);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z(gen);
    for (std::size_t t = 0; t < T; ++t) {
      X[i * T + t] = z(gen);
      y[i * T + t] = X[i * T + t] + a >= z(gen) ? 1.0 : 0.0;
    }
  }
  return make_panel(n, T, 1, std::move(y), std::move(X), probit);
}

double mean_of_corrected(JackknifeMethod method, std::size_t T) {
  ns::Design d;
  d.T = T;
  d.seed = 31 + T;
  std::vector<double> est;
  for (std::size_t r = 0; r < 1000; ++r) {
    const auto panel = ns::generate_panel(d, r);
    const auto fit = method == JackknifeMethod::hbc ? hbc(panel, ns_family) : bc_hn(panel, ns_family);
    est.push_back(fit.theta_corrected[0]);
  }
  const double se = ns::sample_sd(est) / std::sqrt(static_cast<double>(est.size()));
  return (ns::sample_mean(est) - 2.0) / se;
}

}  // namespace

TEST(Jackknife, CombinationRules) {
  const Vector full = Vector::Constant(2, 1.5);
  EXPECT_EQ(jackknife_combination(JackknifeMethod::hbc, full, {full, full}, 6), full);
  EXPECT_EQ(jackknife_combination(JackknifeMethod::bc_hn, full, {full, full, full}, 3), full);
  const Vector a = Vector::Constant(1, 1.0), b = Vector::Constant(1, 2.0), c = Vector::Constant(1, 3.0);
  EXPECT_DOUBLE_EQ(jackknife_combination(JackknifeMethod::hbc, c, {a, b}, 4)[0], 6.0 - 1.5);
  EXPECT_DOUBLE_EQ(jackknife_combination(JackknifeMethod::bc_hn, c, {a, b, c}, 3)[0], 9.0 - 2.0 * 2.0);
}

TEST(Jackknife, HbcAuditFromSubfits) {
  for (std::size_t T : {6u, 7u}) {
    const auto panel = probit_panel(150, T, 4 + T);
    const auto fit = hbc(panel, probit);
    EXPECT_EQ(fit.subfits.size(), T % 2 ? 4u : 2u);
    Vector mean = Vector::Zero(1);
    for (const auto& s : fit.subfits) mean += s.theta_hat;
    mean /= static_cast<double>(fit.subfits.size());
    EXPECT_NEAR(fit.theta_corrected[0], 2.0 * fit.full.theta_hat[0] - mean[0], 1e-12);
    EXPECT_NEAR(jackknife_combination(fit)[0], fit.theta_corrected[0], 1e-12);
    EXPECT_EQ(fit.se, fit.full.se);
  }
}

TEST(Jackknife, HbcOddSplitsAreBothOrders) {
  const auto panel = probit_panel(150, 7, 2);
  const auto fit = hbc(panel, probit);
  ASSERT_EQ(fit.subfits.size(), 4u);
  EXPECT_EQ(fit.subfits[0].T, 4u);
  EXPECT_EQ(fit.subfits[1].T, 3u);
  EXPECT_EQ(fit.subfits[2].T, 3u);
  EXPECT_EQ(fit.subfits[3].T, 4u);
}

TEST(Jackknife, BcHnAuditFromSubfits) {
  const auto panel = probit_panel(150, 5, 8);
  const auto fit = bc_hn(panel, probit);
  ASSERT_EQ(fit.subfits.size(), 5u);
  double mean = 0.0;
  for (const auto& s : fit.subfits) {
    EXPECT_EQ(s.T, 4u);
    mean += s.theta_hat[0] / 5.0;
  }
  EXPECT_NEAR(fit.theta_corrected[0], 5.0 * fit.full.theta_hat[0] - 4.0 * mean, 1e-12);
  EXPECT_NEAR(jackknife_combination(fit)[0], fit.theta_corrected[0], 1e-12);
}

TEST(Jackknife, Preconditions) {
  EXPECT_THROW(hbc(probit_panel(50, 3, 1), probit), data_error);
  EXPECT_THROW(bc_hn(probit_panel(50, 2, 1), probit), data_error);
  const auto dyn = mc::synthetic_probit_panel(3, 100, 6, true);
  try {
    bc_hn(dyn, probit);
    FAIL() << "expected rejection";
  } catch (const data_error& e) {
    EXPECT_NE(std::string(e.what()).find("not applicable due to dynamics"), std::string::npos);
  }
  EXPECT_NO_THROW(hbc(dyn, probit));
}

TEST(Jackknife, SubfitFailureNamesTheHalf) {
  // variation only in the first half: the second half has no estimable individual
  std::vector<double> y, X;
  for (int i = 0; i < 20; ++i) {
    for (int t = 0; t < 4; ++t) {
      y.push_back(t < 2 ? static_cast<double>((i + t) % 2) : 1.0);
      X.push_back(0.1 * i - 0.3 * t);
    }
  }
  const auto panel = make_panel(20, 4, 1, y, X, probit);
  try {
    hbc(panel, probit);
    FAIL() << "expected failure";
  } catch (const estimation_error& e) {
    EXPECT_NE(std::string(e.what()).find("second half"), std::string::npos) << e.what();
  }
}

TEST(Jackknife, NeymanScottHbcIsUnbiased) { EXPECT_LT(std::abs(mean_of_corrected(JackknifeMethod::hbc, 4)), 3.0); }

TEST(Jackknife, NeymanScottBcHnIsUnbiased) { EXPECT_LT(std::abs(mean_of_corrected(JackknifeMethod::bc_hn, 5)), 3.0); }

TEST(Jackknife, HbcInflatesDispersion) {
  auto d = mc::varying_T_design(100, 6, 100, 10, 5, {mc::Method::fe, mc::Method::hbc});
  const auto result = mc::run_design(d);
  EXPECT_GT(result.at("hbc", "x").stddev, result.at("fe", "x").stddev);
}
