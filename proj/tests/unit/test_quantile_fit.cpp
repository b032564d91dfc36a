#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "sqr/error.hpp"
#include "sqr/quantile_fit.hpp"
#include "sqr/random.hpp"

using namespace sqr;

namespace {

Eigen::MatrixXd to_matrix(const nlohmann::json& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

double scan_minimizer(const std::vector<double>& y, double tau) {
  double best = 0, best_c = 0;
  bool first = true;
  for (int k = 0; k <= 110000; ++k) {
    const double c = -0.5 + k * 1e-4;
    double s = 0;
    for (double v : y) s += check_loss(v - c, tau);
    if (first || s < best - 1e-12) {
      best = s;
      best_c = c;
      first = false;
    }
  }
  return best_c;
}

}  // namespace

TEST(CheckLoss, Definition) {
  EXPECT_DOUBLE_EQ(check_loss(3.0, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(check_loss(-3.0, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(check_loss(1.0, 0.9), 0.9);
  EXPECT_NEAR(check_loss(-1.0, 0.9), 0.1, 1e-15);
}

TEST(CheckLoss, ScanFindsSampleQuantile) {
  std::vector<double> y(10);
  std::iota(y.begin(), y.end(), 1.0);
  // Any tau with n tau not an integer has a unique minimizer y_(ceil(n tau)).
  for (double tau : {0.15, 0.33, 0.55, 0.85}) {
    const double c = scan_minimizer(y, tau);
    EXPECT_NEAR(c, y[static_cast<std::size_t>(std::ceil(10 * tau)) - 1], 1e-9) << tau;
  }
}

TEST(FitPqr, InterceptOnlyMedian) {
  RandomStream rng(3);
  std::vector<double> y(31);
  for (auto& v : y) v = rng.normal(2.0, 3.0);
  const Design d(Eigen::MatrixXd::Ones(31, 1));
  const auto fit = fit_pqr(d, y, 0.5, 0.0, Eigen::MatrixXd::Zero(1, 1));
  std::vector<double> s = y;
  std::sort(s.begin(), s.end());
  EXPECT_NEAR(fit.coefficients(0), s[15], 1e-9);
  EXPECT_TRUE(fit.certified);
}

TEST(FitPqr, ExactLinearResponseHasZeroLoss) {
  const int n = 25;
  Eigen::MatrixXd x(n, 2);
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i * 0.1;
    y[static_cast<std::size_t>(i)] = 0.7 - 2.0 * x(i, 1);
  }
  const auto fit = fit_pqr(Design(x), y, 0.3, 0.0, Eigen::MatrixXd::Zero(2, 2));
  EXPECT_LT(fit.objective, 1e-9);
  EXPECT_NEAR(fit.coefficients(1), -2.0, 1e-8);
}

TEST(FitPqr, MatchesConvexSolverOracle) {
  std::ifstream in(std::string(SQR_TEST_DATA_DIR) + "/pqr_oracle.json");
  ASSERT_TRUE(in) << "missing oracle file";
  const auto doc = nlohmann::json::parse(in);
  int checked = 0;
  for (const auto& c : doc["cases"]) {
    const Eigen::MatrixXd x = to_matrix(c["x"]);
    const Eigen::MatrixXd pen = to_matrix(c["penalty"]);
    const std::vector<double> y = c["y"].get<std::vector<double>>();
    const double tau = c["tau"], lambda = c["lambda"], expected = c["objective"];
    const auto fit = fit_pqr(Design(x), y, tau, lambda, pen);
    EXPECT_LE(std::abs(fit.objective - expected), 1e-6 * std::abs(expected)) << "case " << checked;
    // the returned objective is the exact one at the returned point
    EXPECT_NEAR(fit.objective, penalized_objective(Design(x), y, tau, lambda, pen, fit.coefficients), 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(FitPqr, GroupedDesignEqualsExpandedDesign) {
  RandomStream rng(9);
  Eigen::MatrixXd unique(6, 3);
  for (Eigen::Index i = 0; i < 6; ++i) unique.row(i) << 1.0, rng.normal(), rng.normal();
  std::vector<std::size_t> group;
  std::vector<double> y;
  for (std::size_t g = 0; g < 6; ++g)
    for (int k = 0; k < 9; ++k) {
      group.push_back(g);
      y.push_back(unique(static_cast<Eigen::Index>(g), 1) + rng.normal());
    }
  Eigen::MatrixXd full(static_cast<Eigen::Index>(group.size()), 3);
  for (std::size_t i = 0; i < group.size(); ++i) full.row(static_cast<Eigen::Index>(i)) = unique.row(static_cast<Eigen::Index>(group[i]));
  const Eigen::MatrixXd pen = difference_matrix(2, 3).gram();
  const auto a = fit_pqr(Design(unique, group), y, 0.25, 1.0, pen);
  const auto b = fit_pqr(Design(full), y, 0.25, 1.0, pen);
  EXPECT_NEAR(a.objective, b.objective, 1e-9 * b.objective);
}

TEST(FitPqr, RejectsBadInput) {
  const Design d(Eigen::MatrixXd::Ones(3, 1));
  const std::vector<double> y{1, 2, 3};
  EXPECT_THROW(fit_pqr(d, y, 1.0, 0.0, Eigen::MatrixXd::Zero(1, 1)), InvalidArgument);
  EXPECT_THROW(fit_pqr(d, y, 0.5, -1.0, Eigen::MatrixXd::Zero(1, 1)), InvalidArgument);
  EXPECT_THROW(fit_pqr(d, std::vector<double>{1, 2}, 0.5, 0.0, Eigen::MatrixXd::Zero(1, 1)), InvalidArgument);
}

TEST(Gacv, SingleElementGrid) {
  RandomStream rng(5);
  const auto b = BSplineBasis::equally_spaced(3, 4, {0.0, 1.0});
  Eigen::MatrixXd x(60, 7);
  std::vector<double> y(60);
  for (int i = 0; i < 60; ++i) {
    x.row(i) = b.evaluate(i / 59.0).transpose();
    y[static_cast<std::size_t>(i)] = rng.normal();
  }
  const std::vector<double> taus{0.5};
  const std::vector<double> grid{3.0};
  const auto r = gacv_select(Design(x), y, taus, difference_matrix(2, 7).gram(), grid);
  EXPECT_EQ(r.lambda, 3.0);
  // determinism: same criterion from scratch
  const auto fit = fit_pqr(Design(x), y, 0.5, 3.0, difference_matrix(2, 7).gram());
  EXPECT_DOUBLE_EQ(r.criterion, gacv_criterion(fit));
}

TEST(Gacv, PureNoisePrefersHeavySmoothing) {
  const auto b = BSplineBasis::equally_spaced(3, 8, {0.0, 1.0});
  const Eigen::MatrixXd pen = difference_matrix(2, 11).gram();
  const std::vector<double> grid = log_spaced(1e-3, 1e3, 7);
  const std::vector<double> taus{0.25, 0.5, 0.75};
  int at_max = 0, at_min = 0;
  for (int rep = 0; rep < 20; ++rep) {
    RandomStream rng(100 + static_cast<std::uint64_t>(rep));
    Eigen::MatrixXd x(80, 11);
    std::vector<double> y(80);
    for (int i = 0; i < 80; ++i) {
      x.row(i) = b.evaluate(rng.uniform()).transpose();
      y[static_cast<std::size_t>(i)] = rng.normal();
    }
    const auto r = gacv_select(Design(x), y, taus, pen, grid);
    at_max += r.lambda == grid.back();
    at_min += r.lambda == grid.front();
  }
  EXPECT_GT(at_max, at_min);
}

TEST(Gacv, WorkersDoNotChangeResult) {
  RandomStream rng(8);
  const auto b = BSplineBasis::equally_spaced(3, 4, {0.0, 1.0});
  Eigen::MatrixXd x(50, 7);
  std::vector<double> y(50);
  for (int i = 0; i < 50; ++i) {
    const double s = rng.uniform();
    x.row(i) = b.evaluate(s).transpose();
    y[static_cast<std::size_t>(i)] = std::sin(6 * s) + 0.3 * rng.normal();
  }
  const auto grid = log_spaced(1e-2, 1e2, 5);
  const std::vector<double> taus{0.25, 0.75};
  const auto a = gacv_select(Design(x), y, taus, difference_matrix(2, 7).gram(), grid, {}, 1);
  const auto c = gacv_select(Design(x), y, taus, difference_matrix(2, 7).gram(), grid, {}, 3);
  EXPECT_EQ(a.lambda, c.lambda);
  EXPECT_EQ(a.criterion, c.criterion);
}

TEST(Predict, ZeroAndConstantCoefficients) {
  const auto b = BSplineBasis::equally_spaced(3, 4, {0.0, 1.0});
  const std::vector<BSplineBasis> bases{b, b};
  QuantileFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(14);
  const std::vector<double> x{0.2, 0.9};
  EXPECT_EQ(predict_quantile(fit, bases, x), 0.0);
  fit.coefficients = Eigen::VectorXd::Constant(14, 1.75);
  EXPECT_NEAR(predict_quantile(fit, bases, x), 3.5, 1e-12);
}

TEST(LambdaGrid, LogSpacedEndpoints) {
  const auto g = default_lambda_grid();
  ASSERT_EQ(g.size(), 25u);
  EXPECT_NEAR(g.front(), 1e-4, 1e-18);
  EXPECT_EQ(g.back(), 1e4);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] / g[i - 1], std::pow(10.0, 1.0 / 3.0), 1e-12);
}
