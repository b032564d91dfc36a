#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "sqr/error.hpp"
#include "sqr/random.hpp"
#include "sqr/trend.hpp"

using namespace sqr;

namespace {

std::vector<double> years(int t) {
  std::vector<double> out(static_cast<std::size_t>(t));
  std::iota(out.begin(), out.end(), 1.0);
  return out;
}

// Direct tricube local-linear fit at one point.
double loess_at(const std::vector<double>& x, const std::vector<double>& y, double q, double span) {
  const std::size_t n = x.size();
  const auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n)));
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = std::abs(x[i] - q);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  double h = sorted[std::min(k, n) - 1];
  if (span > 1.0) h *= span;
  h *= 1.0 + 1e-8;
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = d[i] / h;
    if (u >= 1.0) continue;
    const double w = std::pow(1 - u * u * u, 3);
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  const double vxx = sxx / sw - mx * mx;
  const double slope = vxx > 0 ? (sxy / sw - mx * my) / vxx : 0.0;
  return my + slope * (q - mx);
}

}  // namespace

TEST(Trend, ConstantSeries) {
  const auto t = years(29);
  const std::vector<double> v(29, 4.2);
  const TrendModel m = fit_trend(t, v, 29);
  for (double x : {0.5, 10.0, 29.0, 31.0}) EXPECT_NEAR(m.mean(x), 4.2, 1e-9);
  EXPECT_NEAR(m.sigma2, 0.0, 1e-18);
  EXPECT_EQ(m.coefficients.size(), 6);
}

TEST(Trend, AffineSeriesNearlyInterpolated) {
  const auto t = years(29);
  std::vector<double> v(29);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 100.0 + 1.8 * t[i];
  const TrendModel exact = fit_trend_fixed(t, v, 29, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(exact.mean(t[i]), v[i], 1e-10);
  const TrendModel small = fit_trend_fixed(t, v, 29, 1e-8);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(small.mean(t[i]), v[i], 1e-6);
  // With clamped boundary knots the coefficients of a line are the Greville
  // abscissae, which are not equally spaced near the ends, so D2 does not
  // annihilate them and heavy smoothing bends the fit slightly.
  const TrendModel heavy = fit_trend_fixed(t, v, 29, 1e4);
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(heavy.mean(t[i]) - v[i]));
  EXPECT_GT(worst, 1.0);
  const auto& k = heavy.basis.knots();
  Eigen::VectorXd greville(static_cast<Eigen::Index>(heavy.basis.size()));
  for (Eigen::Index j = 0; j < greville.size(); ++j)
    greville(j) = (k[static_cast<std::size_t>(j) + 1] + k[static_cast<std::size_t>(j) + 2] + k[static_cast<std::size_t>(j) + 3]) / 3.0;
  EXPECT_GT((difference_matrix(2, static_cast<int>(greville.size())).entries * greville).norm(), 0.1);
  // linear continuation beyond the support
  EXPECT_NEAR(exact.mean(31.0), 100.0 + 1.8 * 31.0, 1e-9);
}

TEST(Trend, DetrendRetrendInverse) {
  RandomStream rng(4);
  const auto t = years(29);
  std::vector<double> p(29), y(29);
  for (std::size_t i = 0; i < 29; ++i) {
    p[i] = std::exp(0.8 + 0.02 * t[i] + 0.2 * rng.normal());
    y[i] = 100 + 2 * t[i] + 10 * rng.normal();
  }
  const TrendModel mp = fit_trend(t, std::vector<double>(p.begin(), p.end()), 29);
  std::vector<double> logp(29);
  for (std::size_t i = 0; i < 29; ++i) logp[i] = std::log(p[i]);
  const TrendModel lp = fit_trend(t, logp, 29);
  const auto back_p = retrend(detrend(p, t, lp, DetrendMode::log_price), t, lp, DetrendMode::log_price);
  const TrendModel my = fit_trend(t, y, 29);
  const auto back_y = retrend(detrend(y, t, my, DetrendMode::level_yield), t, my, DetrendMode::level_yield);
  for (std::size_t i = 0; i < 29; ++i) {
    EXPECT_NEAR(back_p[i], p[i], 1e-13 * p[i]);
    EXPECT_NEAR(back_y[i], y[i], 1e-12 * y[i]);
  }
  // prices exactly on the trend detrend to zero
  std::vector<double> on(29);
  for (std::size_t i = 0; i < 29; ++i) on[i] = std::exp(lp.mean(t[i]));
  for (double d : detrend(on, t, lp, DetrendMode::log_price)) EXPECT_NEAR(d, 0.0, 1e-14);
}

TEST(Trend, PanelResidualsCenterNearZero) {
  RandomStream rng(12);
  std::vector<double> t, y;
  for (int year = 1; year <= 29; ++year)
    for (int j = 0; j < 40; ++j) {
      t.push_back(year);
      y.push_back(110 + 1.7 * year + 0.02 * year * year + 15 * rng.normal());
    }
  const TrendModel m = fit_trend(t, y, 29);
  const auto r = detrend(y, t, m, DetrendMode::level_yield);
  EXPECT_LT(std::abs(std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size())), 0.5);
  EXPECT_EQ(m.sample_count, static_cast<double>(y.size()));
}

TEST(Trend, GramIsMeanOuterProduct) {
  RandomStream rng(2);
  const auto t = years(20);
  std::vector<double> v(20);
  for (auto& x : v) x = rng.normal();
  const TrendModel m = fit_trend(t, v, 20);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m.gram.rows(), m.gram.cols());
  for (double x : t) g += m.basis.evaluate(x) * m.basis.evaluate(x).transpose();
  g /= 20.0;
  EXPECT_LT((g - m.gram).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Trend, DrawsMatchAsymptoticVariance) {
  RandomStream rng(21);
  const auto t = years(29);
  std::vector<double> v(29);
  for (std::size_t i = 0; i < 29; ++i) v[i] = 0.05 * t[i] + 0.3 * rng.normal();
  TrendModel m = fit_trend(t, v, 29);
  const double target = m.variance(15.0);
  EXPECT_NEAR(target, m.sigma2 / 29.0 * m.basis.evaluate(15.0).dot(m.gram.ldlt().solve(m.basis.evaluate(15.0))), 1e-15);
  RandomStream draws(77);
  double s = 0, ss = 0;
  const int n = 10000;
  for (int r = 0; r < n; ++r) {
    const double d = draw_trend(m, 15.0, draws);
    s += d;
    ss += d * d;
  }
  const double var = (ss - s * s / n) / (n - 1);
  EXPECT_NEAR(var / target, 1.0, 0.05);

  TrendModel doubled = m;
  doubled.sample_count *= 2;
  EXPECT_NEAR(doubled.variance(15.0), target / 2, 1e-15);

  TrendModel exact = m;
  exact.sigma2 = 0.0;
  EXPECT_EQ(draw_trend(exact, 15.0, draws), exact.mean(15.0));
}

TEST(Loess, ConstantAndLine) {
  std::vector<double> x(30), c(30, 2.5), line(30);
  for (std::size_t i = 0; i < 30; ++i) {
    x[i] = static_cast<double>(i) * 0.37;
    line[i] = 1.0 - 0.4 * x[i];
  }
  std::vector<double> q{0.0, 3.3, 10.73};
  for (double v : loess_smooth(x, c, q, 0.5)) EXPECT_NEAR(v, 2.5, 1e-12);
  const auto fit = loess_smooth(x, line, q, 1.0);
  for (std::size_t k = 0; k < q.size(); ++k) EXPECT_NEAR(fit[k], 1.0 - 0.4 * q[k], 1e-11);
}

TEST(Loess, NoisySineAndIndependentImplementation) {
  RandomStream rng(31);
  std::vector<double> x(200), y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    x[i] = rng.uniform(0.0, 2 * M_PI);
    y[i] = std::sin(x[i]) + 0.1 * rng.normal();
  }
  std::vector<double> q;
  for (int k = 0; k <= 100; ++k) q.push_back(0.3 + (2 * M_PI - 0.6) * k / 100.0);
  const auto fit = loess_smooth(x, y, q, 0.3);
  for (std::size_t k = 0; k < q.size(); ++k) {
    EXPECT_LT(std::abs(fit[k] - std::sin(q[k])), 0.3);
    EXPECT_NEAR(fit[k], loess_at(x, y, q[k], 0.3), 1e-10);
  }
}

TEST(Stocks, NormalizedBySmoothedPreviousProduction) {
  MarketSeries s;
  for (int i = 0; i < 12; ++i) {
    s.year.push_back(2000 + i);
    s.national_production.push_back(8000.0 + 150.0 * i);
    s.harvest_price.push_back(3.0);
    s.feb_futures.push_back(3.0);
    s.implied_vol.push_back(0.2);
    s.gdp_deflator.push_back(1.0);
  }
  // stocks equal to the previous year's (linear, hence exactly smoothed) production
  for (int i = 0; i < 12; ++i) s.stocks.push_back(8000.0 + 150.0 * (i == 0 ? 0 : i - 1));
  const auto r = normalize_stocks(s);
  for (double v : r) EXPECT_NEAR(v, 1.0, 1e-10);
  MarketSeries half = s;
  for (auto& v : half.stocks) v *= 0.5;
  const auto h = normalize_stocks(half);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(h[i], 0.5 * r[i], 1e-14);
}

TEST(Rebase, Arithmetic) {
  EXPECT_DOUBLE_EQ(rebase_price(4.0, 0.8), 5.0);
  EXPECT_DOUBLE_EQ(rebase_yield(150, 180, 160), 170);
  EXPECT_DOUBLE_EQ(rebase_yield(150, 160, 160), 150);
  EXPECT_DOUBLE_EQ(rebase_price(4.0, 1.0), 4.0);
}
