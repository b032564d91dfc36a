#include <gtest/gtest.h>

#include <cmath>

#include "sqr/error.hpp"
#include "sqr/premium.hpp"
#include "sqr/random.hpp"

using namespace sqr;

namespace {

// Independent tail via lgamma, no shortcuts.
double lgamma_tail(int k, int n) {
  double s = 0.0;
  for (int i = std::max(k, 0); i <= n; ++i)
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return s;
}

struct Fixture {
  std::vector<double> stocks, futures, iv;
  TrendModel price_trend, yield_trend;
  JointModel conditional, unconditional;
  StockChannelModel channels;
};

// Synthetic market with stock effects in futures and IV and a yield model
// that does not depend on stocks.
Fixture make_fixture(std::uint64_t seed) {
  Fixture f;
  RandomStream rng(seed);
  std::vector<double> t, lp, ty, y;
  DetrendedPanel panel;
  for (int year = 1; year <= 40; ++year) {
    const double s = rng.beta(7, 44);
    f.stocks.push_back(s);
    f.futures.push_back(std::exp(1.3 - 2.0 * (s - 0.137) + 0.05 * rng.normal()));
    f.iv.push_back(0.25 - 0.5 * (s - 0.137) + 0.01 * rng.normal());
    t.push_back(year);
    const double p_tilde = 0.15 * rng.normal();
    lp.push_back(1.3 + p_tilde);
    panel.years.push_back(1980 + year);
    panel.price.push_back(p_tilde);
    panel.stocks.push_back(s);
    for (int j = 0; j < 25; ++j) {
      const double y_tilde = -30.0 * p_tilde + 12.0 * rng.normal();
      ty.push_back(year);
      y.push_back(150 + y_tilde);
      panel.obs_year.push_back(static_cast<std::size_t>(year - 1));
      panel.yield.push_back(y_tilde);
    }
  }
  f.price_trend = fit_trend(t, lp, 40);
  f.yield_trend = fit_trend(ty, y, 40);
  JointModelOptions o;
  o.price_lambda = 1.0;
  o.yield_lambda = 10.0;
  f.conditional = fit_conditional(panel, o);
  f.unconditional = fit_unconditional(panel, o);
  f.channels = fit_stock_channels(f.stocks, f.futures, f.iv);
  return f;
}

}  // namespace

TEST(Indemnity, Arithmetic) {
  EXPECT_DOUBLE_EQ(indemnity(0.85, 4, 150, 3, 120), 150.0);
  EXPECT_DOUBLE_EQ(indemnity(0.85, 4, 150, 5, 150), 0.0);
  EXPECT_DOUBLE_EQ(indemnity(0.85, 4, 150, 3, 0), 0.85 * 4 * 150);
}

TEST(Indemnity, ConvexInRevenue) {
  // along the line revenue = p * y with y fixed
  for (double a = 0.05; a < 10.0; a += 0.05)
    for (double b = a + 0.05; b < 10.0; b += 0.37) {
      const double ia = indemnity(0.7, 4.0, 1.0, a, 1.0);
      const double ib = indemnity(0.7, 4.0, 1.0, b, 1.0);
      for (double w : {0.1, 0.25, 0.5, 0.9}) {
        const double im = indemnity(0.7, 4.0, 1.0, w * a + (1 - w) * b, 1.0);
        EXPECT_LE(im, w * ia + (1 - w) * ib + 1e-12);
      }
    }
}

TEST(StockChannels, ConstantFuturesGiveFlatCurve) {
  std::vector<double> s, fut, iv;
  RandomStream rng(1);
  for (int i = 0; i < 29; ++i) {
    s.push_back(0.05 + 0.2 * rng.uniform());
    fut.push_back(3.5);
    iv.push_back(0.2 + 0.01 * rng.normal());
  }
  const auto m = fit_stock_channels(s, fut, iv);
  for (double x : {0.06, 0.1, 0.2}) EXPECT_NEAR(m.futures_level(x), 3.5, 1e-9);
  EXPECT_NEAR(m.futures.sigma2, 0.0, 1e-20);
}

TEST(StockChannels, DecreasingVolatilityAndGram) {
  std::vector<double> s, fut, iv;
  RandomStream rng(2);
  for (int i = 0; i < 60; ++i) {
    s.push_back(rng.beta(7, 44));
    fut.push_back(std::exp(1.2 - s.back()));
    iv.push_back(0.35 - 0.8 * s.back() + 0.005 * rng.normal());
  }
  const auto m = fit_stock_channels(s, fut, iv);
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  double prev = 1e300;
  for (int k = 0; k <= 50; ++k) {
    const double x = *lo + (*hi - *lo) * k / 50.0;
    const double v = m.iv_level(x);
    EXPECT_LT(v, prev + 1e-9);
    prev = v;
  }
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m.futures.gram.rows(), m.futures.gram.cols());
  for (double x : s) g += m.futures.basis.evaluate(x) * m.futures.basis.evaluate(x).transpose();
  g /= static_cast<double>(s.size());
  EXPECT_LT((g - m.futures.gram).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((g - m.iv.gram).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Premium, DeterministicShortfall) {
  RevenueDraws d;
  d.futures.assign(10, 4.0);
  d.price.assign(10, 3.0);
  d.yield.assign(10, 100.0);
  // 0.875 * 4 * 100 - 300 = 50
  EXPECT_DOUBLE_EQ(premium_from_draws(d, 0.875, 100.0), 50.0);
  d.price.assign(10, 10.0);
  EXPECT_DOUBLE_EQ(premium_from_draws(d, 0.875, 100.0), 0.0);
}

TEST(Premium, MonotoneInCoverage) {
  const Fixture f = make_fixture(3);
  PremiumOptions o;
  o.draws = 4000;
  double prev = -1.0;
  for (double psi : {0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95}) {
    const double p = simulate_premium(ChannelKind::three_channel, f.conditional, f.channels, f.price_trend,
                                      f.yield_trend, 40.0, 0.12, psi, 150.0, o, RandomStream(8));
    EXPECT_GE(p, prev);
    prev = p;
  }
  EXPECT_GT(prev, 0.0);
  // far below any plausible revenue
  EXPECT_EQ(simulate_premium(ChannelKind::two_channel, f.unconditional, f.channels, f.price_trend, f.yield_trend,
                             40.0, 0.12, 0.01, 1.0, o, RandomStream(8)),
            0.0);
}

TEST(Premium, ChannelsAgreeWithoutStocksInYield) {
  const Fixture f = make_fixture(4);
  PremiumOptions o;
  o.draws = 20000;
  const RandomStream rng(10);
  const RevenueDraws d2 = simulate_revenue(ChannelKind::two_channel, f.unconditional, f.channels, f.price_trend,
                                           f.yield_trend, 40.0, 0.137, o, rng);
  const RevenueDraws d3 = simulate_revenue(ChannelKind::three_channel, f.conditional, f.channels, f.price_trend,
                                           f.yield_trend, 40.0, 0.137, o, rng);
  // coupled streams: identical futures and prices
  EXPECT_EQ(d2.futures, d3.futures);
  EXPECT_EQ(d2.price, d3.price);
  auto stats = [](const RevenueDraws& d) {
    double s = 0, ss = 0;
    for (std::size_t r = 0; r < d.price.size(); ++r) {
      const double v = indemnity(0.85, d.futures[r], 150.0, d.price[r], d.yield[r]);
      s += v;
      ss += v * v;
    }
    const double n = static_cast<double>(d.price.size());
    return std::pair{s / n, std::sqrt((ss / n - s * s / n / n) / n)};
  };
  const auto [p2, se2] = stats(d2);
  const auto [p3, se3] = stats(d3);
  EXPECT_LT(std::abs(p2 - p3), 2.0 * std::hypot(se2, se3));
}

TEST(Aph, TrailingMean) {
  std::vector<int> years{2000, 2001, 2002, 2004, 2010, 2011};
  std::vector<double> y{100, 110, 120, 130, 140, 150};
  const auto a = aph_yield(years, y, 2005, 10);
  EXPECT_DOUBLE_EQ(a.value, 115.0);
  EXPECT_EQ(a.years_used, 4u);
  EXPECT_FALSE(a.complete);
  const auto b = aph_yield(years, y, 2012, 2);
  EXPECT_DOUBLE_EQ(b.value, 145.0);
  EXPECT_TRUE(b.complete);
}

TEST(LossRatio, Examples) {
  std::vector<double> ind{1, 2, 3}, prem{1, 2, 3}, zero{0, 0, 0}, doubled{2, 4, 6};
  EXPECT_DOUBLE_EQ(loss_ratio(ind, prem), 1.0);
  EXPECT_DOUBLE_EQ(loss_ratio(zero, prem), 0.0);
  EXPECT_DOUBLE_EQ(loss_ratio(ind, doubled), 0.5);
}

TEST(Binomial, PublishedPValues) {
  const std::vector<std::pair<int, double>> expected{{15, 0.5000}, {16, 0.3555}, {17, 0.2291}, {19, 0.0680}, {21, 0.0121}};
  for (const auto& [k, p] : expected) EXPECT_NEAR(binomial_upper_tail(k, 29), p, 5e-4) << k;
}

TEST(Binomial, MatchesLogGammaSummation) {
  for (int n = 0; n <= 64; ++n)
    for (int k = 0; k <= n + 1; ++k) {
      const double a = binomial_upper_tail(k, n);
      const double b = lgamma_tail(k, n);
      EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, b)) << k << " of " << n;
    }
  EXPECT_EQ(binomial_upper_tail(29, 29), std::ldexp(1.0, -29));
}

TEST(Binomial, NonIncreasingInK) {
  for (int k = 1; k <= 30; ++k) EXPECT_LE(binomial_upper_tail(k, 29), binomial_upper_tail(k - 1, 29));
}

TEST(RatingGame, IdenticalRatesTie) {
  std::vector<RatingPolicy> p;
  for (int year = 0; year < 10; ++year)
    for (int j = 0; j < 5; ++j) p.push_back({year, j * 1.0, 3.0 + j, 3.0 + j});
  const auto r = rating_game(p);
  EXPECT_EQ(r.d_star, 0);
  EXPECT_EQ(r.years_used, 10);
  for (const auto& y : r.years) EXPECT_EQ(y.d, 1.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(RatingGame, CandidateThatSpotsLossesWins) {
  // The candidate rates the loss-making policies higher and cedes them.
  std::vector<RatingPolicy> p;
  for (int year = 0; year < 12; ++year) {
    p.push_back({year, 10.0, 12.0, 5.0});
    p.push_back({year, 0.0, 2.0, 5.0});
    p.push_back({year, 8.0, 9.0, 5.0});
    p.push_back({year, 1.0, 3.0, 5.0});
  }
  const auto r = rating_game(p);
  EXPECT_EQ(r.years_used, 12);
  EXPECT_EQ(r.d_star, 12);
  EXPECT_NEAR(r.p_value, std::ldexp(1.0, -12), 1e-18);
}

TEST(RatingGame, EmptyBucketExcludesYear) {
  std::vector<RatingPolicy> p{{1, 1.0, 4.0, 2.0}, {1, 2.0, 5.0, 3.0}};
  const auto r = rating_game(p);
  EXPECT_EQ(r.years_used, 0);
  EXPECT_EQ(r.years_excluded, 1);
}
