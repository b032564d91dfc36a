#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sqr/bspline.hpp"
#include "sqr/market_data.hpp"
#include "sqr/random.hpp"

namespace sqr {

/// Penalized B-spline least-squares fit with the pieces needed to draw from
/// the asymptotic normal approximation of the fitted curve.
struct TrendModel {
  BSplineBasis basis;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  /// sum of squared residuals / (n - 1).
  double sigma2 = 0.0;
  /// (1/T) sum_t B(t) B(t)' over the distinct design points.
  Eigen::MatrixXd gram;
  /// n in the draw variance sigma2 / n (T for a yearly series, sum n_t for a panel).
  double sample_count = 0.0;
  /// Least-squares GACV value at the selected lambda.
  double criterion = 0.0;
  bool gram_singular = false;

  /// Design vector at x; beyond the support the spline is continued linearly
  /// from the boundary value and slope.
  Eigen::VectorXd design_vector(double x) const;
  double mean(double x) const;
  /// (sigma2 / n) b(x)' G^{-1} b(x); pseudo-inverse when G is singular.
  double variance(double x) const;
};

struct TrendOptions {
  int degree = 3;
  int knot_spacing_years = 10;
  int difference_order = 2;
  std::vector<double> lambda_grid;  // empty: default 25-point grid on [1e-4, 1e4]
};

/// Minimizes sum (y - B(x)'b)^2 + (lambda / 2) b' D'D b for a given basis.
/// lambda is chosen on the grid by RSS / (n - tr H). `gram_points` are the
/// distinct design points averaged into G.
TrendModel fit_penalized_spline(const BSplineBasis& basis, std::span<const double> xs, std::span<const double> ys,
                                std::span<const double> gram_points, std::span<const double> lambda_grid,
                                int difference_order = 2, bool clamp = false);

/// Yearly trend on time index t = 1..T with support [0, T], cubic basis and
/// K_n = ceil(T / knot_spacing) equally spaced intervals.
TrendModel fit_trend(std::span<const double> times, std::span<const double> values, int horizon,
                     const TrendOptions& options = {});

/// Same with a fixed smoothing parameter.
TrendModel fit_trend_fixed(std::span<const double> times, std::span<const double> values, int horizon, double lambda,
                           const TrendOptions& options = {});

enum class DetrendMode { log_price, level_yield };

/// log(v) - trend(t) for prices, v - trend(t) for yields.
std::vector<double> detrend(std::span<const double> values, std::span<const double> times, const TrendModel& model,
                            DetrendMode mode);
/// Inverse of detrend.
std::vector<double> retrend(std::span<const double> detrended, std::span<const double> times,
                            const TrendModel& model, DetrendMode mode);

/// One draw from N(mean(t), variance(t)).
double draw_trend(const TrendModel& model, double t, RandomStream& rng);

/// Tricube-weighted local polynomial fit (degree 1 or 2) using the
/// ceil(span * n) nearest neighbours of each query point.
std::vector<double> loess_smooth(std::span<const double> x, std::span<const double> y, std::span<const double> query,
                                 double span = 0.75, int degree = 1);

/// Production-normalized carryover stocks s_t / x_{t-1}, where x is the LOESS
/// smooth of national production over years. The first year divides by its
/// own smoothed value.
std::vector<double> normalize_stocks(const MarketSeries& series, double span = 0.75);

/// p_t / GDPDEF_t.
double rebase_price(double price, double deflator);
/// y + trend(base) - trend(t).
double rebase_yield(double yield, double trend_at_base, double trend_at_t);

}  // namespace sqr
