#include "sqr/trend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "sqr/error.hpp"
#include "sqr/quantile_fit.hpp"

namespace sqr {

Eigen::VectorXd TrendModel::design_vector(double x) const {
  const Interval s = basis.support();
  if (s.contains(x)) return basis.evaluate(x);
  const double edge = x > s.upper ? s.upper : s.lower;
  return basis.evaluate(edge) + (x - edge) * basis.derivative(edge);
}

double TrendModel::mean(double x) const { return design_vector(x).dot(coefficients); }

double TrendModel::variance(double x) const {
  const Eigen::VectorXd b = design_vector(x);
  Eigen::VectorXd solved;
  if (gram_singular) {
    solved = gram.completeOrthogonalDecomposition().pseudoInverse() * b;
  } else {
    solved = gram.ldlt().solve(b);
  }
  const double v = sigma2 / sample_count * b.dot(solved);
  if (!std::isfinite(v)) throw NumericError("TrendModel::variance: non-finite variance");
  return std::max(v, 0.0);
}

namespace {

struct GroupedDesign {
  Eigen::MatrixXd rows;          // one per distinct x
  Eigen::VectorXd counts;        // observations per distinct x
  Eigen::VectorXd sums;          // sum of y per distinct x
  std::vector<std::size_t> group_of;
};

GroupedDesign group_design(const BSplineBasis& basis, std::span<const double> xs, std::span<const double> ys,
                           bool clamp) {
  std::map<double, std::size_t> index;
  GroupedDesign gd;
  gd.group_of.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto [it, inserted] = index.emplace(xs[i], index.size());
    gd.group_of[i] = it->second;
  }
  const auto g = static_cast<Eigen::Index>(index.size());
  gd.rows.resize(g, static_cast<Eigen::Index>(basis.size()));
  for (const auto& [x, k] : index) gd.rows.row(static_cast<Eigen::Index>(k)) = basis.evaluate(x, clamp).transpose();
  gd.counts = Eigen::VectorXd::Zero(g);
  gd.sums = Eigen::VectorXd::Zero(g);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    gd.counts[static_cast<Eigen::Index>(gd.group_of[i])] += 1.0;
    gd.sums[static_cast<Eigen::Index>(gd.group_of[i])] += ys[i];
  }
  return gd;
}

}  // namespace

TrendModel fit_penalized_spline(const BSplineBasis& basis, std::span<const double> xs, std::span<const double> ys,
                                std::span<const double> gram_points, std::span<const double> lambda_grid,
                                int difference_order, bool clamp) {
  if (xs.size() != ys.size()) throw InvalidArgument("fit_penalized_spline: xs and ys differ in length");
  if (xs.size() < 2) throw InvalidArgument("fit_penalized_spline: need at least two observations");
  if (lambda_grid.empty()) throw InvalidArgument("fit_penalized_spline: empty lambda grid");
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw InvalidArgument("fit_penalized_spline: non-finite input");

  const GroupedDesign gd = group_design(basis, xs, ys, clamp);
  if (gd.rows.rows() < 2) throw InvalidArgument("fit_penalized_spline: need at least two distinct design points");
  const auto p = static_cast<Eigen::Index>(basis.size());
  const Eigen::MatrixXd xtx = gd.rows.transpose() * gd.counts.asDiagonal() * gd.rows;
  const Eigen::VectorXd xty = gd.rows.transpose() * gd.sums;
  Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(p, p);
  if (p > difference_order) penalty = difference_matrix(difference_order, static_cast<int>(p)).gram();
  const double n = static_cast<double>(xs.size());

  double yy = 0.0;
  for (double y : ys) yy += y * y;

  TrendModel best{basis, {}, 0.0, 0.0, {}, n, std::numeric_limits<double>::infinity(), false};
  bool found = false;
  for (double lambda : lambda_grid) {
    const Eigen::MatrixXd normal = xtx + 0.5 * lambda * penalty;
    const auto ldlt = normal.ldlt();
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 1e-13 * normal.diagonal().maxCoeff()).all()) {
      if (lambda_grid.size() == 1)
        throw NumericError("fit_penalized_spline: singular normal equations at lambda = " + std::to_string(lambda));
      continue;
    }
    const Eigen::VectorXd beta = ldlt.solve(xty);
    const double trace_h = ldlt.solve(xtx).trace();
    // RSS = y'y - 2 b'X'y + b'X'Xb
    double rss = yy - 2.0 * beta.dot(xty) + beta.dot(xtx * beta);
    rss = std::max(rss, 0.0);
    const double denom = n - trace_h;
    const double crit = denom > 0.0 ? rss / denom : std::numeric_limits<double>::quiet_NaN();
    if (lambda_grid.size() > 1 && !std::isfinite(crit)) continue;
    if (!found || crit <= best.criterion || lambda_grid.size() == 1) {
      best.coefficients = beta;
      best.lambda = lambda;
      best.criterion = crit;
      found = true;
    }
  }
  if (!found) throw NumericError("fit_penalized_spline: no admissible lambda on the grid");

  // Exact residual variance from per-observation residuals.
  const Eigen::VectorXd per_group = gd.rows * best.coefficients;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - per_group[static_cast<Eigen::Index>(gd.group_of[i])];
    ss += r * r;
  }
  best.sigma2 = ss / (n - 1.0);

  best.gram = Eigen::MatrixXd::Zero(p, p);
  for (double t : gram_points) {
    const Eigen::VectorXd b = basis.evaluate(t, clamp);
    best.gram += b * b.transpose();
  }
  best.gram /= static_cast<double>(std::max<std::size_t>(gram_points.size(), 1));
  const auto check = best.gram.ldlt();
  best.gram_singular = check.info() != Eigen::Success ||
                       !(check.vectorD().array() > 1e-12 * std::max(best.gram.diagonal().maxCoeff(), 1e-300)).all();
  return best;
}

namespace {

BSplineBasis trend_basis(int horizon, const TrendOptions& options) {
  if (horizon < 1) throw InvalidArgument("fit_trend: horizon must be >= 1");
  if (options.knot_spacing_years < 1) throw InvalidArgument("fit_trend: knot spacing must be >= 1");
  const int intervals = std::max(1, (horizon + options.knot_spacing_years - 1) / options.knot_spacing_years);
  return BSplineBasis::equally_spaced(options.degree, intervals, {0.0, static_cast<double>(horizon)});
}

std::vector<double> gram_times(int horizon) {
  std::vector<double> t(static_cast<std::size_t>(horizon));
  std::iota(t.begin(), t.end(), 1.0);
  return t;
}

void check_times(std::span<const double> times) {
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 2)
    throw InvalidArgument("fit_trend: need at least two distinct times");
}

}  // namespace

TrendModel fit_trend(std::span<const double> times, std::span<const double> values, int horizon,
                     const TrendOptions& options) {
  check_times(times);
  const BSplineBasis basis = trend_basis(horizon, options);
  const std::vector<double> grid = options.lambda_grid.empty() ? default_lambda_grid() : options.lambda_grid;
  const auto points = gram_times(horizon);
  return fit_penalized_spline(basis, times, values, points, grid, options.difference_order);
}

TrendModel fit_trend_fixed(std::span<const double> times, std::span<const double> values, int horizon, double lambda,
                           const TrendOptions& options) {
  check_times(times);
  const BSplineBasis basis = trend_basis(horizon, options);
  const double grid[] = {lambda};
  const auto points = gram_times(horizon);
  return fit_penalized_spline(basis, times, values, points, grid, options.difference_order);
}

std::vector<double> detrend(std::span<const double> values, std::span<const double> times, const TrendModel& model,
                            DetrendMode mode) {
  if (values.size() != times.size()) throw InvalidArgument("detrend: values and times differ in length");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (mode == DetrendMode::log_price) {
      if (!(v > 0.0)) throw InvalidArgument("detrend: nonpositive price in log mode");
      v = std::log(v);
    }
    out[i] = v - model.mean(times[i]);
  }
  return out;
}

std::vector<double> retrend(std::span<const double> detrended, std::span<const double> times,
                            const TrendModel& model, DetrendMode mode) {
  if (detrended.size() != times.size()) throw InvalidArgument("retrend: values and times differ in length");
  std::vector<double> out(detrended.size());
  for (std::size_t i = 0; i < detrended.size(); ++i) {
    const double v = detrended[i] + model.mean(times[i]);
    out[i] = mode == DetrendMode::log_price ? std::exp(v) : v;
  }
  return out;
}

double draw_trend(const TrendModel& model, double t, RandomStream& rng) {
  const double mean = model.mean(t);
  const double var = model.variance(t);
  if (var == 0.0) return mean;
  return rng.normal(mean, std::sqrt(var));
}

std::vector<double> loess_smooth(std::span<const double> x, std::span<const double> y, std::span<const double> query,
                                 double span, int degree) {
  if (x.size() != y.size()) throw InvalidArgument("loess_smooth: x and y differ in length");
  if (degree < 0 || degree > 2) throw InvalidArgument("loess_smooth: degree must be 0, 1 or 2");
  if (!(span > 0.0)) throw InvalidArgument("loess_smooth: span must be positive");
  const std::size_t n = x.size();
  const auto q = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(span * static_cast<double>(n))));
  const auto need = static_cast<std::size_t>(degree + 2);
  if (q < need) throw NumericError("loess_smooth: window holds fewer than degree + 2 points");

  std::vector<double> out(query.size());
  std::vector<double> dist(n);
  for (std::size_t k = 0; k < query.size(); ++k) {
    const double x0 = query[k];
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::abs(x[i] - x0);
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q - 1), sorted.end());
    double h = sorted[q - 1];
    if (span > 1.0) h *= span;
    // Widen slightly so the q-th neighbour keeps a positive weight.
    h = h > 0.0 ? h * (1.0 + 1e-8) : 0.0;

    const auto cols = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(cols, cols);
    Eigen::VectorXd xtwy = Eigen::VectorXd::Zero(cols);
    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double w;
      if (h == 0.0) {
        w = dist[i] == 0.0 ? 1.0 : 0.0;
      } else {
        const double u = dist[i] / h;
        if (u >= 1.0) continue;
        const double c = 1.0 - u * u * u;
        w = c * c * c;
      }
      if (w <= 0.0) continue;
      ++active;
      Eigen::VectorXd row(cols);
      const double dx = x[i] - x0;
      row[0] = 1.0;
      if (degree >= 1) row[1] = dx;
      if (degree >= 2) row[2] = dx * dx;
      xtwx += w * row * row.transpose();
      xtwy += w * y[i] * row;
    }
    if (active == 0) throw NumericError("loess_smooth: empty window");
    if (h == 0.0 || active <= static_cast<std::size_t>(degree)) {
      out[k] = xtwy[0] / xtwx(0, 0);
      continue;
    }
    const Eigen::VectorXd coef = xtwx.completeOrthogonalDecomposition().solve(xtwy);
    out[k] = coef[0];
  }
  return out;
}

std::vector<double> normalize_stocks(const MarketSeries& series, double span) {
  const std::size_t n = series.size();
  if (n == 0) throw InvalidArgument("normalize_stocks: empty series");
  if (series.stocks.size() != n || series.national_production.size() != n)
    throw InvalidArgument("normalize_stocks: column length mismatch");
  std::vector<double> years(n);
  for (std::size_t i = 0; i < n; ++i) years[i] = series.year[i];
  const std::vector<double> smooth =
      n >= 3 ? loess_smooth(years, series.national_production, years, span, 1)
             : std::vector<double>(series.national_production.begin(), series.national_production.end());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t prior = i;
    if (i > 0) {
      if (series.year[i - 1] != series.year[i] - 1)
        throw InvalidArgument("normalize_stocks: missing production for year " + std::to_string(series.year[i] - 1));
      prior = i - 1;
    }
    if (!(smooth[prior] > 0.0))
      throw NumericError("normalize_stocks: nonpositive smoothed production in year " +
                         std::to_string(series.year[prior]));
    out[i] = series.stocks[i] / smooth[prior];
  }
  return out;
}

double rebase_price(double price, double deflator) {
  if (!(deflator > 0.0)) throw InvalidArgument("rebase_price: deflator must be positive");
  return price / deflator;
}

double rebase_yield(double yield, double trend_at_base, double trend_at_t) { return yield + trend_at_base - trend_at_t; }

}  // namespace sqr
