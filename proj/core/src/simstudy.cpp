#include "sqr/simstudy.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include <boost/math/distributions/beta.hpp>

#include "sqr/bspline.hpp"
#include "sqr/error.hpp"
#include "sqr/parallel.hpp"
#include "sqr/skew_normal.hpp"

namespace sqr {

void SimConfig::validate() const {
  if (years < 2 || counties < 1 || replicates < 1) throw InvalidArgument("SimConfig: counts must be positive");
  if (!(stocks_a > 0.0 && stocks_b > 0.0)) throw InvalidArgument("SimConfig: beta parameters must be positive");
}

double price_location(double s, PriceMode mode) {
  return mode == PriceMode::linear ? 0.2 - 0.4 * s : -0.2 + 0.4 * std::exp(-2.0 * s);
}

double price_scale(double s, PriceMode mode) {
  return mode == PriceMode::linear ? 0.5 - 0.5 * s : 0.5 * std::exp(-2.0 * s);
}

double yield_location(double p, double s) { return -25.0 + 14.45 * std::exp(p) + 22.18 * s; }

double yield_scale(double, double) { return 33.0; }

DetrendedPanel generate_panel(const SimConfig& c, const RandomStream& rng) {
  c.validate();
  const StandardizedSkewNormal ep(c.alpha_price);
  const StandardizedSkewNormal ey(c.alpha_yield);
  RandomStream stocks_rng = rng.child("stocks");
  RandomStream price_rng = rng.child("price");
  DetrendedPanel panel;
  const auto t = static_cast<std::size_t>(c.years);
  const auto n = static_cast<std::size_t>(c.counties);
  panel.years.resize(t);
  panel.price.resize(t);
  panel.stocks.resize(t);
  panel.obs_year.resize(t * n);
  panel.yield.resize(t * n);
  for (std::size_t i = 0; i < t; ++i) {
    const double s = stocks_rng.beta(c.stocks_a, c.stocks_b);
    const double p = price_location(s, c.price_mode) + price_scale(s, c.price_mode) * ep.draw(price_rng);
    panel.years[i] = static_cast<int>(i + 1);
    panel.stocks[i] = s;
    panel.price[i] = p;
    RandomStream yr = rng.child("yield").child(static_cast<std::uint64_t>(i));
    const double mu = yield_location(p, s);
    const double sd = yield_scale(p, s);
    for (std::size_t j = 0; j < n; ++j) {
      panel.obs_year[i * n + j] = i;
      panel.yield[i * n + j] = mu + sd * ey.draw(yr);
    }
  }
  return panel;
}

double true_quantile_price(double tau, double s, PriceMode mode, double alpha) {
  return price_location(s, mode) + price_scale(s, mode) * StandardizedSkewNormal(alpha).quantile(tau);
}

double true_quantile_yield(double tau, double p, double s, double alpha) {
  return yield_location(p, s) + yield_scale(p, s) * StandardizedSkewNormal(alpha).quantile(tau);
}

double true_joint_density(double y, double p, double s, PriceMode mode, double alpha_price, double alpha_yield) {
  const double sp = price_scale(s, mode);
  const double sy = yield_scale(p, s);
  const double gp = StandardizedSkewNormal(alpha_price).pdf((p - price_location(s, mode)) / sp) / sp;
  const double gy = StandardizedSkewNormal(alpha_yield).pdf((y - yield_location(p, s)) / sy) / sy;
  return gy * gp;
}

double beta_quantile(double p, double a, double b) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("beta_quantile: p outside [0, 1]");
  return boost::math::quantile(boost::math::beta_distribution<double>(a, b), p);
}

double DensityGrid::cell_area() const {
  if (y_axis.size() < 2 || p_axis.size() < 2) return 0.0;
  return (y_axis[1] - y_axis[0]) * (p_axis[1] - p_axis[0]);
}

double reference_bandwidth(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("reference_bandwidth: need at least two samples");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double iqr = sample_quantile_sorted(v, 0.75) - sample_quantile_sorted(v, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  if (!(spread > 0.0)) throw NumericError("reference_bandwidth: zero spread");
  return 1.06 * spread * std::pow(n, -0.2);
}

DensityGrid kde2d(std::span<const double> y, std::span<const double> p, std::size_t grid,
                  std::optional<std::pair<double, double>> bandwidths) {
  if (y.size() != p.size()) throw InvalidArgument("kde2d: coordinate lengths differ");
  if (y.size() < 2) throw InvalidArgument("kde2d: need at least two samples");
  if (grid < 2) throw InvalidArgument("kde2d: grid must have at least two points per axis");
  DensityGrid g;
  if (bandwidths) {
    if (!(bandwidths->first > 0.0 && bandwidths->second > 0.0)) throw InvalidArgument("kde2d: bandwidths must be positive");
    g.bandwidth_y = bandwidths->first;
    g.bandwidth_p = bandwidths->second;
  } else {
    g.bandwidth_y = reference_bandwidth(y);
    g.bandwidth_p = reference_bandwidth(p);
  }
  auto axis = [grid](std::span<const double> v, double h) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    std::vector<double> a(grid);
    const double a0 = *lo - 3.0 * h;
    const double a1 = *hi + 3.0 * h;
    for (std::size_t i = 0; i < grid; ++i) a[i] = a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(grid - 1);
    return a;
  };
  g.y_axis = axis(y, g.bandwidth_y);
  g.p_axis = axis(p, g.bandwidth_p);

  // Kernel weights factorize: K(y) K(p) summed over samples = Ky' Kp.
  const auto n = static_cast<Eigen::Index>(y.size());
  const auto m = static_cast<Eigen::Index>(grid);
  Eigen::MatrixXd ky(m, n), kp(m, n);
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const double zy = (g.y_axis[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(r)]) / g.bandwidth_y;
      const double zp = (g.p_axis[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(r)]) / g.bandwidth_p;
      ky(i, r) = inv_sqrt_2pi * std::exp(-0.5 * zy * zy) / g.bandwidth_y;
      kp(i, r) = inv_sqrt_2pi * std::exp(-0.5 * zp * zp) / g.bandwidth_p;
    }
  }
  g.values = ky * kp.transpose() / static_cast<double>(n);
  return g;
}

double mise(const DensityGrid& estimate, const std::function<double(double, double)>& truth) {
  const auto& v = estimate.values;
  if (v.rows() != static_cast<Eigen::Index>(estimate.y_axis.size()) ||
      v.cols() != static_cast<Eigen::Index>(estimate.p_axis.size()) || v.size() == 0)
    throw InvalidArgument("mise: grid shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double d = v(i, j) - truth(estimate.y_axis[static_cast<std::size_t>(i)], estimate.p_axis[static_cast<std::size_t>(j)]);
      total += d * d;
    }
  return total / static_cast<double>(v.size());
}

double mise(const DensityGrid& estimate, const DensityGrid& truth) {
  if (estimate.y_axis != truth.y_axis || estimate.p_axis != truth.p_axis ||
      estimate.values.rows() != truth.values.rows() || estimate.values.cols() != truth.values.cols())
    throw InvalidArgument("mise: grids differ");
  return (estimate.values - truth.values).squaredNorm() / static_cast<double>(estimate.values.size());
}

JointModelOptions simulation_model_options() {
  JointModelOptions o;
  o.price_support = Interval{-1.0, 1.0};
  o.stock_support = Interval{0.0, 1.0};
  return o;
}

namespace {

std::vector<double> default_curve_stocks(const SimConfig& c) {
  const double lo = beta_quantile(0.005, c.stocks_a, c.stocks_b);
  const double hi = beta_quantile(0.995, c.stocks_a, c.stocks_b);
  std::vector<double> s(50);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = lo + (hi - lo) * static_cast<double>(i) / 49.0;
  return s;
}

}  // namespace

SimStudyResult run_simstudy(const SimStudyOptions& o, const RandomStream& rng) {
  o.config.validate();
  if (o.draws < 2) throw InvalidArgument("run_simstudy: need at least two draws");
  SimStudyResult res;
  res.curve_stocks = o.curve_stocks.empty() ? default_curve_stocks(o.config) : o.curve_stocks;
  res.curve_taus = o.curve_taus;
  res.density_stocks = o.density_stocks;
  const auto m = static_cast<std::size_t>(o.config.replicates);
  const auto nt = static_cast<Eigen::Index>(o.curve_taus.size());
  const auto ns = static_cast<Eigen::Index>(res.curve_stocks.size());

  JointModelOptions model_options = o.model;
  model_options.fit_yield = !o.price_only;
  model_options.workers = 1;
  const PriceMode mode = o.config.price_mode;
  const double ap = o.config.alpha_price;
  const double ay = o.config.alpha_yield;

  res.replicates.resize(m);
  std::mutex progress_guard;
  parallel_for(m, o.workers, [&](std::size_t r) {
    const RandomStream rep = rng.child(static_cast<std::uint64_t>(r));
    const DetrendedPanel panel = generate_panel(o.config, rep.child("panel"));
    const JointModel model = fit_conditional(panel, model_options);
    SimReplicate out;
    out.price_lambda = model.price_lambda;
    out.yield_lambda = model.yield_lambda;
    out.price_curves.resize(nt, ns);
    for (Eigen::Index j = 0; j < ns; ++j) {
      const std::vector<double> q = model.price_quantiles(res.curve_stocks[static_cast<std::size_t>(j)]);
      for (Eigen::Index i = 0; i < nt; ++i) out.price_curves(i, j) = model.interpolate(q, o.curve_taus[static_cast<std::size_t>(i)]);
    }
    if (!o.price_only) {
      for (std::size_t k = 0; k < o.density_stocks.size(); ++k) {
        const double s = o.density_stocks[k];
        const JointDraws d = sample_conditional(model, s, o.draws, rep.child("draws").child(k));
        const DensityGrid g = kde2d(d.yield_detrended, d.price_detrended, o.density_grid);
        out.mise.push_back(mise(g, [&](double y, double p) { return true_joint_density(y, p, s, mode, ap, ay); }));
        out.clamp_fraction.push_back(d.clamp_fraction());
      }
    }
    res.replicates[r] = std::move(out);
    if (o.progress) {
      std::lock_guard lock(progress_guard);
      o.progress(r);
    }
  });

  if (!o.price_only) {
    res.mean_mise.assign(o.density_stocks.size(), 0.0);
    for (const auto& rep : res.replicates)
      for (std::size_t k = 0; k < rep.mise.size(); ++k) res.mean_mise[k] += rep.mise[k] / static_cast<double>(m);
  }

  res.true_curves.resize(nt, ns);
  res.band_lower.resize(nt, ns);
  res.band_upper.resize(nt, ns);
  res.coverage.assign(static_cast<std::size_t>(nt), 0.0);
  std::vector<double> column(m);
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index j = 0; j < ns; ++j) {
      for (std::size_t r = 0; r < m; ++r) column[r] = res.replicates[r].price_curves(i, j);
      std::sort(column.begin(), column.end());
      res.band_lower(i, j) = sample_quantile_sorted(column, 0.025);
      res.band_upper(i, j) = sample_quantile_sorted(column, 0.975);
      res.true_curves(i, j) =
          true_quantile_price(o.curve_taus[static_cast<std::size_t>(i)], res.curve_stocks[static_cast<std::size_t>(j)], mode, ap);
      if (res.true_curves(i, j) >= res.band_lower(i, j) && res.true_curves(i, j) <= res.band_upper(i, j))
        res.coverage[static_cast<std::size_t>(i)] += 1.0 / static_cast<double>(ns);
    }
  }
  return res;
}

}  // namespace sqr
