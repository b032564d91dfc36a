#include "sqr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include <boost/math/distributions/students_t.hpp>

#include "sqr/error.hpp"
#include "sqr/parallel.hpp"
#include "sqr/trend.hpp"

namespace sqr {

double sample_mean(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("sample_mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("sample_sd: need at least two values");
  const double m = sample_mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double sample_correlation(std::span<const double> x, std::span<const double> y) {
  return moments_from_draws(x, y).correlation;
}

Moments moments_from_draws(std::span<const double> price, std::span<const double> yield) {
  if (price.size() != yield.size()) throw InvalidArgument("moments_from_draws: coordinate lengths differ");
  if (price.size() < 2) throw InvalidArgument("moments_from_draws: need at least two draws");
  Moments m;
  m.count = price.size();
  m.mean_price = sample_mean(price);
  m.mean_yield = sample_mean(yield);
  double spp = 0.0, syy = 0.0, spy = 0.0;
  for (std::size_t i = 0; i < price.size(); ++i) {
    const double a = price[i] - m.mean_price;
    const double b = yield[i] - m.mean_yield;
    spp += a * a;
    syy += b * b;
    spy += a * b;
  }
  const double d = static_cast<double>(m.count - 1);
  m.sd_price = std::sqrt(spp / d);
  m.sd_yield = std::sqrt(syy / d);
  m.covariance = spy / d;
  if (!(spp > 0.0) || !(syy > 0.0)) throw NumericError("moments_from_draws: zero variance, correlation undefined");
  m.correlation = std::clamp(spy / std::sqrt(spp * syy), -1.0, 1.0);
  return m;
}

Moments moments_from_draws(const JointDraws& draws) {
  if (!draws.price.empty()) return moments_from_draws(draws.price, draws.yield);
  return moments_from_draws(draws.price_detrended, draws.yield_detrended);
}

std::vector<std::size_t> jackknife_groups(std::span<const std::string> county, std::span<const int> year,
                                          std::size_t groups, JackknifeGrouping grouping) {
  if (county.size() != year.size()) throw InvalidArgument("jackknife_groups: column lengths differ");
  if (groups < 2) throw InvalidArgument("jackknife_groups: need at least two groups");
  const std::size_t n = county.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(county[a], year[a]) < std::tie(county[b], year[b]);
  });
  std::vector<std::size_t> out(n);
  if (grouping == JackknifeGrouping::round_robin) {
    if (n < groups) throw InvalidArgument("jackknife_groups: fewer records than groups");
    for (std::size_t k = 0; k < n; ++k) out[order[k]] = k % groups;
  } else {
    std::map<std::string, std::size_t> county_group;
    for (std::size_t k : order) county_group.emplace(county[k], 0);
    if (county_group.size() < groups) throw InvalidArgument("jackknife_groups: fewer counties than groups");
    std::size_t next = 0;
    for (auto& [name, g] : county_group) g = next++ % groups;
    for (std::size_t i = 0; i < n; ++i) out[i] = county_group.at(county[i]);
  }
  return out;
}

JackknifeResult jackknife_variance(
    std::span<const std::size_t> group_of, std::size_t groups,
    const std::function<std::vector<double>(const std::vector<char>& keep, std::size_t group)>& estimate,
    std::size_t workers) {
  if (groups < 2) throw InvalidArgument("jackknife_variance: need at least two groups");
  for (std::size_t g : group_of)
    if (g >= groups) throw InvalidArgument("jackknife_variance: group index out of range");
  JackknifeResult res;
  res.replicates.resize(groups);
  parallel_for(groups, workers, [&](std::size_t b) {
    std::vector<char> keep(group_of.size());
    for (std::size_t i = 0; i < group_of.size(); ++i) keep[i] = group_of[i] != b;
    try {
      res.replicates[b] = estimate(keep, b);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "jackknife group " << b << " failed: " << e.what();
      throw NumericError(msg.str());
    }
  });
  const std::size_t k = res.replicates.front().size();
  for (const auto& r : res.replicates)
    if (r.size() != k) throw NumericError("jackknife_variance: replicate estimates differ in length");
  res.mean.assign(k, 0.0);
  res.variance.assign(k, 0.0);
  const double b = static_cast<double>(groups);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> column(groups);
    for (std::size_t g = 0; g < groups; ++g) column[g] = res.replicates[g][j];
    res.mean[j] = std::accumulate(column.begin(), column.end(), 0.0) / b;
    res.variance[j] = jackknife_variance(column);
  }
  return res;
}

double jackknife_variance(std::span<const double> replicates) {
  if (replicates.size() < 2) throw InvalidArgument("jackknife_variance: need at least two replicates");
  const double b = static_cast<double>(replicates.size());
  const double mean = std::accumulate(replicates.begin(), replicates.end(), 0.0) / b;
  double ss = 0.0;
  for (double v : replicates) ss += (v - mean) * (v - mean);
  return (b - 1.0) / b * ss;
}

AR1Fit fit_ar1(std::span<const std::string> county, std::span<const int> year, std::span<const double> residual,
               const std::string& state) {
  if (county.size() != year.size() || year.size() != residual.size())
    throw InvalidArgument("fit_ar1: column lengths differ");
  std::map<std::pair<std::string, int>, double> lookup;
  for (std::size_t i = 0; i < county.size(); ++i) lookup[{county[i], year[i]}] = residual[i];
  std::vector<double> x, y;
  for (const auto& [key, value] : lookup) {
    const auto prev = lookup.find({key.first, key.second - 1});
    if (prev == lookup.end()) continue;
    x.push_back(prev->second);
    y.push_back(value);
  }
  if (x.size() < 3) throw InvalidArgument("fit_ar1: fewer than three consecutive-year pairs");
  const double n = static_cast<double>(x.size());
  const double mx = sample_mean(x);
  const double my = sample_mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw NumericError("fit_ar1: lagged residuals have no spread");
  AR1Fit fit;
  fit.state = state;
  fit.pairs = x.size();
  fit.rho1 = sxy / sxx;
  fit.rho0 = my - fit.rho1 * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.rho0 - fit.rho1 * x[i];
    rss += r * r;
  }
  fit.se_rho1 = std::sqrt(rss / (n - 2.0) / sxx);
  const boost::math::students_t dist(n - 2.0);
  const double t = boost::math::quantile(dist, 0.975);
  fit.ci95 = {fit.rho1 - t * fit.se_rho1, fit.rho1 + t * fit.se_rho1};
  fit.stationary = std::abs(fit.rho1) < 1.0;
  return fit;
}

std::vector<double> smooth_curve(std::span<const double> x, std::span<const double> estimate, double span) {
  return loess_smooth(x, estimate, x, span, 1);
}

}  // namespace sqr
