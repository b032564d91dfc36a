#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sqr/bspline.hpp"
#include "sqr/joint_sampler.hpp"

namespace sqr {

struct Moments {
  std::size_t count = 0;
  double mean_price = 0.0;
  double mean_yield = 0.0;
  double sd_price = 0.0;
  double sd_yield = 0.0;
  double covariance = 0.0;
  double correlation = 0.0;
};

double sample_mean(std::span<const double> x);
/// Sample standard deviation with divisor n - 1.
double sample_sd(std::span<const double> x);
/// Pearson correlation; throws NumericError when either coordinate is constant.
double sample_correlation(std::span<const double> x, std::span<const double> y);

/// Sample moments of (price, yield) pairs.
Moments moments_from_draws(std::span<const double> price, std::span<const double> yield);
/// Uses the re-based pairs when present, the detrended pairs otherwise.
Moments moments_from_draws(const JointDraws& draws);

enum class JackknifeGrouping {
  round_robin,  // records sorted by (county, year), dealt to groups in turn
  whole_county  // counties sorted, each county dealt whole to one group
};

/// Group index in [0, B) for every record.
std::vector<std::size_t> jackknife_groups(std::span<const std::string> county, std::span<const int> year,
                                          std::size_t groups, JackknifeGrouping grouping = JackknifeGrouping::round_robin);

struct JackknifeResult {
  std::vector<std::vector<double>> replicates;  // one estimate vector per group
  std::vector<double> mean;
  std::vector<double> variance;  // (B - 1) / B sum_b (c_b - c_bar)^2, componentwise
};

/// Delete-a-group jackknife. `estimate(keep, b)` reruns the full estimator on
/// the records whose flag is set (group b removed) and returns a vector of
/// fixed length.
JackknifeResult jackknife_variance(
    std::span<const std::size_t> group_of, std::size_t groups,
    const std::function<std::vector<double>(const std::vector<char>& keep, std::size_t group)>& estimate,
    std::size_t workers = 1);

/// Jackknife variance of precomputed replicate estimates.
double jackknife_variance(std::span<const double> replicates);

struct AR1Fit {
  std::string state;
  double rho0 = 0.0;
  double rho1 = 0.0;
  double se_rho1 = 0.0;
  Interval ci95{0.0, 0.0};
  std::size_t pairs = 0;
  /// |rho1| < 1.
  bool stationary = true;
};

/// Pooled OLS of y~_jt on y~_j,t-1 over counties of one state, using only
/// pairs where both years are observed for the same county. 95% interval
/// from the classical slope standard error and the t(n - 2) quantile.
AR1Fit fit_ar1(std::span<const std::string> county, std::span<const int> year, std::span<const double> residual,
               const std::string& state = {});

/// LOESS-smoothed curve values at the given points.
std::vector<double> smooth_curve(std::span<const double> x, std::span<const double> estimate, double span = 0.75);

}  // namespace sqr
