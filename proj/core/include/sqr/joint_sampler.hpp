#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sqr/bspline.hpp"
#include "sqr/quantile_fit.hpp"
#include "sqr/random.hpp"
#include "sqr/trend.hpp"

namespace sqr {

/// Detrended data for one state: one (p~_t, s~_t) pair per year and the
/// county yield residuals y~_jt, each tagged with its year position.
struct DetrendedPanel {
  std::vector<int> years;
  std::vector<double> price;
  std::vector<double> stocks;
  std::vector<std::size_t> obs_year;  // index into years
  std::vector<double> yield;

  std::size_t year_count() const noexcept { return years.size(); }
  std::size_t size() const noexcept { return yield.size(); }
  void validate() const;
  /// Keeps the yield observations whose flag is set; years left without any
  /// observation are kept (they still inform the price model).
  DetrendedPanel subset(const std::vector<char>& keep) const;
};

/// 0.01, 0.02, ..., 0.99.
std::vector<double> default_tau_grid();

struct JointModelOptions {
  std::vector<double> tau_grid = default_tau_grid();
  /// tau set whose GACV criteria are summed when choosing lambda.
  std::vector<double> selection_taus{0.1, 0.25, 0.5, 0.75, 0.9};
  std::vector<double> lambda_grid = default_lambda_grid();
  /// Fixed smoothing parameters skip GACV for that target.
  std::optional<double> price_lambda;
  std::optional<double> yield_lambda;
  int degree = 3;
  int interior_count = 4;
  int difference_order = 2;
  Interval tau_clamp{0.001, 0.999};
  /// Covariate supports; default is the observed range widened by
  /// `support_expansion` of its width on each side.
  std::optional<Interval> price_support;
  std::optional<Interval> stock_support;
  double support_expansion = 0.05;
  /// Skip the yield model (price-only studies).
  bool fit_yield = true;
  SolverOptions solver;
  std::size_t workers = 1;
};

enum class ModelKind { conditional, unconditional };

/// Quantile fits of p~ | s~ and y~ | (p~, s~) on a tau grid. The unconditional
/// variant uses scalar price quantiles and yield fits on p~ alone.
class JointModel {
 public:
  ModelKind kind = ModelKind::conditional;
  std::vector<double> tau_grid;
  Interval tau_clamp{0.001, 0.999};
  Interval price_support;
  Interval stock_support;
  /// Bases: price model on s~; yield model on p~ then (conditional only) s~.
  std::vector<BSplineBasis> price_bases;
  std::vector<BSplineBasis> yield_bases;
  /// One row of coefficients per tau. Unconditional price: a single column
  /// holding the scalar quantile.
  Eigen::MatrixXd price_coefficients;
  Eigen::MatrixXd yield_coefficients;
  double price_lambda = 0.0;
  double yield_lambda = 0.0;
  std::optional<GacvResult> price_gacv;
  std::optional<GacvResult> yield_gacv;
  /// Fits whose solver did not certify optimality (still within tolerance).
  std::size_t uncertified_fits = 0;

  bool has_yield() const noexcept { return yield_coefficients.size() > 0; }
  /// Rearranged (sorted) price quantiles over the tau grid at s~.
  std::vector<double> price_quantiles(double stocks) const;
  /// Rearranged yield quantiles at (p~, s~); p~ must lie in the price support.
  std::vector<double> yield_quantiles(double price, double stocks) const;
  /// Monotone quantile function value at tau from rearranged grid values;
  /// linear in tau, extended linearly from the end segments outside the grid.
  double interpolate(std::span<const double> sorted_values, double tau) const;
  double price_quantile(double tau, double stocks) const;
  double yield_quantile(double tau, double price, double stocks) const;
  /// Model CDF of p~ at s~ implied by the interpolated quantile function over
  /// the tau clamp interval.
  double price_cdf(double value, double stocks) const;
};

JointModel fit_conditional(const DetrendedPanel& panel, const JointModelOptions& options = {});
JointModel fit_unconditional(const DetrendedPanel& panel, const JointModelOptions& options = {});

struct JointDraws {
  double stocks = 0.0;
  std::vector<double> price_detrended;
  std::vector<double> yield_detrended;
  /// Retrended and re-based pairs (filled by retrend_and_rebase).
  std::vector<double> price;
  std::vector<double> yield;
  /// Yield-stage evaluations whose p~ had to be clamped into the support.
  std::size_t clamp_count = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  std::size_t size() const noexcept { return price_detrended.size(); }
  double clamp_fraction() const noexcept {
    return price_detrended.empty() ? 0.0 : static_cast<double>(clamp_count) / static_cast<double>(size());
  }
};

/// R draws at s~: tau_p, tau_y ~ U(tau_clamp); p~* = q_{tau_p}(s~);
/// y~* = q_{tau_y}(p~*, s~). Blocks of draws use child streams of `rng`, so the
/// result does not depend on `workers`.
JointDraws sample_conditional(const JointModel& model, double stocks, std::size_t draws, const RandomStream& rng,
                              std::size_t workers = 1);
/// Same for an unconditional model (stocks ignored).
JointDraws sample_unconditional(const JointModel& model, std::size_t draws, const RandomStream& rng,
                                std::size_t workers = 1);

struct RetrendSpec {
  const TrendModel* price_trend = nullptr;
  const TrendModel* yield_trend = nullptr;
  double target_time = 0.0;  // trend time index of year t
  double base_time = 0.0;    // trend time index of base year a
  double deflator = 1.0;     // GDPDEF_t
};

/// p* = exp(p^*_r + p~*_r) / GDPDEF_t and y* = y^*_r + y~*_r + y^(a) - y^(t),
/// with independent trend draws per r.
void retrend_and_rebase(JointDraws& draws, const RetrendSpec& spec, const RandomStream& rng);

}  // namespace sqr
