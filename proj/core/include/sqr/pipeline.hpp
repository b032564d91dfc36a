#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sqr/joint_sampler.hpp"
#include "sqr/market_data.hpp"
#include "sqr/premium.hpp"
#include "sqr/random.hpp"
#include "sqr/stats.hpp"
#include "sqr/trend.hpp"

namespace sqr {

struct PrepareOptions {
  TrendOptions trend;
  double loess_span = 0.75;
  /// States to keep; empty keeps all.
  std::vector<std::string> states;
};

/// One state's county records and its yield trend.
struct StateData {
  std::string state;
  std::vector<std::string> county;
  std::vector<int> year;
  std::vector<double> yield;
  TrendModel yield_trend;
  /// Detrended panel aligned with the national series years.
  DetrendedPanel panel;
};

/// National series, normalized stocks, the log-price trend and per-state
/// detrended panels.
struct PreparedData {
  MarketSeries series;
  std::vector<double> stocks;  // s~_t
  TrendModel price_trend;
  std::vector<double> price_detrended;
  std::vector<StateData> states;
  PrepareOptions options;

  int first_year() const { return series.year.front(); }
  /// Trend time index t = year - first_year + 1.
  double time_of(int year) const { return static_cast<double>(year - first_year() + 1); }
  int horizon() const { return static_cast<int>(series.size()); }
  const StateData& state(const std::string& name) const;
};

PreparedData prepare_data(const MarketSeries& series, const YieldPanel& yields, const PrepareOptions& options = {});

/// Fits the state's yield trend on the kept records and builds the detrended
/// panel (prices and stocks from the national series).
StateData build_state(const PreparedData& data, const std::string& state, const std::vector<std::string>& county,
                      const std::vector<int>& year, const std::vector<double>& yield);

struct CurveOptions {
  JointModelOptions model;
  /// Stocks values at which conditional moments are estimated; empty: 25
  /// points over the observed stocks range.
  std::vector<double> stocks_grid;
  std::size_t draws = 1000;
  /// Year whose trends are drawn (default: last series year) and base year
  /// of the re-based units (default: target year).
  std::optional<int> target_year;
  std::optional<int> base_year;
  /// Moments of the retrended, re-based draws; when false, moments of the
  /// detrended pairs (p~, y~).
  bool rebase = true;
  double loess_span = 0.75;
  std::size_t jackknife_groups = 50;
  JackknifeGrouping grouping = JackknifeGrouping::round_robin;
  bool jackknife = true;
  std::size_t workers = 1;
};

struct CurveEstimate {
  std::vector<double> correlation;
  std::vector<double> sd_price;
  std::vector<double> sd_yield;
  double clamp_fraction = 0.0;
  double price_lambda = 0.0;
  double yield_lambda = 0.0;
};

/// Trend draw settings for re-based moments; empty means moments of the
/// detrended draws.
struct RebaseSpec {
  const TrendModel* price_trend = nullptr;
  const TrendModel* yield_trend = nullptr;
  double target_time = 0.0;
  double base_time = 0.0;
  double deflator = 1.0;
};

/// Fits the model of the given kind on the panel and estimates correlation
/// and standard deviations at each stocks value from R draws. The
/// unconditional kind yields a constant curve.
CurveEstimate estimate_curves(const DetrendedPanel& panel, ModelKind kind, const std::vector<double>& stocks_grid,
                              const CurveOptions& options, const std::optional<RebaseSpec>& rebase,
                              const RandomStream& rng);

struct CorrelationCurves {
  std::string state;
  std::vector<double> stocks;
  CurveEstimate conditional;
  CurveEstimate unconditional;
  std::vector<double> corr_variance;      // jackknife, conditional correlation
  std::vector<double> sd_price_variance;  // jackknife, conditional price sd
  std::vector<double> corr_smoothed;
  std::vector<double> unconditional_smoothed;
  std::vector<double> sd_price_smoothed;
  std::vector<double> band_lower;  // smoothed +- 1.96 jackknife se
  std::vector<double> band_upper;
};

/// Conditional and unconditional curves for one state, with delete-a-group
/// jackknife variances. Every jackknife replicate refits the yield trend and
/// reselects lambda; replicates share the random streams of the full fit.
CorrelationCurves correlation_curves(const PreparedData& data, const StateData& state, const CurveOptions& options,
                                     const RandomStream& rng);

std::vector<double> default_stocks_grid(std::span<const double> stocks, std::size_t points = 25);

struct PremiumRunOptions {
  std::vector<double> coverages{0.7, 0.85};
  PremiumOptions simulation;
  JointModelOptions model;
  StockChannelOptions channels;
  int aph_window = 10;
  /// Years without a complete APH window are skipped.
  bool require_full_aph = false;
  std::size_t workers = 1;
};

struct PremiumRow {
  std::string state;
  std::string county;
  int year = 0;
  double coverage = 0.0;
  double stocks = 0.0;
  double aph = 0.0;
  bool aph_complete = false;
  double realized_indemnity = 0.0;
  double premium_two = 0.0;
  double premium_three = 0.0;
};

struct PremiumRun {
  std::vector<PremiumRow> rows;
  std::size_t iv_truncations = 0;
  std::size_t price_clamps = 0;
  std::size_t draws = 0;
};

/// Two- and three-channel premiums for every county-year of the state with a
/// prior yield history, in year-t nominal units.
PremiumRun premium_table(const PreparedData& data, const StateData& state, const PremiumRunOptions& options,
                         const RandomStream& rng);

/// Rating game of three-channel (candidate) against two-channel (reference)
/// rates for one coverage level.
RatingGameResult rating_game_for(const std::vector<PremiumRow>& rows, double coverage, TieRule ties = TieRule::retain,
                                 bool swap_roles = false);

}  // namespace sqr
