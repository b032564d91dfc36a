#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sqr/bspline.hpp"
#include "sqr/joint_sampler.hpp"
#include "sqr/random.hpp"
#include "sqr/trend.hpp"

namespace sqr {

/// max(psi * pbar * ybar - p * y, 0) in $/acre.
double indemnity(double coverage, double futures, double aph_yield, double price, double yield);

/// How the implied-volatility channel is modelled on stocks.
enum class IvForm {
  log_mean,  // mean fitted on log IV, level prediction exp(B'b), variance from level residuals
  levels     // mean and variance both on IV levels
};

/// Penalized spline regressions of log February futures and implied
/// volatility on B(s~), sharing one basis and Gram matrix F.
struct StockChannelModel {
  TrendModel futures;  // log scale
  TrendModel iv;
  IvForm iv_form = IvForm::log_mean;
  /// Residual variance of IV in levels (used for the IV draw).
  double iv_level_sigma2 = 0.0;

  /// Point prediction of the futures price level at s~.
  double futures_level(double stocks) const;
  /// Point prediction of implied volatility at s~.
  double iv_level(double stocks) const;
};

struct StockChannelOptions {
  int degree = 3;
  int interior_count = 4;
  std::vector<double> lambda_grid;  // empty: default grid
  std::optional<Interval> support;  // default: observed range widened by 5%
  IvForm iv_form = IvForm::log_mean;
};

StockChannelModel fit_stock_channels(std::span<const double> stocks, std::span<const double> feb_futures,
                                     std::span<const double> implied_vol, const StockChannelOptions& options = {});

enum class ChannelKind { two_channel, three_channel };

struct PremiumOptions {
  std::size_t draws = 1000;
  /// Multiplies IV before it is used as the sd of log harvest price.
  double iv_scale = 1.0;
  /// Negative IV draws are redrawn from the truncated normal above this floor.
  double iv_floor = 1e-4;
};

/// Simulated revenue components for one (year, state, s~).
struct RevenueDraws {
  std::vector<double> futures;  // pbar+_r
  std::vector<double> price;    // p+_r
  std::vector<double> yield;    // y+_r
  std::size_t iv_truncations = 0;
  std::size_t price_clamps = 0;
};

/// Steps (a)-(e): draw futures and IV from the stock channels, harvest price
/// lognormal around the futures with IV as log sd, and the yield from the
/// fitted quantile model evaluated at the detrended simulated price (and at s~
/// for the three-channel kind). `yield_model` must be conditional for
/// three_channel and unconditional for two_channel. Both kinds consume the
/// same random streams, so their draws are coupled.
RevenueDraws simulate_revenue(ChannelKind kind, const JointModel& yield_model, const StockChannelModel& channels,
                              const TrendModel& price_trend, const TrendModel& yield_trend, double time_index,
                              double stocks, const PremiumOptions& options, const RandomStream& rng);

/// Monte Carlo mean of max(psi * pbar+ * ybar - p+ * y+, 0).
double premium_from_draws(const RevenueDraws& draws, double coverage, double aph_yield);

double simulate_premium(ChannelKind kind, const JointModel& yield_model, const StockChannelModel& channels,
                        const TrendModel& price_trend, const TrendModel& yield_trend, double time_index,
                        double stocks, double coverage, double aph_yield, const PremiumOptions& options,
                        const RandomStream& rng);

/// Trailing arithmetic mean of up to `window` observed yields in the years
/// before `year`. `complete` reports whether all window years were present.
struct AphYield {
  double value = 0.0;
  std::size_t years_used = 0;
  bool complete = false;
};
AphYield aph_yield(std::span<const int> years, std::span<const double> yields, int year, int window = 10);

/// sum indemnities / sum premiums.
double loss_ratio(std::span<const double> indemnities, std::span<const double> premiums);

/// P(X >= k) for X ~ Binomial(n, p), exact summation.
double binomial_upper_tail(int k, int n, double p = 0.5);

/// One policy in one year of the rating game.
struct RatingPolicy {
  int year = 0;
  double indemnity = 0.0;  // realized
  double premium_candidate = 0.0;
  double premium_reference = 0.0;
};

struct RatingYear {
  int year = 0;
  double d = 0.0;
  bool defined = false;
  double lr_candidate_cede = 0.0;
  double lr_candidate_retain = 0.0;
  double lr_reference_cede = 0.0;
  double lr_reference_retain = 0.0;
};

struct RatingGameResult {
  std::vector<RatingYear> years;
  int d_star = 0;
  int years_used = 0;
  int years_excluded = 0;
  double p_value = 1.0;
};

enum class TieRule { retain, cede };

/// Each method plays the private insurer against the other as the reference
/// rate: it cedes a policy when its own rate exceeds the other's and retains
/// it otherwise. Loss ratios divide realized indemnities by the rate actually
/// charged, the reference rate. D_t = (LR_C / LR_R)_candidate /
/// (LR_C / LR_R)_reference. Years where every rate ties give D_t = 1; other
/// years with an empty (or zero-premium) bucket or a zero loss ratio in a
/// denominator are excluded.
RatingGameResult rating_game(std::span<const RatingPolicy> policies, TieRule ties = TieRule::retain);

}  // namespace sqr
