#include "sqr/premium.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "sqr/error.hpp"

namespace sqr {

double indemnity(double coverage, double futures, double aph_yield, double price, double yield) {
  if (!(coverage > 0.0) || !(futures > 0.0) || !(aph_yield > 0.0) || !(price > 0.0) || !(yield >= 0.0))
    throw InvalidArgument("indemnity: inputs must be positive (yield may be zero)");
  return std::max(coverage * futures * aph_yield - price * yield, 0.0);
}

double StockChannelModel::futures_level(double stocks) const { return std::exp(futures.mean(stocks)); }

double StockChannelModel::iv_level(double stocks) const {
  const double m = iv.mean(stocks);
  return iv_form == IvForm::log_mean ? std::exp(m) : m;
}

namespace {

Interval widened(std::span<const double> values, double fraction) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double w = *hi - *lo;
  if (w <= 0.0) w = std::max(std::abs(*lo), 1.0);
  return {*lo - fraction * w, *hi + fraction * w};
}

}  // namespace

StockChannelModel fit_stock_channels(std::span<const double> stocks, std::span<const double> feb_futures,
                                     std::span<const double> implied_vol, const StockChannelOptions& o) {
  const std::size_t t = stocks.size();
  if (feb_futures.size() != t || implied_vol.size() != t)
    throw InvalidArgument("fit_stock_channels: column lengths differ");
  if (t < static_cast<std::size_t>(o.degree + o.interior_count))
    throw InvalidArgument("fit_stock_channels: fewer years than coefficients");
  std::vector<double> log_futures(t), iv_response(t);
  for (std::size_t i = 0; i < t; ++i) {
    if (!(feb_futures[i] > 0.0) || !(implied_vol[i] > 0.0))
      throw InvalidArgument("fit_stock_channels: futures and IV must be positive");
    log_futures[i] = std::log(feb_futures[i]);
    iv_response[i] = o.iv_form == IvForm::log_mean ? std::log(implied_vol[i]) : implied_vol[i];
  }
  const Interval support = o.support.value_or(widened(stocks, 0.05));
  const BSplineBasis basis =
      BSplineBasis::from_data(stocks, o.degree, o.interior_count, support, KnotPlacement::quantile);
  const std::vector<double> grid = o.lambda_grid.empty() ? default_lambda_grid() : o.lambda_grid;

  StockChannelModel m{fit_penalized_spline(basis, stocks, log_futures, stocks, grid),
                      fit_penalized_spline(basis, stocks, iv_response, stocks, grid), o.iv_form, 0.0};
  double ss = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const double r = implied_vol[i] - m.iv_level(stocks[i]);
    ss += r * r;
  }
  m.iv_level_sigma2 = ss / static_cast<double>(t - 1);
  return m;
}

RevenueDraws simulate_revenue(ChannelKind kind, const JointModel& yield_model, const StockChannelModel& channels,
                              const TrendModel& price_trend, const TrendModel& yield_trend, double time_index,
                              double stocks, const PremiumOptions& o, const RandomStream& rng) {
  if (o.draws == 0) throw InvalidArgument("simulate_revenue: number of draws must be positive");
  if (!(o.iv_scale > 0.0) || !(o.iv_floor > 0.0)) throw InvalidArgument("simulate_revenue: iv scale and floor must be positive");
  if (!yield_model.has_yield()) throw InvalidArgument("simulate_revenue: model has no yield fits");
  const bool conditional = kind == ChannelKind::three_channel;
  if (conditional != (yield_model.kind == ModelKind::conditional))
    throw InvalidArgument("simulate_revenue: three-channel needs a conditional yield model, two-channel an unconditional one");

  // Estimation uncertainty of the fitted channel means, then residual noise.
  const double f_mean = channels.futures.mean(stocks);
  const double f_sd_fit = std::sqrt(channels.futures.variance(stocks));
  const double f_sd = std::sqrt(channels.futures.sigma2);
  const double iv_fit_mean = channels.iv.mean(stocks);
  const double iv_sd_fit = std::sqrt(channels.iv.variance(stocks));
  const double iv_sd = std::sqrt(channels.iv_form == IvForm::log_mean ? channels.iv_level_sigma2 : channels.iv.sigma2);
  const double p_mean = price_trend.mean(time_index);
  const double p_sd = std::sqrt(price_trend.variance(time_index));
  const double y_mean = yield_trend.mean(time_index);
  const double y_sd = std::sqrt(yield_trend.variance(time_index));

  RandomStream futures_rng = rng.child("futures");
  RandomStream iv_rng = rng.child("iv");
  RandomStream price_rng = rng.child("harvest_price");
  RandomStream tau_rng = rng.child("tau_y");
  RandomStream trend_rng = rng.child("trends");

  auto normal = [](RandomStream& s, double mean, double sd) { return sd > 0.0 ? s.normal(mean, sd) : mean; };

  RevenueDraws out;
  out.futures.resize(o.draws);
  out.price.resize(o.draws);
  out.yield.resize(o.draws);
  const Interval tc = yield_model.tau_clamp;
  for (std::size_t r = 0; r < o.draws; ++r) {
    const double fbar = normal(futures_rng, normal(futures_rng, f_mean, f_sd_fit), f_sd);
    const double futures = std::exp(fbar);

    double iv_center = normal(iv_rng, iv_fit_mean, iv_sd_fit);
    if (channels.iv_form == IvForm::log_mean) iv_center = std::exp(iv_center);
    double iv = normal(iv_rng, iv_center, iv_sd);
    if (iv < o.iv_floor) {
      ++out.iv_truncations;
      // Inverse-CDF draw from the normal truncated to [floor, inf).
      const double z0 = iv_sd > 0.0 ? (o.iv_floor - iv_center) / iv_sd : 0.0;
      const double f0 = 0.5 * std::erfc(-z0 / std::sqrt(2.0));
      const double u = f0 + (1.0 - f0) * iv_rng.uniform();
      iv = iv_sd > 0.0 && u < 1.0 ? std::max(o.iv_floor, iv_center + iv_sd * std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0))
                                  : o.iv_floor;
    }
    const double log_price = price_rng.normal(std::log(futures), iv * o.iv_scale);
    const double tau = tau_rng.uniform(tc.lower, tc.upper);
    const double p_hat = normal(trend_rng, p_mean, p_sd);
    const double y_hat = normal(trend_rng, y_mean, y_sd);

    double detrended = log_price - p_hat;
    if (!yield_model.price_support.contains(detrended)) {
      detrended = yield_model.price_support.clamp(detrended);
      ++out.price_clamps;
    }
    const double y_resid = yield_model.yield_quantile(tau, detrended, conditional ? stocks : 0.0);
    out.futures[r] = futures;
    out.price[r] = std::exp(log_price);
    out.yield[r] = std::max(y_hat + y_resid, 0.0);
  }
  return out;
}

double premium_from_draws(const RevenueDraws& d, double coverage, double aph_yield) {
  if (d.price.empty()) throw InvalidArgument("premium_from_draws: no draws");
  double total = 0.0;
  for (std::size_t r = 0; r < d.price.size(); ++r)
    total += indemnity(coverage, d.futures[r], aph_yield, d.price[r], d.yield[r]);
  return total / static_cast<double>(d.price.size());
}

double simulate_premium(ChannelKind kind, const JointModel& yield_model, const StockChannelModel& channels,
                        const TrendModel& price_trend, const TrendModel& yield_trend, double time_index,
                        double stocks, double coverage, double aph, const PremiumOptions& options,
                        const RandomStream& rng) {
  const RevenueDraws d =
      simulate_revenue(kind, yield_model, channels, price_trend, yield_trend, time_index, stocks, options, rng);
  return premium_from_draws(d, coverage, aph);
}

AphYield aph_yield(std::span<const int> years, std::span<const double> yields, int year, int window) {
  if (years.size() != yields.size()) throw InvalidArgument("aph_yield: column lengths differ");
  if (window < 1) throw InvalidArgument("aph_yield: window must be >= 1");
  AphYield a;
  double total = 0.0;
  for (std::size_t i = 0; i < years.size(); ++i) {
    if (years[i] >= year || years[i] < year - window) continue;
    total += yields[i];
    ++a.years_used;
  }
  if (a.years_used == 0) throw InvalidArgument("aph_yield: no prior yields for year " + std::to_string(year));
  a.value = total / static_cast<double>(a.years_used);
  a.complete = a.years_used == static_cast<std::size_t>(window);
  return a;
}

double loss_ratio(std::span<const double> indemnities, std::span<const double> premiums) {
  const double num = std::accumulate(indemnities.begin(), indemnities.end(), 0.0);
  const double den = std::accumulate(premiums.begin(), premiums.end(), 0.0);
  if (!(den > 0.0)) throw NumericError("loss_ratio: total premium is zero");
  return num / den;
}

double binomial_upper_tail(int k, int n, double p) {
  if (n < 0) throw InvalidArgument("binomial_upper_tail: n must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("binomial_upper_tail: p outside [0, 1]");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p == 0.5 && n <= 64) {
    // C(n, i) fits in 128 bits; the total is 2^n.
    unsigned __int128 c = 1, tail = 0;
    for (int i = 0; i <= n; ++i) {
      if (i >= k) tail += c;
      c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
    }
    return std::ldexp(static_cast<double>(tail), -n);
  }
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double total = 0.0;
  const double lp = std::log(p), lq = std::log1p(-p);
  for (int i = k; i <= n; ++i)
    total += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * lp + (n - i) * lq);
  return std::min(total, 1.0);
}

namespace {

struct Split {
  double cede_indemnity = 0.0, cede_premium = 0.0, retain_indemnity = 0.0, retain_premium = 0.0;
  std::size_t cede_count = 0, retain_count = 0;
};

Split split(std::span<const RatingPolicy* const> policies, bool candidate_side, TieRule ties) {
  Split s;
  for (const RatingPolicy* p : policies) {
    const double own = candidate_side ? p->premium_candidate : p->premium_reference;
    const double other = candidate_side ? p->premium_reference : p->premium_candidate;
    const bool cede = own > other || (own == other && ties == TieRule::cede);
    if (cede) {
      s.cede_indemnity += p->indemnity;
      s.cede_premium += other;
      ++s.cede_count;
    } else {
      s.retain_indemnity += p->indemnity;
      s.retain_premium += other;
      ++s.retain_count;
    }
  }
  return s;
}

}  // namespace

RatingGameResult rating_game(std::span<const RatingPolicy> policies, TieRule ties) {
  if (policies.empty()) throw InvalidArgument("rating_game: no policies");
  std::map<int, std::vector<const RatingPolicy*>> by_year;
  for (const RatingPolicy& p : policies) {
    if (!(p.indemnity >= 0.0) || !(p.premium_candidate >= 0.0) || !(p.premium_reference >= 0.0))
      throw InvalidArgument("rating_game: indemnities and premiums must be >= 0");
    by_year[p.year].push_back(&p);
  }
  RatingGameResult res;
  for (const auto& [year, list] : by_year) {
    RatingYear y;
    y.year = year;
    const bool all_tied = std::all_of(list.begin(), list.end(), [](const RatingPolicy* p) {
      return p->premium_candidate == p->premium_reference;
    });
    if (all_tied) {
      y.d = 1.0;
      y.defined = true;
    } else {
      const Split c = split(list, true, ties);
      const Split r = split(list, false, ties);
      if (c.cede_premium > 0.0 && c.retain_premium > 0.0 && r.cede_premium > 0.0 && r.retain_premium > 0.0) {
        y.lr_candidate_cede = c.cede_indemnity / c.cede_premium;
        y.lr_candidate_retain = c.retain_indemnity / c.retain_premium;
        y.lr_reference_cede = r.cede_indemnity / r.cede_premium;
        y.lr_reference_retain = r.retain_indemnity / r.retain_premium;
        const double num = y.lr_candidate_cede * y.lr_reference_retain;
        const double den = y.lr_candidate_retain * y.lr_reference_cede;
        if (den > 0.0 && std::isfinite(num)) {
          y.d = num / den;
          y.defined = true;
        }
      }
    }
    if (y.defined) {
      ++res.years_used;
      if (y.d > 1.0) ++res.d_star;
    } else {
      ++res.years_excluded;
    }
    res.years.push_back(y);
  }
  res.p_value = binomial_upper_tail(res.d_star, res.years_used, 0.5);
  return res;
}

}  // namespace sqr
