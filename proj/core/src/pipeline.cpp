#include "sqr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "sqr/error.hpp"
#include "sqr/parallel.hpp"

namespace sqr {

const StateData& PreparedData::state(const std::string& name) const {
  for (const auto& s : states)
    if (s.state == name) return s;
  throw InvalidArgument("no yield records for state '" + name + "'");
}

StateData build_state(const PreparedData& data, const std::string& state, const std::vector<std::string>& county,
                      const std::vector<int>& year, const std::vector<double>& yield) {
  if (county.size() != year.size() || year.size() != yield.size())
    throw InvalidArgument("build_state: column lengths differ");
  if (yield.empty()) throw InvalidArgument("build_state: no records for state '" + state + "'");
  StateData sd;
  sd.state = state;
  sd.county = county;
  sd.year = year;
  sd.yield = yield;
  std::vector<double> times(year.size());
  for (std::size_t i = 0; i < year.size(); ++i) times[i] = data.time_of(year[i]);
  sd.yield_trend = fit_trend(times, yield, data.horizon(), data.options.trend);

  DetrendedPanel& p = sd.panel;
  p.years = data.series.year;
  p.price = data.price_detrended;
  p.stocks = data.stocks;
  p.obs_year.resize(year.size());
  p.yield = detrend(yield, times, sd.yield_trend, DetrendMode::level_yield);
  for (std::size_t i = 0; i < year.size(); ++i) {
    const auto idx = data.series.index_of(year[i]);
    if (!idx) throw IngestError("yield record for year " + std::to_string(year[i]) + " outside the market series");
    p.obs_year[i] = *idx;
  }
  return sd;
}

PreparedData prepare_data(const MarketSeries& series, const YieldPanel& yields, const PrepareOptions& options) {
  series.validate();
  yields.validate();
  const auto gaps = series.gaps();
  if (!gaps.empty()) throw IngestError("market series has missing year " + std::to_string(gaps.front()));
  PreparedData d;
  d.series = series;
  d.options = options;
  d.stocks = normalize_stocks(series, options.loess_span);

  const std::size_t t = series.size();
  std::vector<double> times(t);
  for (std::size_t i = 0; i < t; ++i) times[i] = static_cast<double>(i + 1);
  std::vector<double> log_price(t);
  for (std::size_t i = 0; i < t; ++i) log_price[i] = std::log(series.harvest_price[i]);
  d.price_trend = fit_trend(times, log_price, static_cast<int>(t), options.trend);
  d.price_detrended = detrend(series.harvest_price, times, d.price_trend, DetrendMode::log_price);

  std::vector<std::string> names = options.states.empty() ? yields.states() : options.states;
  for (const std::string& name : names) {
    std::vector<std::string> county;
    std::vector<int> year;
    std::vector<double> yield;
    for (const auto& r : yields.records) {
      if (r.state != name) continue;
      if (!series.index_of(r.year)) continue;  // outside the market years
      county.push_back(r.county);
      year.push_back(r.year);
      yield.push_back(r.yield);
    }
    if (yield.empty()) throw IngestError("no yield records within the market years for state '" + name + "'");
    d.states.push_back(build_state(d, name, county, year, yield));
  }
  return d;
}

std::vector<double> default_stocks_grid(std::span<const double> stocks, std::size_t points) {
  if (stocks.empty() || points < 2) throw InvalidArgument("default_stocks_grid: empty input");
  const auto [lo, hi] = std::minmax_element(stocks.begin(), stocks.end());
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = *lo + (*hi - *lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

CurveEstimate estimate_curves(const DetrendedPanel& panel, ModelKind kind, const std::vector<double>& grid,
                              const CurveOptions& options, const std::optional<RebaseSpec>& rebase,
                              const RandomStream& rng) {
  const JointModel model =
      kind == ModelKind::conditional ? fit_conditional(panel, options.model) : fit_unconditional(panel, options.model);
  CurveEstimate out;
  out.price_lambda = model.price_lambda;
  out.yield_lambda = model.yield_lambda;
  std::size_t clamps = 0, total = 0;
  auto moments_for = [&](std::size_t k, double s) {
    JointDraws d = kind == ModelKind::conditional
                       ? sample_conditional(model, s, options.draws, rng.child("draws").child(k))
                       : sample_unconditional(model, options.draws, rng.child("draws").child(k));
    clamps += d.clamp_count;
    total += d.size();
    if (rebase) {
      RetrendSpec spec{rebase->price_trend, rebase->yield_trend, rebase->target_time, rebase->base_time,
                       rebase->deflator};
      retrend_and_rebase(d, spec, rng.child("trend").child(k));
    }
    return moments_from_draws(d);
  };
  if (kind == ModelKind::conditional) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Moments m = moments_for(k, grid[k]);
      out.correlation.push_back(m.correlation);
      out.sd_price.push_back(m.sd_price);
      out.sd_yield.push_back(m.sd_yield);
    }
  } else {
    const Moments m = moments_for(0, 0.0);
    out.correlation.assign(grid.size(), m.correlation);
    out.sd_price.assign(grid.size(), m.sd_price);
    out.sd_yield.assign(grid.size(), m.sd_yield);
  }
  out.clamp_fraction = total ? static_cast<double>(clamps) / static_cast<double>(total) : 0.0;
  return out;
}

CorrelationCurves correlation_curves(const PreparedData& data, const StateData& state, const CurveOptions& o,
                                     const RandomStream& rng) {
  CorrelationCurves c;
  c.state = state.state;
  c.stocks = o.stocks_grid.empty() ? default_stocks_grid(data.stocks) : o.stocks_grid;
  const int target = o.target_year.value_or(data.series.year.back());
  const int base = o.base_year.value_or(target);
  const auto idx = data.series.index_of(target);
  if (!idx) throw InvalidArgument("correlate: no deflator for target year " + std::to_string(target));
  const double deflator = data.series.gdp_deflator[*idx];

  auto spec_for = [&](const TrendModel& yield_trend) -> std::optional<RebaseSpec> {
    if (!o.rebase) return std::nullopt;
    return RebaseSpec{&data.price_trend, &yield_trend, data.time_of(target), data.time_of(base), deflator};
  };
  c.conditional = estimate_curves(state.panel, ModelKind::conditional, c.stocks, o, spec_for(state.yield_trend),
                                  rng.child("conditional"));
  c.unconditional = estimate_curves(state.panel, ModelKind::unconditional, c.stocks, o, spec_for(state.yield_trend),
                                    rng.child("unconditional"));

  const std::size_t k = c.stocks.size();
  if (o.jackknife) {
    const auto groups = jackknife_groups(state.county, state.year, o.jackknife_groups, o.grouping);
    CurveOptions inner = o;
    inner.model.workers = 1;
    const JackknifeResult jk = jackknife_variance(
        groups, o.jackknife_groups,
        [&](const std::vector<char>& keep, std::size_t) {
          std::vector<std::string> county;
          std::vector<int> year;
          std::vector<double> yield;
          for (std::size_t i = 0; i < keep.size(); ++i) {
            if (!keep[i]) continue;
            county.push_back(state.county[i]);
            year.push_back(state.year[i]);
            yield.push_back(state.yield[i]);
          }
          const StateData reduced = build_state(data, state.state, county, year, yield);
          const CurveEstimate e = estimate_curves(reduced.panel, ModelKind::conditional, c.stocks, inner,
                                                  spec_for(reduced.yield_trend), rng.child("conditional"));
          std::vector<double> v = e.correlation;
          v.insert(v.end(), e.sd_price.begin(), e.sd_price.end());
          return v;
        },
        o.workers);
    c.corr_variance.assign(jk.variance.begin(), jk.variance.begin() + static_cast<std::ptrdiff_t>(k));
    c.sd_price_variance.assign(jk.variance.begin() + static_cast<std::ptrdiff_t>(k), jk.variance.end());
  } else {
    c.corr_variance.assign(k, std::numeric_limits<double>::quiet_NaN());
    c.sd_price_variance.assign(k, std::numeric_limits<double>::quiet_NaN());
  }

  c.corr_smoothed = smooth_curve(c.stocks, c.conditional.correlation, o.loess_span);
  c.unconditional_smoothed = smooth_curve(c.stocks, c.unconditional.correlation, o.loess_span);
  c.sd_price_smoothed = smooth_curve(c.stocks, c.conditional.sd_price, o.loess_span);
  c.band_lower.resize(k);
  c.band_upper.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double half = 1.96 * std::sqrt(c.corr_variance[i]);
    c.band_lower[i] = c.corr_smoothed[i] - half;
    c.band_upper[i] = c.corr_smoothed[i] + half;
  }
  return c;
}

PremiumRun premium_table(const PreparedData& data, const StateData& state, const PremiumRunOptions& o,
                         const RandomStream& rng) {
  if (o.coverages.empty()) throw InvalidArgument("premium: no coverage levels");
  for (double c : o.coverages)
    if (!(c > 0.0 && c <= 1.0)) throw InvalidArgument("premium: coverage must lie in (0, 1]");
  const MarketSeries& ms = data.series;
  const StockChannelModel channels = fit_stock_channels(data.stocks, ms.feb_futures, ms.implied_vol, o.channels);
  const JointModel three = fit_conditional(state.panel, o.model);
  const JointModel two = fit_unconditional(state.panel, o.model);

  // Records grouped by county for the APH history.
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> history;
  for (std::size_t i = 0; i < state.county.size(); ++i) {
    auto& h = history[state.county[i]];
    h.first.push_back(state.year[i]);
    h.second.push_back(state.yield[i]);
  }

  std::vector<std::vector<PremiumRow>> per_year(ms.size());
  std::vector<std::size_t> truncations(ms.size(), 0), clamps(ms.size(), 0), draws(ms.size(), 0);
  parallel_for(ms.size(), o.workers, [&](std::size_t yi) {
    const int year = ms.year[yi];
    std::vector<std::size_t> records;
    for (std::size_t i = 0; i < state.year.size(); ++i)
      if (state.year[i] == year) records.push_back(i);
    std::vector<std::pair<std::size_t, AphYield>> insured;
    for (std::size_t i : records) {
      const auto& h = history.at(state.county[i]);
      const bool any_prior = std::any_of(h.first.begin(), h.first.end(),
                                         [&](int y) { return y < year && y >= year - o.aph_window; });
      if (!any_prior) continue;
      const AphYield a = aph_yield(h.first, h.second, year, o.aph_window);
      if (o.require_full_aph && !a.complete) continue;
      if (!(a.value > 0.0)) continue;
      insured.emplace_back(i, a);
    }
    if (insured.empty()) return;
    const RandomStream stream = rng.child(state.state).child(static_cast<std::uint64_t>(year));
    const double t = data.time_of(year);
    const double s = data.stocks[yi];
    const RevenueDraws d2 = simulate_revenue(ChannelKind::two_channel, two, channels, data.price_trend,
                                             state.yield_trend, t, s, o.simulation, stream);
    const RevenueDraws d3 = simulate_revenue(ChannelKind::three_channel, three, channels, data.price_trend,
                                             state.yield_trend, t, s, o.simulation, stream);
    truncations[yi] = d2.iv_truncations + d3.iv_truncations;
    clamps[yi] = d2.price_clamps + d3.price_clamps;
    draws[yi] = d2.price.size() + d3.price.size();
    for (double psi : o.coverages) {
      for (const auto& [i, a] : insured) {
        PremiumRow row;
        row.state = state.state;
        row.county = state.county[i];
        row.year = year;
        row.coverage = psi;
        row.stocks = s;
        row.aph = a.value;
        row.aph_complete = a.complete;
        row.realized_indemnity = indemnity(psi, ms.feb_futures[yi], a.value, ms.harvest_price[yi], state.yield[i]);
        row.premium_two = premium_from_draws(d2, psi, a.value);
        row.premium_three = premium_from_draws(d3, psi, a.value);
        per_year[yi].push_back(std::move(row));
      }
    }
  });
  PremiumRun run;
  for (std::size_t yi = 0; yi < ms.size(); ++yi) {
    run.rows.insert(run.rows.end(), per_year[yi].begin(), per_year[yi].end());
    run.iv_truncations += truncations[yi];
    run.price_clamps += clamps[yi];
    run.draws += draws[yi];
  }
  return run;
}

RatingGameResult rating_game_for(const std::vector<PremiumRow>& rows, double coverage, TieRule ties, bool swap) {
  std::vector<RatingPolicy> policies;
  for (const auto& r : rows) {
    if (r.coverage != coverage) continue;
    RatingPolicy p;
    p.year = r.year;
    p.indemnity = r.realized_indemnity;
    p.premium_candidate = swap ? r.premium_two : r.premium_three;
    p.premium_reference = swap ? r.premium_three : r.premium_two;
    policies.push_back(p);
  }
  if (policies.empty()) throw InvalidArgument("rating game: no policies at the requested coverage");
  return rating_game(policies, ties);
}

}  // namespace sqr
