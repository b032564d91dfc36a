#include "sqr_app/commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "sqr/error.hpp"
#include "sqr/market_data.hpp"
#include "sqr/number_format.hpp"
#include "sqr/pipeline.hpp"
#include "sqr/simstudy.hpp"
#include "sqr_app/config.hpp"
#include "sqr_app/output.hpp"

#ifndef SQR_VERSION
#define SQR_VERSION "0.0.0"
#endif

namespace sqr::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const std::set<std::string> kGeneralKeys{"seed", "workers", "out", "label"};
const std::set<std::string> kDataKeys{"market", "yields", "states", "loess_span", "knot_spacing_years"};
const std::set<std::string> kModelKeys{"tau_grid",         "selection_taus",   "lambda_grid",       "lambda_min",
                                       "lambda_max",       "lambda_count",     "price_lambda",      "yield_lambda",
                                       "degree",           "interior_knots",   "difference_order",  "tau_clamp_low",
                                       "tau_clamp_high",   "support_expansion", "max_iterations",   "tolerance"};

std::set<std::string> keys(std::initializer_list<const std::set<std::string>*> groups,
                           std::initializer_list<const char*> extra) {
  std::set<std::string> out;
  for (const auto* g : groups) out.insert(g->begin(), g->end());
  for (const char* e : extra) out.insert(e);
  return out;
}

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> table{
      {"detrend", keys({&kGeneralKeys, &kDataKeys}, {})},
      {"fit", keys({&kGeneralKeys, &kDataKeys, &kModelKeys}, {"report_taus", "stocks_points"})},
      {"sample", keys({&kGeneralKeys, &kDataKeys, &kModelKeys},
                      {"model", "stocks", "draws", "target_year", "base_year"})},
      {"correlate", keys({&kGeneralKeys, &kDataKeys, &kModelKeys},
                         {"draws", "stocks_points", "target_year", "base_year", "jackknife", "jackknife_groups",
                          "grouping", "curve_span", "units"})},
      {"premium", keys({&kGeneralKeys, &kDataKeys, &kModelKeys},
                       {"coverages", "draws", "iv_scale", "iv_floor", "iv_form", "aph_window", "require_full_aph"})},
      {"rating-game", keys({&kGeneralKeys, &kDataKeys, &kModelKeys},
                           {"coverages", "draws", "iv_scale", "iv_floor", "iv_form", "aph_window", "require_full_aph",
                            "tie_rule", "swap_roles"})},
      {"simstudy", keys({&kGeneralKeys, &kModelKeys},
                        {"years", "counties", "replicates", "price_mode", "draws", "density_grid", "density_stocks",
                         "price_only", "curve_points", "curve_taus", "alpha_price", "alpha_yield"})},
  };
  return table;
}

/// Everything a command needs besides its own keys.
struct Context {
  std::string command;
  Config config;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  fs::path config_path;
  std::ostream* log = nullptr;
  std::string stage = "configuration";
  json diagnostics = json::object();
  json inputs = json::array();
  std::optional<DecadeSummary> decades;
};

std::size_t positive_count(const Config& c, const std::string& key, long long fallback) {
  const long long v = c.get_int(key, fallback);
  if (v < 1) throw ConfigError("'" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

double fraction_in(const Config& c, const std::string& key, double fallback, bool closed_upper) {
  const double v = c.get_double(key, fallback);
  if (!(v > 0.0 && (closed_upper ? v <= 1.0 : v < 1.0)))
    throw ConfigError("'" + key + "' must lie in (0, 1" + std::string(closed_upper ? "]" : ")"));
  return v;
}

std::vector<double> lambda_grid(const Config& c) {
  if (c.has("lambda_grid")) {
    auto g = c.get_doubles("lambda_grid", {});
    for (double l : g)
      if (!(l >= 0.0)) throw ConfigError("'lambda_grid' values must be >= 0");
    std::sort(g.begin(), g.end());
    return g;
  }
  const double lo = c.get_double("lambda_min", 1e-4);
  const double hi = c.get_double("lambda_max", 1e4);
  const auto n = positive_count(c, "lambda_count", 25);
  if (!(lo > 0.0 && hi >= lo)) throw ConfigError("need 0 < lambda_min <= lambda_max");
  return log_spaced(lo, hi, n);
}

JointModelOptions model_options(const Context& ctx) {
  const Config& c = ctx.config;
  JointModelOptions o;
  o.tau_grid = c.get_doubles("tau_grid", o.tau_grid);
  o.selection_taus = c.get_doubles("selection_taus", o.selection_taus);
  for (double t : o.tau_grid)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("'tau_grid' values must lie in (0, 1)");
  for (std::size_t i = 1; i < o.tau_grid.size(); ++i)
    if (!(o.tau_grid[i] > o.tau_grid[i - 1])) throw ConfigError("'tau_grid' must be strictly increasing");
  if (o.tau_grid.size() < 2) throw ConfigError("'tau_grid' needs at least two values");
  for (double t : o.selection_taus)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("'selection_taus' values must lie in (0, 1)");
  o.lambda_grid = lambda_grid(c);
  if (auto v = c.get_optional_double("price_lambda")) {
    if (!(*v >= 0.0)) throw ConfigError("'price_lambda' must be >= 0");
    o.price_lambda = v;
  }
  if (auto v = c.get_optional_double("yield_lambda")) {
    if (!(*v >= 0.0)) throw ConfigError("'yield_lambda' must be >= 0");
    o.yield_lambda = v;
  }
  o.degree = static_cast<int>(c.get_int("degree", 3));
  o.interior_count = static_cast<int>(c.get_int("interior_knots", 4));
  o.difference_order = static_cast<int>(c.get_int("difference_order", 2));
  if (o.degree < 0 || o.degree > 10) throw ConfigError("'degree' must lie in [0, 10]");
  if (o.interior_count < 1) throw ConfigError("'interior_knots' must be >= 1");
  if (o.difference_order < 1) throw ConfigError("'difference_order' must be >= 1");
  o.tau_clamp = {c.get_double("tau_clamp_low", 0.001), c.get_double("tau_clamp_high", 0.999)};
  if (!(o.tau_clamp.lower > 0.0 && o.tau_clamp.lower < o.tau_clamp.upper && o.tau_clamp.upper < 1.0))
    throw ConfigError("need 0 < tau_clamp_low < tau_clamp_high < 1");
  o.support_expansion = c.get_double("support_expansion", 0.05);
  if (!(o.support_expansion >= 0.0)) throw ConfigError("'support_expansion' must be >= 0");
  o.solver.max_iterations = static_cast<int>(c.get_int("max_iterations", 500));
  o.solver.relative_tolerance = c.get_double("tolerance", 1e-10);
  if (o.solver.max_iterations < 1 || !(o.solver.relative_tolerance > 0.0))
    throw ConfigError("'max_iterations' and 'tolerance' must be positive");
  o.workers = ctx.workers;
  return o;
}

PreparedData load_data(Context& ctx) {
  const Config& c = ctx.config;
  const fs::path market = c.require_string("market");
  const fs::path yields = c.require_string("yields");
  PrepareOptions po;
  po.loess_span = c.get_double("loess_span", 0.75);
  if (!(po.loess_span > 0.0)) throw ConfigError("'loess_span' must be positive");
  po.trend.knot_spacing_years = static_cast<int>(c.get_int("knot_spacing_years", 10));
  if (po.trend.knot_spacing_years < 1) throw ConfigError("'knot_spacing_years' must be >= 1");
  po.states = c.get_strings("states", {});

  ctx.stage = "ingestion";
  const MarketSeries series = ingest_market(market);
  const YieldPanel panel = ingest_yields(yields);
  ctx.inputs.push_back({{"path", market.string()}, {"fnv1a64", file_hash(market)}, {"rows", series.size()}});
  ctx.inputs.push_back({{"path", yields.string()}, {"fnv1a64", file_hash(yields)}, {"rows", panel.size()}});
  json counts = json::object();
  for (const auto& [state, n] : panel.counts_by_state()) counts[state] = n;
  ctx.diagnostics["records_by_state"] = counts;
  for (const auto& s : po.states)
    if (!panel.counts_by_state().count(s)) throw IngestError("no yield records for state '" + s + "'");

  ctx.decades = decade_summary(series, panel);
  ctx.stage = "detrending";
  return prepare_data(series, panel, po);
}

RandomStream stream(const Context& ctx, const std::string& name) { return RandomStream(ctx.seed).child(name); }

// ---------------------------------------------------------------- detrend

void cmd_detrend(Context& ctx, OutputStage& out) {
  const PreparedData d = load_data(ctx);
  ctx.stage = "output";
  const auto& ms = d.series;
  CsvWriter prices(out.file("detrended_prices.csv"),
                   {"year", "time", "harvest_price", "log_trend", "detrended", "trend_sd", "stocks_normalized"});
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const double t = d.time_of(ms.year[i]);
    prices.row({ms.year[i], t, ms.harvest_price[i], d.price_trend.mean(t), d.price_detrended[i],
                std::sqrt(d.price_trend.variance(t)), d.stocks[i]});
  }
  prices.close();

  CsvWriter yields(out.file("detrended_yields.csv"), {"state", "county", "year", "yield", "trend", "detrended"});
  CsvWriter trends(out.file("trends.csv"),
                   {"series", "lambda", "sigma2", "criterion", "sample_count", "coefficients", "gram_singular"});
  auto trend_row = [&](const std::string& name, const TrendModel& m) {
    std::vector<double> coef(m.coefficients.data(), m.coefficients.data() + m.coefficients.size());
    std::string joined;
    for (std::size_t i = 0; i < coef.size(); ++i) joined += (i ? " " : "") + format_double(coef[i]);
    trends.row({name, m.lambda, m.sigma2, m.criterion, m.sample_count, joined, m.gram_singular});
  };
  trend_row("log_price", d.price_trend);
  CsvWriter ar1(out.file("ar1.csv"), {"state", "rho0", "rho1", "se_rho1", "ci_lower", "ci_upper", "pairs", "stationary"});
  for (const auto& s : d.states) {
    for (std::size_t i = 0; i < s.yield.size(); ++i) {
      const double t = d.time_of(s.year[i]);
      yields.row({s.state, s.county[i], s.year[i], s.yield[i], s.yield_trend.mean(t), s.panel.yield[i]});
    }
    trend_row("yield:" + s.state, s.yield_trend);
    try {
      const AR1Fit f = fit_ar1(s.county, s.year, s.panel.yield, s.state);
      ar1.row({f.state, f.rho0, f.rho1, f.se_rho1, f.ci95.lower, f.ci95.upper, f.pairs, f.stationary});
      if (!f.stationary) *ctx.log << "warning: AR-1 slope for " << s.state << " is outside (-1, 1)\n";
    } catch (const InvalidArgument& e) {
      *ctx.log << "warning: AR-1 skipped for " << s.state << ": " << e.what() << "\n";
    }
  }
  yields.close();
  trends.close();
  ar1.close();

  CsvWriter summary(out.file("decade_summary.csv"), {"variable", "decade", "count", "mean", "sd"});
  auto stat_rows = [&](const std::string& name, const std::vector<DecadeStat>& stats) {
    for (const auto& st : stats) summary.row({name, st.decade, st.count, st.mean, st.sd});
  };
  stat_rows("stocks", ctx.decades->stocks);
  stat_rows("harvest_price", ctx.decades->harvest_price);
  stat_rows("yield", ctx.decades->yield);
  summary.close();
}

// ---------------------------------------------------------------- fit

void gacv_rows(CsvWriter& w, const std::string& state, const std::string& model, const std::string& target,
               const std::optional<GacvResult>& g, double lambda) {
  if (!g) {
    w.row({state, model, target, lambda, std::numeric_limits<double>::quiet_NaN(), false, true});
    return;
  }
  for (const auto& p : g->grid) w.row({state, model, target, p.lambda, p.criterion, p.skipped, p.lambda == g->lambda});
}

void coefficient_rows(CsvWriter& w, const std::string& state, const std::string& model, const std::string& target,
                      const JointModel& m, const Eigen::MatrixXd& coef, double lambda) {
  for (Eigen::Index i = 0; i < coef.rows(); ++i)
    for (Eigen::Index j = 0; j < coef.cols(); ++j)
      w.row({state, model, target, m.tau_grid[static_cast<std::size_t>(i)], lambda, static_cast<long long>(j),
             coef(i, j)});
}

void cmd_fit(Context& ctx, OutputStage& out) {
  const JointModelOptions mo = model_options(ctx);
  const auto report_taus = ctx.config.get_doubles("report_taus", {0.1, 0.25, 0.5, 0.75, 0.9});
  const auto points = positive_count(ctx.config, "stocks_points", 25);
  const PreparedData d = load_data(ctx);

  ctx.stage = "quantile fitting";
  CsvWriter gacv(out.file("gacv.csv"), {"state", "model", "target", "lambda", "criterion", "skipped", "selected"});
  CsvWriter coef(out.file("coefficients.csv"), {"state", "model", "target", "tau", "lambda", "index", "value"});
  CsvWriter knots(out.file("knots.csv"), {"state", "model", "basis", "index", "knot"});
  CsvWriter curves(out.file("quantile_curves.csv"), {"state", "stocks", "tau", "price_quantile"});
  const std::vector<double> grid = default_stocks_grid(d.stocks, std::max<std::size_t>(points, 2));
  json uncertified = json::object();
  for (const auto& s : d.states) {
    const JointModel cond = fit_conditional(s.panel, mo);
    const JointModel uncond = fit_unconditional(s.panel, mo);
    uncertified[s.state] = cond.uncertified_fits + uncond.uncertified_fits;
    gacv_rows(gacv, s.state, "conditional", "price", cond.price_gacv, cond.price_lambda);
    gacv_rows(gacv, s.state, "conditional", "yield", cond.yield_gacv, cond.yield_lambda);
    gacv_rows(gacv, s.state, "unconditional", "yield", uncond.yield_gacv, uncond.yield_lambda);
    coefficient_rows(coef, s.state, "conditional", "price", cond, cond.price_coefficients, cond.price_lambda);
    coefficient_rows(coef, s.state, "conditional", "yield", cond, cond.yield_coefficients, cond.yield_lambda);
    coefficient_rows(coef, s.state, "unconditional", "price", uncond, uncond.price_coefficients, 0.0);
    coefficient_rows(coef, s.state, "unconditional", "yield", uncond, uncond.yield_coefficients, uncond.yield_lambda);
    auto knot_rows = [&](const std::string& model, const std::string& basis, const BSplineBasis& b) {
      for (std::size_t k = 0; k < b.knots().size(); ++k) knots.row({s.state, model, basis, k, b.knots()[k]});
    };
    knot_rows("conditional", "price|stocks", cond.price_bases.front());
    knot_rows("conditional", "yield|price", cond.yield_bases[0]);
    knot_rows("conditional", "yield|stocks", cond.yield_bases[1]);
    knot_rows("unconditional", "yield|price", uncond.yield_bases[0]);
    for (double sv : grid) {
      const auto q = cond.price_quantiles(sv);
      for (double tau : report_taus) curves.row({s.state, sv, tau, cond.interpolate(q, tau)});
    }
  }
  ctx.diagnostics["uncertified_fits"] = uncertified;
  ctx.stage = "output";
  gacv.close();
  coef.close();
  knots.close();
  curves.close();
}

// ---------------------------------------------------------------- sample

std::optional<int> optional_year(const Config& c, const std::string& key) {
  if (!c.has(key)) return std::nullopt;
  return static_cast<int>(c.get_int(key, 0));
}

double deflator_for(const PreparedData& d, int year) {
  const auto i = d.series.index_of(year);
  if (!i) throw ConfigError("no GDP deflator for target year " + std::to_string(year));
  return d.series.gdp_deflator[*i];
}

void cmd_sample(Context& ctx, OutputStage& out) {
  const Config& c = ctx.config;
  const JointModelOptions mo = model_options(ctx);
  const std::string kind = c.get_choice("model", "conditional", {"conditional", "unconditional"});
  const auto draws = positive_count(c, "draws", 1000);
  const PreparedData d = load_data(ctx);
  std::vector<double> stocks = c.get_doubles("stocks", {});
  if (stocks.empty()) {
    std::vector<double> sorted = d.stocks;
    std::sort(sorted.begin(), sorted.end());
    stocks.push_back(sample_quantile_sorted(sorted, 0.5));
  }
  const int target = optional_year(c, "target_year").value_or(d.series.year.back());
  const int base = optional_year(c, "base_year").value_or(target);
  const double deflator = deflator_for(d, target);

  ctx.stage = "sampling";
  CsvWriter w(out.file("draws.csv"),
              {"state", "stocks", "draw", "price_detrended", "yield_detrended", "price", "yield"});
  CsvWriter summary(out.file("draw_summary.csv"), {"state", "stocks", "draws", "mean_price", "mean_yield", "sd_price",
                                                   "sd_yield", "correlation", "clamp_fraction"});
  for (const auto& s : d.states) {
    const bool conditional = kind == "conditional";
    const JointModel m = conditional ? fit_conditional(s.panel, mo) : fit_unconditional(s.panel, mo);
    const RetrendSpec spec{&d.price_trend, &s.yield_trend, d.time_of(target), d.time_of(base), deflator};
    for (std::size_t k = 0; k < stocks.size(); ++k) {
      const RandomStream rng = stream(ctx, "sample").child(s.state).child(static_cast<std::uint64_t>(k));
      JointDraws jd = conditional ? sample_conditional(m, stocks[k], draws, rng.child("draws"), ctx.workers)
                                  : sample_unconditional(m, draws, rng.child("draws"), ctx.workers);
      retrend_and_rebase(jd, spec, rng.child("trend"));
      for (std::size_t r = 0; r < jd.size(); ++r)
        w.row({s.state, stocks[k], r, jd.price_detrended[r], jd.yield_detrended[r], jd.price[r], jd.yield[r]});
      const Moments mm = moments_from_draws(jd);
      summary.row({s.state, stocks[k], jd.size(), mm.mean_price, mm.mean_yield, mm.sd_price, mm.sd_yield,
                   mm.correlation, jd.clamp_fraction()});
    }
  }
  ctx.stage = "output";
  w.close();
  summary.close();
}

// ---------------------------------------------------------------- correlate

void cmd_correlate(Context& ctx, OutputStage& out) {
  const Config& c = ctx.config;
  CurveOptions co;
  co.model = model_options(ctx);
  co.draws = positive_count(c, "draws", 1000);
  co.target_year = optional_year(c, "target_year");
  co.base_year = optional_year(c, "base_year");
  co.jackknife = c.get_bool("jackknife", true);
  co.jackknife_groups = positive_count(c, "jackknife_groups", 50);
  if (co.jackknife && co.jackknife_groups < 2) throw ConfigError("'jackknife_groups' must be >= 2");
  co.grouping = c.get_choice("grouping", "round_robin", {"round_robin", "whole_county"}) == "whole_county"
                    ? JackknifeGrouping::whole_county
                    : JackknifeGrouping::round_robin;
  co.loess_span = c.get_double("curve_span", 0.75);
  co.rebase = c.get_choice("units", "rebased", {"rebased", "detrended"}) == "rebased";
  co.workers = ctx.workers;
  const auto points = positive_count(c, "stocks_points", 25);
  if (points < 3) throw ConfigError("'stocks_points' must be >= 3");
  const PreparedData d = load_data(ctx);
  co.stocks_grid = default_stocks_grid(d.stocks, points);
  if (co.target_year) deflator_for(d, *co.target_year);

  ctx.stage = "correlation curves";
  CsvWriter w(out.file("correlation_curves.csv"),
              {"state", "stocks", "corr_conditional", "corr_conditional_smoothed", "corr_jackknife_var",
               "band_lower", "band_upper", "corr_unconditional", "corr_unconditional_smoothed", "sd_price_conditional",
               "sd_price_conditional_smoothed", "sd_price_jackknife_var", "sd_price_unconditional",
               "sd_yield_conditional", "sd_yield_unconditional"});
  json clamp = json::object();
  for (const auto& s : d.states) {
    const CorrelationCurves cc = correlation_curves(d, s, co, stream(ctx, "correlate").child(s.state));
    clamp[s.state] = cc.conditional.clamp_fraction;
    for (std::size_t i = 0; i < cc.stocks.size(); ++i)
      w.row({s.state, cc.stocks[i], cc.conditional.correlation[i], cc.corr_smoothed[i], cc.corr_variance[i],
             cc.band_lower[i], cc.band_upper[i], cc.unconditional.correlation[i], cc.unconditional_smoothed[i],
             cc.conditional.sd_price[i], cc.sd_price_smoothed[i], cc.sd_price_variance[i],
             cc.unconditional.sd_price[i], cc.conditional.sd_yield[i], cc.unconditional.sd_yield[i]});
  }
  ctx.diagnostics["clamp_fraction"] = clamp;
  ctx.stage = "output";
  w.close();
}

// ---------------------------------------------------------------- premium / rating game

PremiumRunOptions premium_options(Context& ctx) {
  const Config& c = ctx.config;
  PremiumRunOptions o;
  o.coverages = c.get_doubles("coverages", o.coverages);
  for (double v : o.coverages)
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError("'coverages' values must lie in (0, 1]");
  o.simulation.draws = positive_count(c, "draws", 1000);
  o.simulation.iv_scale = c.get_double("iv_scale", 1.0);
  o.simulation.iv_floor = c.get_double("iv_floor", 1e-4);
  if (!(o.simulation.iv_scale > 0.0) || !(o.simulation.iv_floor > 0.0))
    throw ConfigError("'iv_scale' and 'iv_floor' must be positive");
  o.channels.iv_form = c.get_choice("iv_form", "log_mean", {"log_mean", "levels"}) == "levels" ? IvForm::levels
                                                                                             : IvForm::log_mean;
  o.model = model_options(ctx);
  o.channels.degree = o.model.degree;
  o.channels.interior_count = o.model.interior_count;
  o.channels.lambda_grid = o.model.lambda_grid;
  o.aph_window = static_cast<int>(positive_count(c, "aph_window", 10));
  o.require_full_aph = c.get_bool("require_full_aph", false);
  o.workers = ctx.workers;
  return o;
}

std::vector<PremiumRow> run_premiums(Context& ctx, const PreparedData& d, const PremiumRunOptions& o,
                                     OutputStage& out) {
  ctx.stage = "premium simulation";
  std::vector<PremiumRow> all;
  std::size_t truncations = 0, clamps = 0, draws = 0, incomplete = 0;
  for (const auto& s : d.states) {
    const PremiumRun run = premium_table(d, s, o, stream(ctx, "premium"));
    truncations += run.iv_truncations;
    clamps += run.price_clamps;
    draws += run.draws;
    all.insert(all.end(), run.rows.begin(), run.rows.end());
  }
  CsvWriter w(out.file("premiums.csv"), {"state", "county", "year", "coverage", "stocks", "aph", "aph_complete",
                                         "realized_indemnity", "premium_two_channel", "premium_three_channel"});
  for (const auto& r : all) {
    if (!r.aph_complete) ++incomplete;
    w.row({r.state, r.county, r.year, r.coverage, r.stocks, r.aph, r.aph_complete, r.realized_indemnity,
           r.premium_two, r.premium_three});
  }
  w.close();
  ctx.diagnostics["iv_truncations"] = truncations;
  ctx.diagnostics["price_clamps"] = clamps;
  ctx.diagnostics["simulated_draws"] = draws;
  ctx.diagnostics["policies_with_short_aph_history"] = incomplete;
  return all;
}

void cmd_premium(Context& ctx, OutputStage& out) {
  const PremiumRunOptions o = premium_options(ctx);
  const PreparedData d = load_data(ctx);
  run_premiums(ctx, d, o, out);
}

void cmd_rating_game(Context& ctx, OutputStage& out) {
  const PremiumRunOptions o = premium_options(ctx);
  const TieRule ties =
      ctx.config.get_choice("tie_rule", "retain", {"retain", "cede"}) == "cede" ? TieRule::cede : TieRule::retain;
  const bool swap = ctx.config.get_bool("swap_roles", false);
  const PreparedData d = load_data(ctx);
  const std::vector<PremiumRow> rows = run_premiums(ctx, d, o, out);

  ctx.stage = "rating game";
  CsvWriter years(out.file("rating_game_years.csv"),
                  {"state", "coverage", "year", "d", "defined", "lr_candidate_cede", "lr_candidate_retain",
                   "lr_reference_cede", "lr_reference_retain"});
  CsvWriter summary(out.file("rating_game.csv"),
                    {"state", "coverage", "d_star", "years_used", "years_excluded", "p_value"});
  for (const auto& s : d.states) {
    std::vector<PremiumRow> mine;
    for (const auto& r : rows)
      if (r.state == s.state) mine.push_back(r);
    for (double psi : o.coverages) {
      const RatingGameResult g = rating_game_for(mine, psi, ties, swap);
      for (const auto& y : g.years)
        years.row({s.state, psi, y.year, y.d, y.defined, y.lr_candidate_cede, y.lr_candidate_retain,
                   y.lr_reference_cede, y.lr_reference_retain});
      summary.row({s.state, psi, g.d_star, g.years_used, g.years_excluded, g.p_value});
    }
  }
  ctx.stage = "output";
  years.close();
  summary.close();
}

// ---------------------------------------------------------------- simstudy

void cmd_simstudy(Context& ctx, OutputStage& out) {
  const Config& c = ctx.config;
  SimStudyOptions base;
  JointModelOptions mo = model_options(ctx);
  // Simulation supports unless overridden by the generic expansion keys.
  mo.price_support = Interval{-1.0, 1.0};
  mo.stock_support = Interval{0.0, 1.0};
  mo.workers = 1;
  base.model = mo;
  base.config.years = static_cast<int>(positive_count(c, "years", 100));
  base.config.counties = static_cast<int>(positive_count(c, "counties", 500));
  base.config.replicates = static_cast<int>(positive_count(c, "replicates", 100));
  base.config.alpha_price = c.get_double("alpha_price", 3.0);
  base.config.alpha_yield = c.get_double("alpha_yield", -3.0);
  if (base.config.years < 2) throw ConfigError("'years' must be >= 2");
  base.draws = positive_count(c, "draws", 10000);
  if (base.draws < 2) throw ConfigError("'draws' must be >= 2");
  base.density_grid = positive_count(c, "density_grid", 25);
  if (base.density_grid < 2) throw ConfigError("'density_grid' must be >= 2");
  base.density_stocks = c.get_doubles("density_stocks", base.density_stocks);
  base.curve_taus = c.get_doubles("curve_taus", base.curve_taus);
  for (double t : base.curve_taus)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("'curve_taus' values must lie in (0, 1)");
  for (double s : base.density_stocks)
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("'density_stocks' values must lie in (0, 1)");
  base.price_only = c.get_bool("price_only", false);
  base.workers = ctx.workers;
  const auto curve_points = positive_count(c, "curve_points", 50);
  if (curve_points < 2) throw ConfigError("'curve_points' must be >= 2");
  const std::string mode_key = c.get_choice("price_mode", "both", {"linear", "nonlinear", "both"});
  std::vector<std::pair<std::string, PriceMode>> modes;
  if (mode_key != "nonlinear") modes.emplace_back("linear", PriceMode::linear);
  if (mode_key != "linear") modes.emplace_back("nonlinear", PriceMode::nonlinear);
  {
    const double lo = beta_quantile(0.005, base.config.stocks_a, base.config.stocks_b);
    const double hi = beta_quantile(0.995, base.config.stocks_a, base.config.stocks_b);
    for (std::size_t i = 0; i < curve_points; ++i)
      base.curve_stocks.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(curve_points - 1));
  }

  ctx.stage = "simulation study";
  CsvWriter mise_csv(out.file("simstudy_mise.csv"), {"mode", "replicate", "stocks", "mise", "clamp_fraction"});
  CsvWriter curves(out.file("simstudy_curves.csv"), {"mode", "replicate", "tau", "stocks", "estimate"});
  CsvWriter bands(out.file("simstudy_bands.csv"), {"mode", "tau", "stocks", "truth", "lower", "upper", "covered"});
  json summary = json::object();
  for (const auto& [name, mode] : modes) {
    SimStudyOptions o = base;
    o.config.price_mode = mode;
    std::ostream* log = ctx.log;
    const std::string label = name;
    o.progress = [log, label, total = o.config.replicates](std::size_t r) {
      *log << "simstudy " << label << ": replicate " << (r + 1) << "/" << total << " done\n";
    };
    const SimStudyResult res = run_simstudy(o, stream(ctx, "simstudy").child(name));
    for (std::size_t r = 0; r < res.replicates.size(); ++r) {
      const auto& rep = res.replicates[r];
      for (std::size_t k = 0; k < rep.mise.size(); ++k)
        mise_csv.row({name, r, res.density_stocks[k], rep.mise[k], rep.clamp_fraction[k]});
      for (Eigen::Index i = 0; i < rep.price_curves.rows(); ++i)
        for (Eigen::Index j = 0; j < rep.price_curves.cols(); ++j)
          curves.row({name, r, res.curve_taus[static_cast<std::size_t>(i)], res.curve_stocks[static_cast<std::size_t>(j)],
                      rep.price_curves(i, j)});
    }
    json coverage = json::object();
    for (Eigen::Index i = 0; i < res.true_curves.rows(); ++i) {
      for (Eigen::Index j = 0; j < res.true_curves.cols(); ++j) {
        const double truth = res.true_curves(i, j);
        bands.row({name, res.curve_taus[static_cast<std::size_t>(i)], res.curve_stocks[static_cast<std::size_t>(j)],
                   truth, res.band_lower(i, j), res.band_upper(i, j),
                   truth >= res.band_lower(i, j) && truth <= res.band_upper(i, j)});
      }
      coverage[format_double(res.curve_taus[static_cast<std::size_t>(i)])] = res.coverage[static_cast<std::size_t>(i)];
    }
    json m = json::object();
    for (std::size_t k = 0; k < res.mean_mise.size(); ++k) m[format_double(res.density_stocks[k])] = res.mean_mise[k];
    summary[name] = {{"replicates", res.replicates.size()}, {"mean_mise", m}, {"band_coverage", coverage}};
  }
  ctx.stage = "output";
  mise_csv.close();
  curves.close();
  bands.close();
  write_json(out.file("simstudy_summary.json"), summary);
}

const std::map<std::string, std::function<void(Context&, OutputStage&)>>& handlers() {
  static const std::map<std::string, std::function<void(Context&, OutputStage&)>> table{
      {"detrend", cmd_detrend},   {"fit", cmd_fit},         {"sample", cmd_sample},
      {"correlate", cmd_correlate}, {"premium", cmd_premium}, {"rating-game", cmd_rating_game},
      {"simstudy", cmd_simstudy},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"detrend", "fit", "sample", "correlate", "premium", "rating-game",
                                              "simstudy"};
  return names;
}

int run(const Invocation& inv, std::ostream& log) {
  Context ctx;
  ctx.command = inv.command;
  ctx.log = &log;
  auto fail = [&](int code, const std::string& what) {
    log << "sqr " << inv.command << ": " << ctx.stage << " failed: " << what << "\n";
    return code;
  };
  try {
    const auto handler = handlers().find(inv.command);
    if (handler == handlers().end()) return fail(exit_usage, "unknown subcommand '" + inv.command + "'");
    ctx.config_path = inv.config;
    ctx.config = Config::load(inv.config);
    ctx.config.require_known(allowed_keys().at(inv.command), inv.command);
    if (inv.seed) ctx.config.set("seed", std::to_string(*inv.seed));
    ctx.seed = ctx.config.get_uint64("seed", 1);
    ctx.workers = inv.workers.value_or(positive_count(ctx.config, "workers", 1));
    const fs::path out_dir = inv.out ? *inv.out : fs::path(ctx.config.get_string("out", "out"));

    // Keys that do not change numeric results stay out of the hash.
    Config hashed = Config::parse(ctx.config.canonical());
    std::string canonical;
    for (const auto& [k, v] : hashed.values())
      if (k != "workers" && k != "out") canonical += k + " = " + v + "\n";

    OutputStage stage(out_dir);
    handler->second(ctx, stage);

    ctx.stage = "output";
    {
      std::ofstream cfg(stage.file("run.cfg"), std::ios::binary);
      cfg << "# effective configuration of this run\n" << canonical;
      if (!cfg) throw IngestError("cannot write run.cfg");
    }
    json manifest;
    manifest["tool"] = "sqr";
    manifest["version"] = SQR_VERSION;
    manifest["command"] = inv.command;
    manifest["seed"] = ctx.seed;
    manifest["workers"] = ctx.workers;
    manifest["config_hash"] = hex64(fnv1a64(canonical));
    json cfg = json::object();
    for (const auto& [k, v] : hashed.values())
      if (k != "workers" && k != "out") cfg[k] = v;
    manifest["config"] = cfg;
    manifest["inputs"] = ctx.inputs;
    std::vector<std::string> outputs = stage.files();
    outputs.push_back("manifest.json");
    manifest["outputs"] = outputs;
    manifest["diagnostics"] = ctx.diagnostics;
    write_json(stage.file("manifest.json"), manifest);
    stage.commit();
    return exit_ok;
  } catch (const ConfigError& e) {
    return fail(exit_config, e.what());
  } catch (const IngestError& e) {
    return fail(exit_ingest, e.what());
  } catch (const NumericError& e) {
    return fail(exit_numeric, e.what());
  } catch (const InvalidArgument& e) {
    return fail(ctx.stage == "configuration" ? exit_config : exit_numeric, e.what());
  } catch (const std::exception& e) {
    return fail(exit_internal, e.what());
  }
}

}  // namespace sqr::app
