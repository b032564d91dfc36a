#include "sqr/joint_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sqr/error.hpp"
#include "sqr/parallel.hpp"

namespace sqr {

void DetrendedPanel::validate() const {
  const std::size_t t = years.size();
  if (t == 0) throw InvalidArgument("DetrendedPanel: no years");
  if (price.size() != t || stocks.size() != t) throw InvalidArgument("DetrendedPanel: yearly columns differ in length");
  if (obs_year.size() != yield.size()) throw InvalidArgument("DetrendedPanel: yield columns differ in length");
  for (std::size_t i = 0; i < t; ++i)
    if (!std::isfinite(price[i]) || !std::isfinite(stocks[i])) throw InvalidArgument("DetrendedPanel: non-finite yearly value");
  for (std::size_t i = 0; i < yield.size(); ++i) {
    if (obs_year[i] >= t) throw InvalidArgument("DetrendedPanel: observation year index out of range");
    if (!std::isfinite(yield[i])) throw InvalidArgument("DetrendedPanel: non-finite yield");
  }
}

DetrendedPanel DetrendedPanel::subset(const std::vector<char>& keep) const {
  if (keep.size() != yield.size()) throw InvalidArgument("DetrendedPanel::subset: mask length mismatch");
  DetrendedPanel out{years, price, stocks, {}, {}};
  for (std::size_t i = 0; i < yield.size(); ++i) {
    if (!keep[i]) continue;
    out.obs_year.push_back(obs_year[i]);
    out.yield.push_back(yield[i]);
  }
  return out;
}

std::vector<double> default_tau_grid() {
  std::vector<double> g(99);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i + 1) / 100.0;
  return g;
}

namespace {

Interval widened(std::span<const double> values, double fraction) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double w = *hi - *lo;
  if (w <= 0.0) w = std::max(std::abs(*lo), 1.0);
  return {*lo - fraction * w, *hi + fraction * w};
}

void check_options(const JointModelOptions& o) {
  if (o.tau_grid.size() < 2) throw InvalidArgument("joint model: tau grid needs at least two values");
  for (std::size_t i = 0; i < o.tau_grid.size(); ++i) {
    if (!(o.tau_grid[i] > 0.0 && o.tau_grid[i] < 1.0)) throw InvalidArgument("joint model: tau outside (0, 1)");
    if (i > 0 && !(o.tau_grid[i] > o.tau_grid[i - 1]))
      throw InvalidArgument("joint model: tau grid must be strictly increasing");
  }
  if (!(o.tau_clamp.lower > 0.0 && o.tau_clamp.upper < 1.0 && o.tau_clamp.lower < o.tau_clamp.upper))
    throw InvalidArgument("joint model: tau clamp must be a nonempty interval inside (0, 1)");
  if (o.selection_taus.empty()) throw InvalidArgument("joint model: empty selection tau set");
}

std::vector<double> clamped(std::span<const double> v, Interval s) {
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x = s.clamp(x);
  return out;
}

struct FitResult {
  Eigen::MatrixXd coefficients;
  double lambda = 0.0;
  std::optional<GacvResult> gacv;
  std::size_t uncertified = 0;
};

FitResult fit_grid(const Design& design, std::span<const double> response, const Eigen::MatrixXd& penalty,
                   std::optional<double> fixed_lambda, const JointModelOptions& o) {
  FitResult out;
  if (fixed_lambda) {
    out.lambda = *fixed_lambda;
  } else {
    out.gacv = gacv_select(design, response, o.selection_taus, penalty, o.lambda_grid, o.solver, o.workers);
    out.lambda = out.gacv->lambda;
  }
  const auto k = static_cast<Eigen::Index>(o.tau_grid.size());
  out.coefficients.resize(k, static_cast<Eigen::Index>(design.columns()));
  std::vector<char> certified(o.tau_grid.size(), 0);
  parallel_for(o.tau_grid.size(), o.workers, [&](std::size_t i) {
    const QuantileFit f = fit_pqr(design, response, o.tau_grid[i], out.lambda, penalty, o.solver);
    out.coefficients.row(static_cast<Eigen::Index>(i)) = f.coefficients.transpose();
    certified[i] = f.certified;
  });
  out.uncertified = static_cast<std::size_t>(std::count(certified.begin(), certified.end(), 0));
  return out;
}

Design yearly_design(std::span<const BSplineBasis> bases, const std::vector<std::vector<double>>& covariates,
                     const std::vector<std::size_t>& group_of) {
  const std::size_t t = covariates.front().size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(design_width(bases)));
  std::vector<double> x(bases.size());
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t b = 0; b < bases.size(); ++b) x[b] = covariates[b][i];
    rows.row(static_cast<Eigen::Index>(i)) = build_design(bases, x, true).transpose();
  }
  return Design(std::move(rows), group_of);
}

void fit_yield_model(JointModel& m, const DetrendedPanel& panel, const std::vector<double>& price_in_support,
                     const std::vector<double>& stocks_in_support, const JointModelOptions& o) {
  if (panel.yield.empty()) throw InvalidArgument("joint model: panel has no yield observations");
  std::vector<std::vector<double>> covariates{price_in_support};
  m.yield_bases.push_back(BSplineBasis::from_data(price_in_support, o.degree, o.interior_count, m.price_support,
                                                  KnotPlacement::quantile));
  if (m.kind == ModelKind::conditional) {
    m.yield_bases.push_back(BSplineBasis::from_data(stocks_in_support, o.degree, o.interior_count, m.stock_support,
                                                    KnotPlacement::quantile));
    covariates.push_back(stocks_in_support);
  }
  const Design design = yearly_design(m.yield_bases, covariates, panel.obs_year);
  const Eigen::MatrixXd penalty = block_penalty(m.yield_bases, o.difference_order);
  FitResult r = fit_grid(design, panel.yield, penalty, o.yield_lambda, o);
  m.yield_coefficients = std::move(r.coefficients);
  m.yield_lambda = r.lambda;
  m.yield_gacv = std::move(r.gacv);
  m.uncertified_fits += r.uncertified;
}

}  // namespace

JointModel fit_conditional(const DetrendedPanel& panel, const JointModelOptions& o) {
  panel.validate();
  check_options(o);
  const std::size_t t = panel.year_count();
  const auto p = static_cast<std::size_t>(o.degree + o.interior_count);
  if (t < p && !o.price_lambda) {
    std::ostringstream msg;
    msg << "fit_conditional: " << t << " years for " << p << " price coefficients";
    throw NumericError(msg.str());
  }
  JointModel m;
  m.kind = ModelKind::conditional;
  m.tau_grid = o.tau_grid;
  m.tau_clamp = o.tau_clamp;
  m.price_support = o.price_support.value_or(widened(panel.price, o.support_expansion));
  m.stock_support = o.stock_support.value_or(widened(panel.stocks, o.support_expansion));
  const std::vector<double> s = clamped(panel.stocks, m.stock_support);
  const std::vector<double> pr = clamped(panel.price, m.price_support);

  m.price_bases.push_back(
      BSplineBasis::from_data(s, o.degree, o.interior_count, m.stock_support, KnotPlacement::quantile));
  std::vector<std::size_t> one_each(t);
  for (std::size_t i = 0; i < t; ++i) one_each[i] = i;
  const Design design = yearly_design(m.price_bases, {s}, one_each);
  const Eigen::MatrixXd penalty = block_penalty(m.price_bases, o.difference_order);
  FitResult r = fit_grid(design, panel.price, penalty, o.price_lambda, o);
  m.price_coefficients = std::move(r.coefficients);
  m.price_lambda = r.lambda;
  m.price_gacv = std::move(r.gacv);
  m.uncertified_fits += r.uncertified;

  if (o.fit_yield) fit_yield_model(m, panel, pr, s, o);
  return m;
}

JointModel fit_unconditional(const DetrendedPanel& panel, const JointModelOptions& o) {
  panel.validate();
  check_options(o);
  JointModel m;
  m.kind = ModelKind::unconditional;
  m.tau_grid = o.tau_grid;
  m.tau_clamp = o.tau_clamp;
  m.price_support = o.price_support.value_or(widened(panel.price, o.support_expansion));
  m.stock_support = o.stock_support.value_or(widened(panel.stocks, o.support_expansion));

  // argmin_b sum rho_tau(p_t - b): the order statistic p_(ceil(T tau)).
  std::vector<double> sorted(panel.price);
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<Eigen::Index>(o.tau_grid.size());
  m.price_coefficients.resize(k, 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double pos = std::ceil(static_cast<double>(sorted.size()) * o.tau_grid[static_cast<std::size_t>(i)] - 1e-12);
    const auto j = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(pos, 1.0)), 1, sorted.size());
    m.price_coefficients(i, 0) = sorted[j - 1];
  }
  if (o.fit_yield) {
    const std::vector<double> pr = clamped(panel.price, m.price_support);
    fit_yield_model(m, panel, pr, {}, o);
  }
  return m;
}

std::vector<double> JointModel::price_quantiles(double stocks) const {
  std::vector<double> q(tau_grid.size());
  if (kind == ModelKind::unconditional) {
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = price_coefficients(static_cast<Eigen::Index>(i), 0);
  } else {
    if (!stock_support.contains(stocks)) {
      std::ostringstream msg;
      msg << "JointModel: stocks " << stocks << " outside support [" << stock_support.lower << ", "
          << stock_support.upper << "]";
      throw InvalidArgument(msg.str());
    }
    const Eigen::VectorXd b = price_bases.front().evaluate(stocks);
    const Eigen::VectorXd v = price_coefficients * b;
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = v[static_cast<Eigen::Index>(i)];
  }
  std::sort(q.begin(), q.end());
  return q;
}

std::vector<double> JointModel::yield_quantiles(double price, double stocks) const {
  if (!has_yield()) throw InvalidArgument("JointModel: no yield model");
  std::vector<double> x{price};
  if (kind == ModelKind::conditional) x.push_back(stocks);
  const Eigen::VectorXd row = build_design(yield_bases, x);
  const Eigen::VectorXd v = yield_coefficients * row;
  std::vector<double> q(v.data(), v.data() + v.size());
  std::sort(q.begin(), q.end());
  return q;
}

double JointModel::interpolate(std::span<const double> v, double tau) const {
  const std::size_t k = tau_grid.size();
  if (v.size() != k) throw InvalidArgument("JointModel::interpolate: value count differs from tau grid");
  std::size_t i;
  if (tau <= tau_grid.front()) {
    i = 0;
  } else if (tau >= tau_grid.back()) {
    i = k - 2;
  } else {
    i = static_cast<std::size_t>(std::upper_bound(tau_grid.begin(), tau_grid.end(), tau) - tau_grid.begin()) - 1;
  }
  const double w = (tau - tau_grid[i]) / (tau_grid[i + 1] - tau_grid[i]);
  return v[i] + w * (v[i + 1] - v[i]);
}

double JointModel::price_quantile(double tau, double stocks) const { return interpolate(price_quantiles(stocks), tau); }

double JointModel::yield_quantile(double tau, double price, double stocks) const {
  return interpolate(yield_quantiles(price, stocks), tau);
}

double JointModel::price_cdf(double value, double stocks) const {
  const std::vector<double> q = price_quantiles(stocks);
  const double lo = tau_clamp.lower;
  const double hi = tau_clamp.upper;
  // Nodes of the piecewise-linear quantile function restricted to the clamp.
  std::vector<double> taus{lo};
  for (double t : tau_grid)
    if (t > lo && t < hi) taus.push_back(t);
  taus.push_back(hi);
  if (value < interpolate(q, lo)) return 0.0;
  if (value >= interpolate(q, hi)) return 1.0;
  // sup { tau : Q(tau) <= value }
  double found = lo;
  for (std::size_t i = 0; i + 1 < taus.size(); ++i) {
    const double a = interpolate(q, taus[i]);
    const double b = interpolate(q, taus[i + 1]);
    if (b <= value) {
      found = taus[i + 1];
      continue;
    }
    if (a <= value) found = taus[i] + (taus[i + 1] - taus[i]) * (value - a) / (b - a);
    break;
  }
  return (found - lo) / (hi - lo);
}

namespace {

constexpr std::size_t kBlock = 1024;

JointDraws sample_impl(const JointModel& model, double stocks, std::size_t count, const RandomStream& rng,
                       std::size_t workers) {
  if (count == 0) throw InvalidArgument("sample: number of draws must be positive");
  JointDraws out;
  out.stocks = stocks;
  out.seed = rng.seed();
  out.stream_id = rng.stream_id();
  out.price_detrended.resize(count);
  if (model.has_yield()) out.yield_detrended.resize(count);

  const std::vector<double> price_q = model.price_quantiles(stocks);
  // The stocks block of the yield row is fixed for the whole draw set.
  Eigen::VectorXd stock_part;
  Eigen::MatrixXd price_coef;
  if (model.has_yield()) {
    const auto pw = static_cast<Eigen::Index>(model.yield_bases.front().size());
    price_coef = model.yield_coefficients.leftCols(pw);
    if (model.kind == ModelKind::conditional) {
      const Eigen::Index sw = model.yield_coefficients.cols() - pw;
      stock_part = model.yield_coefficients.rightCols(sw) * model.yield_bases[1].evaluate(stocks);
    } else {
      stock_part = Eigen::VectorXd::Zero(model.yield_coefficients.rows());
    }
  }

  const std::size_t blocks = (count + kBlock - 1) / kBlock;
  std::vector<std::size_t> clamps(blocks, 0);
  const Interval tc = model.tau_clamp;
  parallel_for(blocks, workers, [&](std::size_t blk) {
    RandomStream s = rng.child(static_cast<std::uint64_t>(blk));
    const std::size_t begin = blk * kBlock;
    const std::size_t end = std::min(count, begin + kBlock);
    Eigen::VectorXd yq;
    std::vector<double> sorted(model.tau_grid.size());
    for (std::size_t r = begin; r < end; ++r) {
      const double tau_p = s.uniform(tc.lower, tc.upper);
      const double tau_y = s.uniform(tc.lower, tc.upper);
      const double pv = model.interpolate(price_q, tau_p);
      out.price_detrended[r] = pv;
      if (!model.has_yield()) continue;
      double pc = pv;
      if (!model.price_support.contains(pv)) {
        pc = model.price_support.clamp(pv);
        ++clamps[blk];
      }
      yq = price_coef * model.yield_bases.front().evaluate(pc) + stock_part;
      std::copy(yq.data(), yq.data() + yq.size(), sorted.begin());
      std::sort(sorted.begin(), sorted.end());
      out.yield_detrended[r] = model.interpolate(sorted, tau_y);
    }
  });
  for (std::size_t c : clamps) out.clamp_count += c;
  return out;
}

}  // namespace

JointDraws sample_conditional(const JointModel& model, double stocks, std::size_t draws, const RandomStream& rng,
                              std::size_t workers) {
  if (model.kind != ModelKind::conditional) throw InvalidArgument("sample_conditional: model is unconditional");
  return sample_impl(model, stocks, draws, rng, workers);
}

JointDraws sample_unconditional(const JointModel& model, std::size_t draws, const RandomStream& rng,
                                std::size_t workers) {
  if (model.kind != ModelKind::unconditional) throw InvalidArgument("sample_unconditional: model is conditional");
  return sample_impl(model, std::numeric_limits<double>::quiet_NaN(), draws, rng, workers);
}

void retrend_and_rebase(JointDraws& draws, const RetrendSpec& spec, const RandomStream& rng) {
  if (!spec.price_trend || !spec.yield_trend) throw InvalidArgument("retrend_and_rebase: missing trend model");
  if (!(spec.deflator > 0.0)) throw InvalidArgument("retrend_and_rebase: deflator must be positive");
  if (draws.yield_detrended.size() != draws.size())
    throw InvalidArgument("retrend_and_rebase: draws carry no yield component");
  const TrendModel& pt = *spec.price_trend;
  const TrendModel& yt = *spec.yield_trend;
  const double p_mean = pt.mean(spec.target_time);
  const double p_sd = std::sqrt(pt.variance(spec.target_time));
  const double y_mean = yt.mean(spec.target_time);
  const double y_sd = std::sqrt(yt.variance(spec.target_time));
  const double y_base = yt.mean(spec.base_time);
  RandomStream ps = rng.child("price_trend");
  RandomStream ys = rng.child("yield_trend");
  const std::size_t n = draws.size();
  draws.price.resize(n);
  draws.yield.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double ph = p_sd > 0.0 ? ps.normal(p_mean, p_sd) : p_mean;
    const double yh = y_sd > 0.0 ? ys.normal(y_mean, y_sd) : y_mean;
    draws.price[r] = rebase_price(std::exp(ph + draws.price_detrended[r]), spec.deflator);
    draws.yield[r] = rebase_yield(yh + draws.yield_detrended[r], y_base, y_mean);
  }
}

}  // namespace sqr
