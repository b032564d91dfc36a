#include "sqr/quantile_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sqr/error.hpp"
#include "sqr/parallel.hpp"

namespace sqr {

Design::Design(Eigen::MatrixXd rows) : rows_(std::move(rows)), group_of_(static_cast<std::size_t>(rows_.rows())) {
  std::iota(group_of_.begin(), group_of_.end(), std::size_t{0});
}

Design::Design(Eigen::MatrixXd unique_rows, std::vector<std::size_t> group_of)
    : rows_(std::move(unique_rows)), group_of_(std::move(group_of)) {
  for (std::size_t g : group_of_)
    if (g >= static_cast<std::size_t>(rows_.rows())) throw InvalidArgument("Design: group index out of range");
}

Eigen::VectorXd Design::fitted(const Eigen::VectorXd& beta) const {
  const Eigen::VectorXd per_group = rows_ * beta;
  Eigen::VectorXd out(static_cast<Eigen::Index>(group_of_.size()));
  for (std::size_t i = 0; i < group_of_.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = per_group[static_cast<Eigen::Index>(group_of_[i])];
  return out;
}

Eigen::MatrixXd Design::weighted_gram(std::span<const double> weights) const {
  Eigen::VectorXd per_group = Eigen::VectorXd::Zero(rows_.rows());
  for (std::size_t i = 0; i < group_of_.size(); ++i) per_group[static_cast<Eigen::Index>(group_of_[i])] += weights[i];
  return rows_.transpose() * per_group.asDiagonal() * rows_;
}

Eigen::VectorXd Design::transpose_times(std::span<const double> v) const {
  Eigen::VectorXd per_group = Eigen::VectorXd::Zero(rows_.rows());
  for (std::size_t i = 0; i < group_of_.size(); ++i) per_group[static_cast<Eigen::Index>(group_of_[i])] += v[i];
  return rows_.transpose() * per_group;
}

double check_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("check_loss: tau must lie in (0, 1)");
  return u < 0.0 ? u * (tau - 1.0) : u * tau;
}

namespace {

inline double rho(double u, double tau) noexcept { return u < 0.0 ? u * (tau - 1.0) : u * tau; }

struct Problem {
  const Design& design;
  std::span<const double> y;
  double tau;
  double lambda;
  const Eigen::MatrixXd& penalty;
  double ridge;
};

double loss_at(const Problem& pb, const Eigen::VectorXd& beta, Eigen::VectorXd* residuals = nullptr) {
  const Eigen::VectorXd per_group = pb.design.unique_rows() * beta;
  double loss = 0.0;
  if (residuals) residuals->resize(static_cast<Eigen::Index>(pb.y.size()));
  for (std::size_t i = 0; i < pb.y.size(); ++i) {
    const double r = pb.y[i] - per_group[static_cast<Eigen::Index>(pb.design.group(i))];
    loss += rho(r, pb.tau);
    if (residuals) (*residuals)[static_cast<Eigen::Index>(i)] = r;
  }
  return loss;
}

double penalty_at(const Problem& pb, const Eigen::VectorXd& beta) {
  return 0.5 * pb.lambda * beta.dot(pb.penalty * beta);
}

// Check loss with |u| replaced by the Huber function of width eps:
// sum (h_eps(r) + (2 tau - 1) r) / 2 + (lambda / 2) b'Pb + (ridge / 2) |b|^2.
struct Smoothed {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  std::size_t in_band = 0;
};

Smoothed smoothed_at(const Problem& pb, const Eigen::VectorXd& beta, double eps, bool derivatives) {
  const auto& rows = pb.design.unique_rows();
  const Eigen::VectorXd per_group = rows * beta;
  const double skew = 2.0 * pb.tau - 1.0;
  Smoothed out;
  Eigen::VectorXd g_sum, w_sum;
  if (derivatives) {
    g_sum = Eigen::VectorXd::Zero(rows.rows());
    w_sum = Eigen::VectorXd::Zero(rows.rows());
  }
  double value = 0.0;
  for (std::size_t i = 0; i < pb.y.size(); ++i) {
    const auto g = static_cast<Eigen::Index>(pb.design.group(i));
    const double r = pb.y[i] - per_group[g];
    const double a = std::abs(r);
    double psi;
    if (a <= eps) {
      value += 0.5 * (0.5 * r * r / eps + skew * r);
      psi = r / eps;
      ++out.in_band;
      if (derivatives) w_sum[g] += 0.5 / eps;
    } else {
      value += 0.5 * (a - 0.5 * eps + skew * r);
      psi = r > 0.0 ? 1.0 : -1.0;
    }
    if (derivatives) g_sum[g] += 0.5 * (psi + skew);
  }
  const Eigen::VectorXd pbeta = pb.penalty * beta;
  out.value = value + 0.5 * pb.lambda * beta.dot(pbeta) + 0.5 * pb.ridge * beta.squaredNorm();
  if (derivatives) {
    out.gradient = -rows.transpose() * g_sum + pb.lambda * pbeta + pb.ridge * beta;
    out.hessian = rows.transpose() * w_sum.asDiagonal() * rows + pb.lambda * pb.penalty;
    out.hessian.diagonal().array() += pb.ridge;
  }
  return out;
}

struct Candidate {
  Eigen::VectorXd beta;
  double objective = std::numeric_limits<double>::infinity();
  bool certified = false;
};

// Exact minimizer on the face where the k smallest-|r| observations are
// interpolated and every other residual keeps its sign.
Candidate solve_face(const Problem& pb, const Eigen::VectorXd& residuals, const std::vector<std::size_t>& order,
                     std::size_t k) {
  const auto p = static_cast<Eigen::Index>(pb.design.columns());
  const auto kk = static_cast<Eigen::Index>(k);
  std::vector<char> in_face(pb.y.size(), 0);
  for (std::size_t j = 0; j < k; ++j) in_face[order[j]] = 1;

  std::vector<double> g(pb.y.size(), 0.0);
  for (std::size_t i = 0; i < pb.y.size(); ++i)
    if (!in_face[i]) g[i] = residuals[static_cast<Eigen::Index>(i)] < 0.0 ? pb.tau - 1.0 : pb.tau;
  const Eigen::VectorXd c = pb.design.transpose_times(g);

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(p + kk, p + kk);
  Eigen::VectorXd rhs(p + kk);
  kkt.topLeftCorner(p, p) = pb.lambda * pb.penalty;
  kkt.topLeftCorner(p, p).diagonal().array() += pb.ridge;
  rhs.head(p) = c;
  for (std::size_t j = 0; j < k; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const Eigen::RowVectorXd x = pb.design.row(order[j]);
    kkt.block(p + jj, 0, 1, p) = x;
    kkt.block(0, p + jj, p, 1) = -x.transpose();
    rhs[p + jj] = pb.y[order[j]];
  }
  const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  Candidate cand;
  cand.beta = sol.head(p);
  if (!cand.beta.allFinite()) return cand;

  Eigen::VectorXd new_residuals;
  cand.objective = loss_at(pb, cand.beta, &new_residuals) + penalty_at(pb, cand.beta);

  const double scale = 1.0 + new_residuals.cwiseAbs().maxCoeff();
  const double tol = 1e-9 * scale;
  bool ok = true;
  for (std::size_t i = 0; i < pb.y.size() && ok; ++i) {
    const double r = new_residuals[static_cast<Eigen::Index>(i)];
    if (in_face[i]) {
      ok = std::abs(r) <= tol;
    } else if (std::abs(r) > tol) {
      ok = (r < 0.0) == (residuals[static_cast<Eigen::Index>(i)] < 0.0);
    }
  }
  for (Eigen::Index j = 0; j < kk && ok; ++j) {
    const double s = sol[p + j];
    ok = s >= pb.tau - 1.0 - 1e-8 && s <= pb.tau + 1e-8;
  }
  cand.certified = ok;
  return cand;
}

double effective_df(const Problem& pb, const Eigen::VectorXd& beta, double eps) {
  Eigen::VectorXd residuals;
  loss_at(pb, beta, &residuals);
  std::vector<double> w(pb.y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 / (eps + std::abs(residuals[static_cast<Eigen::Index>(i)]));
  const Eigen::MatrixXd xwx = pb.design.weighted_gram(w);
  Eigen::MatrixXd normal = xwx + pb.lambda * pb.penalty;
  normal.diagonal().array() += pb.ridge;
  return normal.ldlt().solve(xwx).trace();
}

double median_abs_deviation_scale(std::span<const double> y) {
  std::vector<double> v(y.begin(), y.end());
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double med = *mid;
  double total = 0.0;
  for (double x : y) total += std::abs(x - med);
  double scale = total / static_cast<double>(y.size());
  if (scale > 0.0) return scale;
  double m = 0.0;
  for (double x : y) m = std::max(m, std::abs(x));
  return m > 0.0 ? m : 1.0;
}

}  // namespace

double penalized_objective(const Design& design, std::span<const double> response, double tau, double lambda,
                           const Eigen::MatrixXd& penalty, const Eigen::VectorXd& beta) {
  const Problem pb{design, response, tau, lambda, penalty, 0.0};
  return loss_at(pb, beta) + penalty_at(pb, beta);
}

QuantileFit fit_pqr(const Design& design, std::span<const double> response, double tau, double lambda,
                    const Eigen::MatrixXd& penalty, const SolverOptions& options) {
  const std::size_t n = design.observations();
  const auto p = static_cast<Eigen::Index>(design.columns());
  if (response.size() != n) throw InvalidArgument("fit_pqr: response length differs from design rows");
  if (n == 0 || p == 0) throw InvalidArgument("fit_pqr: empty problem");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("fit_pqr: tau must lie in (0, 1)");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("fit_pqr: lambda must be finite and >= 0");
  if (penalty.rows() != p || penalty.cols() != p) throw InvalidArgument("fit_pqr: penalty shape mismatch");
  if (!design.unique_rows().allFinite() || !penalty.allFinite())
    throw InvalidArgument("fit_pqr: non-finite design or penalty");
  for (double v : response)
    if (!std::isfinite(v)) throw InvalidArgument("fit_pqr: non-finite response");

  const std::vector<double> ones(n, 1.0);
  const Eigen::MatrixXd gram = design.weighted_gram(ones);
  const double ridge = options.null_ridge * std::max(gram.diagonal().mean(), 1e-300);
  const Problem pb{design, response, tau, lambda, penalty, ridge};
  const double scale = median_abs_deviation_scale(response);

  // Penalized least-squares start.
  Eigen::MatrixXd normal = gram + lambda * penalty;
  normal.diagonal().array() += ridge;
  Eigen::VectorXd beta = normal.ldlt().solve(design.transpose_times(response));

  // Damped Newton on the smoothed objective for each smoothing level.
  int iterations = 0;
  double last_change = std::numeric_limits<double>::infinity();
  bool converged = false;
  const std::size_t levels = options.smoothing_schedule.size();
  const double final_eps = scale * (levels ? options.smoothing_schedule.back() : 1e-8);
  for (std::size_t level = 0; level < levels; ++level) {
    const double eps = scale * options.smoothing_schedule[level];
    converged = false;
    Smoothed cur = smoothed_at(pb, beta, eps, true);
    while (iterations < options.max_iterations) {
      ++iterations;
      Eigen::VectorXd step = -cur.hessian.ldlt().solve(cur.gradient);
      if (!step.allFinite()) step = -cur.hessian.completeOrthogonalDecomposition().solve(cur.gradient);
      const double slope = cur.gradient.dot(step);
      if (!(slope < 0.0)) {
        last_change = 0.0;
        converged = true;
        break;
      }
      double t = 1.0;
      Eigen::VectorXd trial = beta + step;
      Smoothed next = smoothed_at(pb, trial, eps, false);
      for (int halving = 0; halving < 60 && next.value > cur.value + 1e-4 * t * slope; ++halving) {
        t *= 0.5;
        trial = beta + t * step;
        next = smoothed_at(pb, trial, eps, false);
      }
      last_change = std::abs(cur.value - next.value) / std::max(1.0, std::abs(next.value));
      if (next.value > cur.value) {
        // No descent possible at working precision.
        converged = true;
        break;
      }
      beta = trial;
      cur = smoothed_at(pb, beta, eps, true);
      if (last_change < options.relative_tolerance) {
        converged = true;
        break;
      }
    }
  }

  Candidate best;
  best.beta = beta;
  Eigen::VectorXd residuals;
  best.objective = loss_at(pb, beta, &residuals) + penalty_at(pb, beta);

  // Active-set polish over the smallest |r| observations, at most one per
  // distinct design row (tied rows cannot be interpolated separately).
  std::vector<std::size_t> by_size(n);
  std::iota(by_size.begin(), by_size.end(), std::size_t{0});
  std::sort(by_size.begin(), by_size.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(residuals[static_cast<Eigen::Index>(a)]) < std::abs(residuals[static_cast<Eigen::Index>(b)]);
  });
  std::vector<std::size_t> order;
  std::vector<char> used(design.groups(), 0);
  for (std::size_t i : by_size) {
    if (order.size() > static_cast<std::size_t>(p)) break;
    if (used[design.group(i)]) continue;
    used[design.group(i)] = 1;
    order.push_back(i);
  }
  const std::size_t max_face = order.size();
  for (std::size_t k = 0; k <= max_face; ++k) {
    Candidate cand = solve_face(pb, residuals, order, k);
    const bool better = cand.objective < best.objective - 1e-14 * std::abs(best.objective);
    if (better || (cand.certified && cand.objective <= best.objective * (1.0 + 1e-12) + 1e-300)) {
      if (better || !best.certified) best = std::move(cand);
    }
  }

  if (!converged && !best.certified) {
    std::ostringstream msg;
    msg << "fit_pqr: no convergence after " << iterations << " iterations (tau = " << tau << ", lambda = " << lambda
        << ", last relative change = " << last_change << ")";
    throw ConvergenceError(msg.str(), iterations, last_change);
  }

  QuantileFit fit;
  fit.tau = tau;
  fit.lambda = lambda;
  fit.coefficients = best.beta;
  fit.check_loss = loss_at(pb, best.beta);
  fit.penalty = penalty_at(pb, best.beta);
  fit.objective = fit.check_loss + fit.penalty;
  fit.iterations = iterations;
  fit.certified = best.certified;
  fit.observations = n;
  fit.effective_df = effective_df(pb, best.beta, final_eps);
  return fit;
}

QuantileFit fit_pqr(const Design& design, std::span<const double> response, double tau, double lambda,
                    const DifferenceMatrix& difference, const SolverOptions& options) {
  return fit_pqr(design, response, tau, lambda, difference.gram(), options);
}

double gacv_criterion(const QuantileFit& fit) {
  const double denom = static_cast<double>(fit.observations) - fit.effective_df;
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return fit.check_loss / denom;
}

GacvResult gacv_select(const Design& design, std::span<const double> response, std::span<const double> taus,
                       const Eigen::MatrixXd& penalty, std::span<const double> lambda_grid,
                       const SolverOptions& options, std::size_t workers) {
  if (lambda_grid.empty()) throw InvalidArgument("gacv_select: empty lambda grid");
  if (taus.empty()) throw InvalidArgument("gacv_select: empty tau set");
  if (!std::is_sorted(lambda_grid.begin(), lambda_grid.end()))
    throw InvalidArgument("gacv_select: lambda grid must be sorted");

  const std::size_t nt = taus.size();
  std::vector<double> criteria(lambda_grid.size() * nt);
  parallel_for(criteria.size(), workers, [&](std::size_t job) {
    const double lambda = lambda_grid[job / nt];
    const double tau = taus[job % nt];
    criteria[job] = gacv_criterion(fit_pqr(design, response, tau, lambda, penalty, options));
  });

  GacvResult result;
  result.criterion = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
    GacvPoint point{lambda_grid[l], 0.0, false};
    for (std::size_t k = 0; k < nt; ++k) {
      const double c = criteria[l * nt + k];
      if (!std::isfinite(c)) {
        point.skipped = true;
        break;
      }
      point.criterion += c;
    }
    if (point.skipped) {
      point.criterion = std::numeric_limits<double>::quiet_NaN();
      result.skipped_lambdas.push_back(point.lambda);
    } else if (point.criterion <= result.criterion) {
      // <= walks ties toward the larger lambda of an ascending grid.
      result.criterion = point.criterion;
      result.lambda = point.lambda;
      found = true;
    }
    result.grid.push_back(point);
  }
  if (!found) {
    std::ostringstream msg;
    msg << "gacv_select: criterion undefined (n - tr(H) <= 0) at every grid point:";
    for (double l : result.skipped_lambdas) msg << ' ' << l;
    throw NumericError(msg.str());
  }
  return result;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi >= lo) || n == 0) throw InvalidArgument("log_spaced: need 0 < lo <= hi and n >= 1");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  out.back() = hi;
  return out;
}

std::vector<double> default_lambda_grid() { return log_spaced(1e-4, 1e4, 25); }

double predict_quantile(const QuantileFit& fit, const Eigen::VectorXd& design_row) {
  if (design_row.size() != fit.coefficients.size()) throw InvalidArgument("predict_quantile: row length mismatch");
  return design_row.dot(fit.coefficients);
}

double predict_quantile(const QuantileFit& fit, std::span<const BSplineBasis> bases,
                        std::span<const double> covariates, bool clamp) {
  return predict_quantile(fit, build_design(bases, covariates, clamp));
}

}  // namespace sqr
