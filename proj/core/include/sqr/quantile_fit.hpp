#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqr/bspline.hpp"

namespace sqr {

/// Design matrix stored as unique rows plus a row index per observation.
/// Panels where many observations share a covariate vector (every county in a
/// year shares (p, s)) then cost O(n + g p^2) per normal-equation build.
class Design {
 public:
  Design() = default;
  /// One observation per row.
  explicit Design(Eigen::MatrixXd rows);
  /// Observation i uses unique_rows.row(group_of[i]).
  Design(Eigen::MatrixXd unique_rows, std::vector<std::size_t> group_of);

  std::size_t observations() const noexcept { return group_of_.size(); }
  std::size_t columns() const noexcept { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t groups() const noexcept { return static_cast<std::size_t>(rows_.rows()); }
  const Eigen::MatrixXd& unique_rows() const noexcept { return rows_; }
  std::size_t group(std::size_t i) const noexcept { return group_of_[i]; }
  const std::vector<std::size_t>& group_index() const noexcept { return group_of_; }

  Eigen::RowVectorXd row(std::size_t i) const { return rows_.row(static_cast<Eigen::Index>(group_of_[i])); }
  /// X beta, one value per observation.
  Eigen::VectorXd fitted(const Eigen::VectorXd& beta) const;
  /// X' diag(w) X.
  Eigen::MatrixXd weighted_gram(std::span<const double> weights) const;
  /// X' v.
  Eigen::VectorXd transpose_times(std::span<const double> v) const;

 private:
  Eigen::MatrixXd rows_;
  std::vector<std::size_t> group_of_;
};

/// Check loss rho_tau(u) = u (tau - 1{u < 0}).
double check_loss(double u, double tau);

struct SolverOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-10;
  /// Smoothing levels, relative to the response scale, annealed in order.
  std::vector<double> smoothing_schedule{1e-2, 1e-4, 1e-6, 1e-8};
  /// Ridge (relative to the mean diagonal of the normal matrix) pinning
  /// directions left free by both design and penalty.
  double null_ridge = 1e-10;
};

/// Penalized quantile regression solution for one tau.
struct QuantileFit {
  double tau = 0.5;
  double lambda = 0.0;
  Eigen::VectorXd coefficients;
  /// sum rho_tau(y - X beta) + (lambda / 2) beta' P beta at `coefficients`.
  double objective = 0.0;
  double check_loss = 0.0;
  double penalty = 0.0;
  /// tr(H), H = X (X'WX + lambda P)^{-1} X'W at the final weights.
  double effective_df = 0.0;
  int iterations = 0;
  /// True when the final point passed the subgradient optimality check.
  bool certified = false;
  std::size_t observations = 0;
};

double penalized_objective(const Design& design, std::span<const double> response, double tau, double lambda,
                           const Eigen::MatrixXd& penalty, const Eigen::VectorXd& beta);

/// argmin_beta sum rho_tau(y_i - x_i' beta) + (lambda / 2) beta' P beta.
///
/// Majorize-minimize on a smoothed check loss (iteratively reweighted
/// penalized least squares) with the smoothing annealed toward zero, followed
/// by an exact solve on the active set of interpolated observations. The
/// returned objective is the exact (unsmoothed) value at the returned point.
QuantileFit fit_pqr(const Design& design, std::span<const double> response, double tau, double lambda,
                    const Eigen::MatrixXd& penalty, const SolverOptions& options = {});

QuantileFit fit_pqr(const Design& design, std::span<const double> response, double tau, double lambda,
                    const DifferenceMatrix& difference, const SolverOptions& options = {});

struct GacvPoint {
  double lambda = 0.0;
  double criterion = 0.0;  // summed over the tau set; NaN when skipped
  bool skipped = false;
};

struct GacvResult {
  double lambda = 0.0;
  double criterion = 0.0;
  std::vector<GacvPoint> grid;
  std::vector<double> skipped_lambdas;
};

/// sum_i rho_tau(r_i) / (n - tr H) for one fit.
double gacv_criterion(const QuantileFit& fit);

/// Grid search for lambda minimizing the GACV criterion summed over the tau
/// set. Grid points with n - tr(H) <= 0 are skipped and listed; ties go to the
/// larger lambda.
GacvResult gacv_select(const Design& design, std::span<const double> response, std::span<const double> taus,
                       const Eigen::MatrixXd& penalty, std::span<const double> lambda_grid,
                       const SolverOptions& options = {}, std::size_t workers = 1);

/// n points log-spaced on [lo, hi].
std::vector<double> log_spaced(double lo, double hi, std::size_t n);
std::vector<double> default_lambda_grid();

double predict_quantile(const QuantileFit& fit, const Eigen::VectorXd& design_row);
double predict_quantile(const QuantileFit& fit, std::span<const BSplineBasis> bases,
                        std::span<const double> covariates, bool clamp = false);

}  // namespace sqr
