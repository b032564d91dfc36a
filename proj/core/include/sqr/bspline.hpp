#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sqr {

/// Closed interval [lower, upper].
struct Interval {
  double lower = 0.0;
  double upper = 1.0;

  bool contains(double x) const noexcept { return x >= lower && x <= upper; }
  double width() const noexcept { return upper - lower; }
  double clamp(double x) const noexcept { return x < lower ? lower : (x > upper ? upper : x); }
};

enum class KnotPlacement { quantile, equally_spaced };

/// Sample quantile with linear interpolation between order statistics
/// (h = (n - 1) p, the "type 7" convention). `sorted` must be ascending.
double sample_quantile_sorted(std::span<const double> sorted, double p);

/// Knot vector kappa_{-r}, ..., kappa_{K_n + r}: r + 1 copies of each support
/// bound and K_n - 1 interior knots. Interior knots are the k/K_n sample
/// quantiles of `observed` (quantile placement) or equally spaced on the
/// support.
std::vector<double> make_knots(std::span<const double> observed, int interior_count,
                               Interval support, KnotPlacement placement, int degree = 3);

/// B-spline basis of degree r on a clamped knot vector with K_n intervals.
///
/// Evaluation uses half-open spans [kappa_{k-1}, kappa_k); the upper support
/// bound belongs to the last nonempty span so the basis is defined on the
/// closed support. Zero-width spans from tied knots follow the 0/0 -> 0 rule.
/// Instances are immutable and safe to share between threads.
class BSplineBasis {
 public:
  /// Constant basis on [0, 1].
  BSplineBasis() : BSplineBasis(0, {0.0, 1.0}) {}
  BSplineBasis(int degree, std::vector<double> knots);

  static BSplineBasis from_data(std::span<const double> observed, int degree, int interior_count,
                                Interval support, KnotPlacement placement);
  static BSplineBasis equally_spaced(int degree, int interior_count, Interval support);

  int degree() const noexcept { return degree_; }
  int interior_count() const noexcept { return interior_count_; }
  /// Output dimension r + K_n.
  std::size_t size() const noexcept { return static_cast<std::size_t>(degree_ + interior_count_); }
  const std::vector<double>& knots() const noexcept { return knots_; }
  Interval support() const noexcept { return support_; }

  /// Values of all r + K_n basis functions at x. Throws InvalidArgument when x
  /// lies outside the support unless `clamp` is set.
  Eigen::VectorXd evaluate(double x, bool clamp = false) const;
  void evaluate_into(double x, std::span<double> out, bool clamp = false) const;

  /// First derivative of every basis function at x (x inside the support).
  Eigen::VectorXd derivative(double x, bool clamp = false) const;

 private:
  std::size_t find_span(double x) const;
  double checked(double x, bool clamp) const;
  // Nonzero values B_{span-r..span}(x) written to `nonzero` (length r + 1).
  void nonzero_values(double x, std::size_t span, int degree, double* nonzero) const;

  int degree_;
  int interior_count_;
  std::vector<double> knots_;
  Interval support_;
};

/// m-th order difference matrix: (p - m) x p, row k holds the signed binomial
/// stencil (-1)^{m-j} C(m, j) at column k + j.
struct DifferenceMatrix {
  int order = 0;
  int coefficient_count = 0;
  Eigen::MatrixXd entries;

  /// D'D.
  Eigen::MatrixXd gram() const { return entries.transpose() * entries; }
};

DifferenceMatrix difference_matrix(int order, int coefficient_count);

/// Block-diagonal penalty with one D_m'D_m block per basis, matching the
/// additive concatenation used by build_design.
Eigen::MatrixXd block_penalty(std::span<const BSplineBasis> bases, int order = 2);

/// Concatenated (additive) design row {B_1(x_1)', ..., B_d(x_d)'}'.
Eigen::VectorXd build_design(std::span<const BSplineBasis> bases, std::span<const double> covariates,
                             bool clamp = false);

std::size_t design_width(std::span<const BSplineBasis> bases) noexcept;

}  // namespace sqr
