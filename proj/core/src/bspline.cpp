#include "sqr/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sqr/error.hpp"

namespace sqr {

double sample_quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("sample_quantile_sorted: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("sample_quantile_sorted: p outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> make_knots(std::span<const double> observed, int interior_count, Interval support,
                               KnotPlacement placement, int degree) {
  if (interior_count < 1) throw InvalidArgument("make_knots: K_n must be >= 1");
  if (degree < 0) throw InvalidArgument("make_knots: degree must be >= 0");
  if (!(support.lower < support.upper)) throw InvalidArgument("make_knots: empty support");
  if (placement == KnotPlacement::quantile && observed.empty())
    throw InvalidArgument("make_knots: no observed values for quantile placement");
  for (double v : observed) {
    if (!std::isfinite(v) || !support.contains(v)) {
      std::ostringstream msg;
      msg << "make_knots: observed value " << v << " outside support [" << support.lower << ", "
          << support.upper << "]";
      throw InvalidArgument(msg.str());
    }
  }

  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(interior_count + 2 * degree + 1));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), support.lower);

  if (placement == KnotPlacement::quantile) {
    std::vector<double> sorted(observed.begin(), observed.end());
    std::sort(sorted.begin(), sorted.end());
    for (int k = 1; k < interior_count; ++k)
      knots.push_back(sample_quantile_sorted(sorted, static_cast<double>(k) / interior_count));
  } else {
    for (int k = 1; k < interior_count; ++k)
      knots.push_back(support.lower + support.width() * static_cast<double>(k) / interior_count);
  }

  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), support.upper);
  return knots;
}

BSplineBasis::BSplineBasis(int degree, std::vector<double> knots) : degree_(degree), knots_(std::move(knots)) {
  if (degree_ < 0) throw InvalidArgument("BSplineBasis: degree must be >= 0");
  const auto n = static_cast<int>(knots_.size());
  interior_count_ = n - 2 * degree_ - 1;
  if (interior_count_ < 1) throw InvalidArgument("BSplineBasis: knot vector too short for degree");
  if (!std::is_sorted(knots_.begin(), knots_.end()))
    throw InvalidArgument("BSplineBasis: knots must be non-decreasing");
  support_ = {knots_[static_cast<std::size_t>(degree_)], knots_[static_cast<std::size_t>(n - degree_ - 1)]};
  for (int k = 0; k <= degree_; ++k) {
    if (knots_[static_cast<std::size_t>(k)] != support_.lower ||
        knots_[static_cast<std::size_t>(n - 1 - k)] != support_.upper)
      throw InvalidArgument("BSplineBasis: boundary knots must be replicated");
  }
  if (!(support_.lower < support_.upper)) throw InvalidArgument("BSplineBasis: empty support");
}

BSplineBasis BSplineBasis::from_data(std::span<const double> observed, int degree, int interior_count,
                                     Interval support, KnotPlacement placement) {
  return BSplineBasis(degree, make_knots(observed, interior_count, support, placement, degree));
}

BSplineBasis BSplineBasis::equally_spaced(int degree, int interior_count, Interval support) {
  return BSplineBasis(degree, make_knots({}, interior_count, support, KnotPlacement::equally_spaced, degree));
}

double BSplineBasis::checked(double x, bool clamp) const {
  if (!std::isfinite(x)) throw InvalidArgument("BSplineBasis: non-finite argument");
  if (support_.contains(x)) return x;
  if (clamp) return support_.clamp(x);
  std::ostringstream msg;
  msg << "BSplineBasis: x = " << x << " outside support [" << support_.lower << ", " << support_.upper << "]";
  throw InvalidArgument(msg.str());
}

// Index i (into knots_) with knots_[i] <= x < knots_[i+1] and a nonempty span;
// x == upper bound maps to the last nonempty span.
std::size_t BSplineBasis::find_span(double x) const {
  const auto first = static_cast<std::size_t>(degree_);
  const std::size_t last = knots_.size() - static_cast<std::size_t>(degree_) - 2;
  if (x >= support_.upper) {
    std::size_t i = last;
    while (i > first && knots_[i] == knots_[i + 1]) --i;
    return i;
  }
  const auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(first),
                                   knots_.begin() + static_cast<std::ptrdiff_t>(last + 1), x);
  return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

// Triangular Cox-de Boor scheme; denominators of tied knots contribute zero.
void BSplineBasis::nonzero_values(double x, std::size_t span, int degree, double* nonzero) const {
  double left[32];
  double right[32];
  nonzero[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots_[span + 1 - static_cast<std::size_t>(j)];
    right[j] = knots_[span + static_cast<std::size_t>(j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom == 0.0 ? 0.0 : nonzero[r] / denom;
      nonzero[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    nonzero[j] = saved;
  }
}

void BSplineBasis::evaluate_into(double x, std::span<double> out, bool clamp) const {
  if (out.size() != size()) throw InvalidArgument("BSplineBasis::evaluate_into: output size mismatch");
  if (degree_ > 30) throw InvalidArgument("BSplineBasis: degree above 30 not supported");
  x = checked(x, clamp);
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t span = find_span(x);
  double nonzero[32];
  nonzero_values(x, span, degree_, nonzero);
  // Basis function j (0-based) is supported on knots_[j .. j + r + 1].
  const std::size_t offset = span - static_cast<std::size_t>(degree_);
  for (int j = 0; j <= degree_; ++j) out[offset + static_cast<std::size_t>(j)] = nonzero[j];
}

Eigen::VectorXd BSplineBasis::evaluate(double x, bool clamp) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  evaluate_into(x, std::span<double>(out.data(), size()), clamp);
  return out;
}

Eigen::VectorXd BSplineBasis::derivative(double x, bool clamp) const {
  x = checked(x, clamp);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
  if (degree_ == 0) return out;
  const std::size_t span = find_span(x);
  double lower[32];
  nonzero_values(x, span, degree_ - 1, lower);
  // d/dx B_{j,r} = r (B_{j,r-1} / (t_{j+r} - t_j) - B_{j+1,r-1} / (t_{j+r+1} - t_{j+1}))
  const std::size_t offset = span - static_cast<std::size_t>(degree_ - 1);  // first nonzero (r-1) function
  const auto r = static_cast<double>(degree_);
  for (int k = 0; k < degree_; ++k) {
    const std::size_t j = offset + static_cast<std::size_t>(k);  // index of lower-degree function
    const double value = lower[k];
    // contributes +value / (t_{j+r} - t_j) to basis j and -value / (t_{j+r} - t_j) to basis j - 1
    const double denom = knots_[j + static_cast<std::size_t>(degree_)] - knots_[j];
    if (denom == 0.0) continue;
    const double term = r * value / denom;
    if (j < size()) out[static_cast<Eigen::Index>(j)] += term;
    if (j >= 1) out[static_cast<Eigen::Index>(j - 1)] -= term;
  }
  return out;
}

DifferenceMatrix difference_matrix(int order, int coefficient_count) {
  if (order < 1) throw InvalidArgument("difference_matrix: order must be >= 1");
  if (coefficient_count <= order) throw InvalidArgument("difference_matrix: need p > m");
  std::vector<double> stencil(static_cast<std::size_t>(order + 1));
  double binom = 1.0;
  for (int j = 0; j <= order; ++j) {
    stencil[static_cast<std::size_t>(j)] = ((order - j) % 2 == 0 ? 1.0 : -1.0) * binom;
    binom = binom * (order - j) / (j + 1);
  }
  DifferenceMatrix d{order, coefficient_count,
                     Eigen::MatrixXd::Zero(coefficient_count - order, coefficient_count)};
  for (int k = 0; k < coefficient_count - order; ++k)
    for (int j = 0; j <= order; ++j) d.entries(k, k + j) = stencil[static_cast<std::size_t>(j)];
  return d;
}

std::size_t design_width(std::span<const BSplineBasis> bases) noexcept {
  std::size_t width = 0;
  for (const auto& b : bases) width += b.size();
  return width;
}

Eigen::MatrixXd block_penalty(std::span<const BSplineBasis> bases, int order) {
  const auto width = static_cast<Eigen::Index>(design_width(bases));
  Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(width, width);
  Eigen::Index offset = 0;
  for (const auto& b : bases) {
    const auto p = static_cast<Eigen::Index>(b.size());
    if (p > order) penalty.block(offset, offset, p, p) = difference_matrix(order, static_cast<int>(p)).gram();
    offset += p;
  }
  return penalty;
}

Eigen::VectorXd build_design(std::span<const BSplineBasis> bases, std::span<const double> covariates, bool clamp) {
  if (bases.size() != covariates.size())
    throw InvalidArgument("build_design: one covariate per basis required");
  Eigen::VectorXd row(static_cast<Eigen::Index>(design_width(bases)));
  std::size_t offset = 0;
  for (std::size_t l = 0; l < bases.size(); ++l) {
    bases[l].evaluate_into(covariates[l], std::span<double>(row.data() + offset, bases[l].size()), clamp);
    offset += bases[l].size();
  }
  return row;
}

}  // namespace sqr
