#pragma once

#include "sqr/random.hpp"

namespace sqr {

/// Skew-normal with shape alpha, shifted and scaled to zero mean and unit
/// variance: eps = location + scale * Z, Z ~ SN(0, 1, alpha).
struct StandardizedSkewNormal {
  double alpha = 0.0;
  double delta = 0.0;     // alpha / sqrt(1 + alpha^2)
  double location = 0.0;  // -delta sqrt(2 / pi) / sqrt(1 - 2 delta^2 / pi)
  double scale = 1.0;     // 1 / sqrt(1 - 2 delta^2 / pi)

  explicit StandardizedSkewNormal(double alpha);

  /// Z = delta |U0| + sqrt(1 - delta^2) U1, then standardized.
  double draw(RandomStream& rng) const;
  double pdf(double x) const;
  /// Phi(z) - 2 T(z, alpha) via Owen's T.
  double cdf(double x) const;
  /// Bisection on the CDF to 1e-10.
  double quantile(double p) const;
};

}  // namespace sqr
