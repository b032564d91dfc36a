#include "sqr/skew_normal.hpp"

#include <cmath>

#include <boost/math/special_functions/owens_t.hpp>

#include "sqr/error.hpp"

namespace sqr {

namespace {
constexpr double kPi = 3.14159265358979323846;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
}  // namespace

StandardizedSkewNormal::StandardizedSkewNormal(double a) : alpha(a) {
  if (!std::isfinite(a)) throw InvalidArgument("StandardizedSkewNormal: alpha must be finite");
  delta = a / std::sqrt(1.0 + a * a);
  const double v = 1.0 - 2.0 * delta * delta / kPi;
  scale = 1.0 / std::sqrt(v);
  location = -scale * delta * std::sqrt(2.0 / kPi);
}

double StandardizedSkewNormal::draw(RandomStream& rng) const {
  const double u0 = rng.normal();
  const double u1 = rng.normal();
  const double z = delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
  return location + scale * z;
}

double StandardizedSkewNormal::pdf(double x) const {
  const double z = (x - location) / scale;
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
  return 2.0 * phi * normal_cdf(alpha * z) / scale;
}

double StandardizedSkewNormal::cdf(double x) const {
  const double z = (x - location) / scale;
  const double f = normal_cdf(z) - 2.0 * boost::math::owens_t(z, alpha);
  return f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f);
}

double StandardizedSkewNormal::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("StandardizedSkewNormal::quantile: p must lie in (0, 1)");
  double lo = -1.0, hi = 1.0;
  while (cdf(lo) > p) lo *= 2.0;
  while (cdf(hi) < p) hi *= 2.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace sqr
