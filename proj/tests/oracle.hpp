#pragma once

// Extended-precision reference evaluations, written directly from the bound
// formulas without the rationalized forms used by the library.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

inline Real expected_upper(Real x, Real b) { return x + b + sqrt(2 * b * x + b * b); }
inline Real expected_lower(Real x, Real b) {
  return std::max(Real(0), Real(x - b / 2 - sqrt(2 * b * x + b * b / 4)));
}
inline Real observed_upper(Real x, Real b) { return x + b / 2 + sqrt(2 * b * x + b * b / 4); }
inline Real observed_lower(Real x, Real b) { return std::max(Real(0), Real(x - sqrt(2 * b * x))); }

inline Real gamma_u(Real n, Real k, Real lambda, Real eps) {
  const Real pi = boost::math::constants::pi<Real>();
  const Real a = std::max(n, k);
  const Real g = (n + k) / (n * k) * log((n + k) / (2 * pi * n * k * lambda * (1 - lambda) * eps * eps));
  const Real s = n + k;
  return ((1 - 2 * lambda) * a * g / s + sqrt(a * a * g * g / (s * s) + 4 * lambda * (1 - lambda) * g)) /
         (2 + 2 * a * a * g / (s * s));
}

inline double rel_error(double got, Real want) {
  if (want == 0) return got == 0.0 ? 0.0 : 1.0;
  return static_cast<double>(abs((Real(got) - want) / want));
}

}  // namespace oracle
