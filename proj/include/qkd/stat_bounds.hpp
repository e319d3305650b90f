#pragma once

// Concentration bounds used by finite-key parameter estimation.
//
// Two conversions are provided. The "expected" pair turns an observed count
// into a confidence interval on its expectation (a Chernoff variant valid for
// sums of dependent Bernoulli trials); the "observed" pair maps an expected
// value back to an interval on the count that would be observed. gamma_u is
// the tail correction for sampling without replacement.

#include <stdexcept>

namespace qkd {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Log-inverse failure weight shared by every bound invocation.
class FailureBudget {
 public:
  explicit FailureBudget(double beta);

  /// beta = ln(22 / eps_sec).
  static FailureBudget from_eps_sec(double eps_sec);

  double beta() const noexcept { return beta_; }

 private:
  double beta_;
};

inline constexpr double kErrorTermCount = 22.0;

double expected_upper(double x, FailureBudget budget);
double expected_lower(double x, FailureBudget budget);
double observed_upper(double x_star, FailureBudget budget);
double observed_lower(double x_star, FailureBudget budget);

/// Random-sampling-without-replacement correction. lambda must lie strictly
/// inside (0, 1); callers clamp it first.
double gamma_u(double n, double k, double lambda, double epsilon);

}  // namespace qkd
