#include "qkd/stat_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qkd {
namespace {

void require_count(double x, const char* who) {
  if (!std::isfinite(x) || x < 0.0) {
    throw InvalidArgument(std::string(who) + ": argument must be a finite nonnegative count");
  }
}

}  // namespace

FailureBudget::FailureBudget(double beta) : beta_(beta) {
  if (!std::isfinite(beta) || beta <= 0.0) {
    throw InvalidArgument("FailureBudget: beta must be finite and positive");
  }
}

FailureBudget FailureBudget::from_eps_sec(double eps_sec) {
  if (!(eps_sec > 0.0 && eps_sec < 1.0)) {
    throw InvalidArgument("FailureBudget: eps_sec must lie in (0, 1)");
  }
  return FailureBudget(std::log(kErrorTermCount / eps_sec));
}

double expected_upper(double x, FailureBudget budget) {
  require_count(x, "expected_upper");
  const double b = budget.beta();
  return x + b + std::sqrt(2.0 * b * x + b * b);
}

// x - b/2 - sqrt(2bx + b^2/4) has its root at x = 3b. The rationalized form
// x(x - 3b) / (x - b/2 + sqrt(...)) avoids cancellation near that root; fma
// keeps x - 3b correctly rounded.
double expected_lower(double x, FailureBudget budget) {
  require_count(x, "expected_lower");
  const double b = budget.beta();
  if (x <= 3.0 * b) return 0.0;
  const double root = std::sqrt(2.0 * b * x + 0.25 * b * b);
  return x * std::fma(-3.0, b, x) / (x - 0.5 * b + root);
}

double observed_upper(double x_star, FailureBudget budget) {
  require_count(x_star, "observed_upper");
  const double b = budget.beta();
  return x_star + 0.5 * b + std::sqrt(2.0 * b * x_star + 0.25 * b * b);
}

// Root at x* = 2b; same rationalization as expected_lower.
double observed_lower(double x_star, FailureBudget budget) {
  require_count(x_star, "observed_lower");
  const double b = budget.beta();
  if (x_star <= 2.0 * b) return 0.0;
  return x_star * (x_star - 2.0 * b) / (x_star + std::sqrt(2.0 * b * x_star));
}

double gamma_u(double n, double k, double lambda, double epsilon) {
  if (!std::isfinite(n) || !std::isfinite(k) || n <= 0.0 || k <= 0.0) {
    throw InvalidArgument("gamma_u: sample sizes must be positive");
  }
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw InvalidArgument("gamma_u: lambda must lie strictly inside (0, 1)");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("gamma_u: epsilon must lie in (0, 1)");
  }
  const double total = n + k;
  const double a = std::max(n, k);
  const double var = lambda * (1.0 - lambda);
  const double product = n * k;  // grouped so swapping n and k is bit-exact
  const double g =
      total / product * std::log(total / (2.0 * std::numbers::pi * product * var * epsilon * epsilon));
  // Log argument <= 1 gives G <= 0; no correction applies.
  if (!(g > 0.0)) return 0.0;
  const double ag = a * g / total;
  const double numer = (1.0 - 2.0 * lambda) * ag + std::sqrt(ag * ag + 4.0 * var * g);
  const double denom = 2.0 + 2.0 * a * ag / total;
  return numer / denom;
}

}  // namespace qkd
