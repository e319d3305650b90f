#include "qkd/finite_key.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qkd {
namespace {

constexpr double kProbabilityTolerance = 1e-9;

bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }

// Bound wrappers that feed the per-evaluation audit.
class Bounds {
 public:
  Bounds(const SecuritySettings& settings, BoundAudit* audit)
      : budget_(settings.budget()), audit_(audit) {}

  double expected_lower(double x) const {
    note(&BoundAudit::expected_calls);
    return qkd::expected_lower(x, budget_);
  }
  double expected_upper(double x) const {
    note(&BoundAudit::expected_calls);
    return qkd::expected_upper(x, budget_);
  }
  double observed_lower(double x) const {
    note(&BoundAudit::observed_calls);
    return qkd::observed_lower(x, budget_);
  }

 private:
  void note(int BoundAudit::*field) const {
    if (audit_ != nullptr) ++(audit_->*field);
  }

  FailureBudget budget_;
  BoundAudit* audit_;
};

double as_real(std::uint64_t count) { return static_cast<double>(count); }

void require_decoy_order(const ProtocolParams& params, const char* who) {
  if (!(params.mu > params.nu && params.nu > 0.0)) {
    throw InvalidArgument(std::string(who) + ": requires mu > nu > 0 (mu*nu - nu^2 must be positive)");
  }
}

// Shared bracket of the two-decoy single-photon bound for one measurement basis.
SinglePhotonEstimate single_photon_bracket(const ObservedTallies& tallies,
                                           const ProtocolParams& params, Basis basis,
                                           double prefactor, const Bounds& bounds) {
  const double mu = params.mu;
  const double nu = params.nu;
  SinglePhotonEstimate est;
  est.n_nu_lower_star = bounds.expected_lower(as_real(tallies.count(Intensity::nu, basis)));
  est.n_mu_upper_star = bounds.expected_upper(as_real(tallies.count(Intensity::mu, basis)));
  est.n_0_upper_star = bounds.expected_upper(as_real(tallies.count(Intensity::vacuum, basis)));

  const double bracket = std::exp(nu) * est.n_nu_lower_star / params.p_nu -
                         (nu * nu) / (mu * mu) * std::exp(mu) * est.n_mu_upper_star / params.p_mu -
                         (mu * mu - nu * nu) / (mu * mu) * est.n_0_upper_star / params.p_0;
  est.value = std::max(0.0, prefactor / (mu * nu - nu * nu) * bracket);
  return est;
}

}  // namespace

std::string_view name(Intensity k) {
  switch (k) {
    case Intensity::mu: return "mu";
    case Intensity::nu: return "nu";
    case Intensity::omega: return "omega";
    case Intensity::vacuum: return "0";
  }
  return "?";
}

std::string_view name(Basis b) { return b == Basis::Z ? "z" : "x"; }

double ProtocolParams::intensity(Intensity k) const noexcept {
  switch (k) {
    case Intensity::mu: return mu;
    case Intensity::nu: return nu;
    case Intensity::omega: return omega;
    case Intensity::vacuum: return 0.0;
  }
  return 0.0;
}

double ProtocolParams::probability(Intensity k) const noexcept {
  switch (k) {
    case Intensity::mu: return p_mu;
    case Intensity::nu: return p_nu;
    case Intensity::omega: return p_omega;
    case Intensity::vacuum: return p_0;
  }
  return 0.0;
}

void ProtocolParams::validate() const {
  if (!(std::isfinite(mu) && std::isfinite(nu) && std::isfinite(omega))) {
    throw InvalidArgument("protocol: intensities must be finite");
  }
  if (!(nu > 0.0)) throw InvalidArgument("protocol.nu: must be positive (mu > nu > 0)");
  if (!(mu > nu)) throw InvalidArgument("protocol.mu: must exceed nu (mu > nu > 0)");
  if (!(omega > 0.0)) throw InvalidArgument("protocol.omega: must be positive");
  for (Intensity k : kIntensities) {
    if (!(probability(k) > 0.0)) {
      throw InvalidArgument("protocol.p_" + std::string(name(k)) + ": must be strictly positive");
    }
  }
  if (std::abs(p_mu + p_nu + p_omega + p_0 - 1.0) > kProbabilityTolerance) {
    throw InvalidArgument("protocol: p_mu + p_nu + p_omega + p_0 must equal 1");
  }
  if (!in_open_unit(q_z)) throw InvalidArgument("protocol.q_z: must lie in (0, 1)");
}

void SecuritySettings::validate() const {
  if (!in_open_unit(eps_sec)) throw InvalidArgument("security.eps_sec: must lie in (0, 1)");
  if (!in_open_unit(eps_cor)) throw InvalidArgument("security.eps_cor: must lie in (0, 1)");
  if (!(phi_tol > 0.0 && phi_tol <= 0.5)) {
    throw InvalidArgument("security.phi_tol: must lie in (0, 0.5]");
  }
}

void ObservedTallies::validate() const {
  if (m_omega_x > count(Intensity::omega, Basis::X)) {
    throw InvalidArgument("tallies.m_omega_x: must not exceed n_omega_x");
  }
  if (!(std::isfinite(lambda_ec) && lambda_ec >= 0.0)) {
    throw InvalidArgument("tallies.lambda_ec: must be finite and nonnegative");
  }
}

std::string_view describe(AbortReason reason) {
  switch (reason) {
    case AbortReason::none: return "none";
    case AbortReason::insufficient_statistics: return "insufficient statistics";
    case AbortReason::phase_error_above_tolerance: return "phase error rate above tolerance";
    case AbortReason::nonpositive_key_length: return "nonpositive key length";
  }
  return "unknown";
}

double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("binary_entropy: argument must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

VacuumEstimate estimate_vacuum_z(const ObservedTallies& tallies, const ProtocolParams& params,
                                 const SecuritySettings& settings, BoundAudit* audit) {
  params.validate();
  const Bounds bounds(settings, audit);
  VacuumEstimate est;
  est.n0_lower_star = bounds.expected_lower(as_real(tallies.count(Intensity::vacuum, Basis::Z)));
  const double weight =
      std::exp(-params.mu) * params.p_mu + std::exp(-params.nu) * params.p_nu;
  est.value = weight * est.n0_lower_star / params.p_0;
  return est;
}

SinglePhotonEstimate estimate_single_z(const ObservedTallies& tallies,
                                       const ProtocolParams& params,
                                       const SecuritySettings& settings, BoundAudit* audit) {
  require_decoy_order(params, "estimate_single_z");
  params.validate();
  const double mu = params.mu;
  const double nu = params.nu;
  const double prefactor =
      mu * mu * std::exp(-mu) * params.p_mu + mu * nu * std::exp(-nu) * params.p_nu;
  return single_photon_bracket(tallies, params, Basis::Z, prefactor, Bounds(settings, audit));
}

SinglePhotonEstimate estimate_single_x(const ObservedTallies& tallies,
                                       const ProtocolParams& params,
                                       const SecuritySettings& settings, BoundAudit* audit) {
  require_decoy_order(params, "estimate_single_x");
  params.validate();
  const double prefactor = params.mu * params.omega * std::exp(-params.omega) * params.p_omega;
  return single_photon_bracket(tallies, params, Basis::X, prefactor, Bounds(settings, audit));
}

ErrorEstimate estimate_errors_x(const ObservedTallies& tallies, const ProtocolParams& params,
                                const SecuritySettings& settings, BoundAudit* audit) {
  params.validate();
  tallies.validate();
  const Bounds bounds(settings, audit);
  ErrorEstimate est;
  est.n0_lower_star = bounds.expected_lower(as_real(tallies.count(Intensity::vacuum, Basis::X)));
  est.t0_lower_star =
      std::exp(-params.omega) * params.p_omega / (2.0 * params.p_0) * est.n0_lower_star;
  est.t0_lower = bounds.observed_lower(est.t0_lower_star);
  est.t1_upper = std::max(0.0, as_real(tallies.m_omega_x) - est.t0_lower);
  return est;
}

PhaseErrorBound phase_error_rate(const EstimationBreakdown& breakdown,
                                 const SecuritySettings& settings, BoundAudit* audit) {
  settings.validate();
  const double s1z = breakdown.s1_zz_lower;
  const double s1x = breakdown.s1_xx_lower;
  if (!(s1x >= 1.0)) throw InsufficientStatistics("phase_error_rate: insufficient X-basis statistics");
  if (!(s1z >= 1.0)) throw InsufficientStatistics("phase_error_rate: insufficient Z-basis statistics");

  PhaseErrorBound out;
  out.bit_error_ratio = breakdown.t1_xx_upper / s1x;
  const double floor = 1.0 / (s1z + s1x);
  out.sample_rate = std::clamp(out.bit_error_ratio, floor, 1.0 - floor);
  if (audit != nullptr) ++audit->gamma_calls;
  out.gamma = gamma_u(s1z, s1x, out.sample_rate, settings.eps_sec / kErrorTermCount);
  out.phi_upper = std::min(1.0, out.sample_rate + out.gamma);
  return out;
}

double composable_penalty(const SecuritySettings& settings) {
  return std::log2(2.0 / settings.eps_cor) + 6.0 * std::log2(kErrorTermCount / settings.eps_sec);
}

KeyRateReport key_length(const ObservedTallies& tallies, const ProtocolParams& params,
                         const SecuritySettings& settings, double total_pulses, double clock_hz,
                         BoundAudit* audit) {
  auto staged = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string("key_length/") + stage + ": " + e.what());
    }
  };

  staged("validate", [&] {
    params.validate();
    settings.validate();
    tallies.validate();
    if (!(total_pulses >= 1.0)) throw InvalidArgument("total_pulses must be at least 1");
    if (!(clock_hz > 0.0)) throw InvalidArgument("clock_hz must be positive");
    return 0;
  });

  const Bounds bounds(settings, audit);
  KeyRateReport report;
  EstimationBreakdown& bd = report.breakdown;

  const auto vac = staged("estimate_vacuum_z",
                          [&] { return estimate_vacuum_z(tallies, params, settings, audit); });
  const auto single_z = staged("estimate_single_z",
                               [&] { return estimate_single_z(tallies, params, settings, audit); });
  const auto single_x = staged("estimate_single_x",
                               [&] { return estimate_single_x(tallies, params, settings, audit); });
  const auto errors = staged("estimate_errors_x",
                             [&] { return estimate_errors_x(tallies, params, settings, audit); });

  bd.n0z_lower_star = vac.n0_lower_star;
  bd.n_nu_z_lower_star = single_z.n_nu_lower_star;
  bd.n_mu_z_upper_star = single_z.n_mu_upper_star;
  bd.n0z_upper_star = single_z.n_0_upper_star;
  bd.n_nu_x_lower_star = single_x.n_nu_lower_star;
  bd.n_mu_x_upper_star = single_x.n_mu_upper_star;
  bd.n0x_upper_star = single_x.n_0_upper_star;
  bd.n0x_lower_star = errors.n0_lower_star;

  bd.s0_zz_lower_star = vac.value;
  bd.s1_zz_lower_star = single_z.value;
  bd.s1_xx_lower_star = single_x.value;
  bd.t0_xx_lower_star = errors.t0_lower_star;

  bd.s0_zz_lower = bounds.observed_lower(vac.value);
  bd.s1_zz_lower = bounds.observed_lower(single_z.value);
  bd.s1_xx_lower = bounds.observed_lower(single_x.value);
  bd.t0_xx_lower = errors.t0_lower;
  bd.t1_xx_upper = errors.t1_upper;

  auto abort_with = [&](AbortReason reason) {
    report.aborted = true;
    report.reason = reason;
    report.ell = 0;
    return report;
  };

  PhaseErrorBound phase;
  try {
    phase = staged("phase_error_rate", [&] { return phase_error_rate(bd, settings, audit); });
  } catch (const InsufficientStatistics&) {
    return abort_with(AbortReason::insufficient_statistics);
  }
  bd.bit_error_ratio = phase.bit_error_ratio;
  bd.gamma = phase.gamma;
  bd.phi1_zz_upper = phase.phi_upper;

  if (phase.phi_upper > settings.phi_tol || phase.phi_upper >= 0.5) {
    return abort_with(AbortReason::phase_error_above_tolerance);
  }

  report.raw_length = bd.s0_zz_lower + bd.s1_zz_lower * (1.0 - binary_entropy(phase.phi_upper)) -
                      tallies.lambda_ec - composable_penalty(settings);
  if (report.raw_length < 0.0) return abort_with(AbortReason::nonpositive_key_length);

  report.ell = static_cast<std::uint64_t>(std::floor(report.raw_length));
  report.rate_per_pulse = static_cast<double>(report.ell) / total_pulses;
  report.rate_per_second = report.rate_per_pulse * clock_hz;
  return report;
}

}  // namespace qkd
