#pragma once

// Finite-key parameter estimation and secret key length for four-intensity
// decoy-state BB84 (Z-basis intensities mu, nu; X-basis intensity omega;
// vacuum without basis information).

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string_view>

#include "qkd/stat_bounds.hpp"

namespace qkd {

enum class Intensity : std::size_t { mu = 0, nu = 1, omega = 2, vacuum = 3 };
enum class Basis : std::size_t { Z = 0, X = 1 };

inline constexpr std::array<Intensity, 4> kIntensities{Intensity::mu, Intensity::nu,
                                                      Intensity::omega, Intensity::vacuum};
inline constexpr std::array<Basis, 2> kBases{Basis::Z, Basis::X};

std::string_view name(Intensity k);
std::string_view name(Basis b);

struct ProtocolParams {
  double mu = 0.35;
  double nu = 0.15;
  double omega = 0.3;
  double p_mu = 0.78;
  double p_nu = 0.10;
  double p_omega = 0.08;
  double p_0 = 0.04;
  double q_z = 0.7;

  double q_x() const noexcept { return 1.0 - q_z; }
  double intensity(Intensity k) const noexcept;
  double probability(Intensity k) const noexcept;
  double basis_probability(Basis b) const noexcept { return b == Basis::Z ? q_z : q_x(); }

  /// Throws InvalidArgument naming the violated invariant.
  void validate() const;

  bool operator==(const ProtocolParams&) const = default;
};

struct SecuritySettings {
  double eps_sec = 1e-10;
  double eps_cor = 1e-15;
  double phi_tol = 0.08;

  double beta() const { return budget().beta(); }
  FailureBudget budget() const { return FailureBudget::from_eps_sec(eps_sec); }
  void validate() const;

  bool operator==(const SecuritySettings&) const = default;
};

struct ObservedTallies {
  std::array<std::array<std::uint64_t, 2>, 4> n{};
  std::uint64_t m_omega_x = 0;
  double lambda_ec = 0.0;

  std::uint64_t count(Intensity k, Basis b) const noexcept {
    return n[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
  }
  std::uint64_t& count(Intensity k, Basis b) noexcept {
    return n[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)];
  }
  void validate() const;

  bool operator==(const ObservedTallies&) const = default;
};

/// Counts bound invocations during one evaluation.
struct BoundAudit {
  int expected_calls = 0;
  int observed_calls = 0;
  int gamma_calls = 0;
};

struct VacuumEstimate {
  double n0_lower_star = 0.0;
  double value = 0.0;  // expected lower bound on vacuum events in Z_A
};

struct SinglePhotonEstimate {
  double n_nu_lower_star = 0.0;
  double n_mu_upper_star = 0.0;
  double n_0_upper_star = 0.0;
  double value = 0.0;  // expected lower bound on single-photon events
};

struct ErrorEstimate {
  double n0_lower_star = 0.0;
  double t0_lower_star = 0.0;
  double t0_lower = 0.0;
  double t1_upper = 0.0;
};

struct PhaseErrorBound {
  double bit_error_ratio = 0.0;  // t1_upper / s1_xx_lower before clamping
  double sample_rate = 0.0;      // clamped ratio passed to gamma_u
  double gamma = 0.0;
  double phi_upper = 0.0;
};

struct EstimationBreakdown {
  // Expected-value bounds on the observed tallies.
  double n0z_lower_star = 0.0;
  double n_nu_z_lower_star = 0.0;
  double n_mu_z_upper_star = 0.0;
  double n0z_upper_star = 0.0;
  double n_nu_x_lower_star = 0.0;
  double n_mu_x_upper_star = 0.0;
  double n0x_upper_star = 0.0;
  double n0x_lower_star = 0.0;

  double s0_zz_lower_star = 0.0;
  double s1_zz_lower_star = 0.0;
  double s1_xx_lower_star = 0.0;
  double t0_xx_lower_star = 0.0;

  double s0_zz_lower = 0.0;
  double s1_zz_lower = 0.0;
  double s1_xx_lower = 0.0;
  double t0_xx_lower = 0.0;
  double t1_xx_upper = 0.0;

  double bit_error_ratio = 0.0;
  double gamma = 0.0;
  double phi1_zz_upper = 0.0;

  bool operator==(const EstimationBreakdown&) const = default;
};

enum class AbortReason {
  none,
  insufficient_statistics,
  phase_error_above_tolerance,
  nonpositive_key_length,
};

std::string_view describe(AbortReason reason);

struct KeyRateReport {
  std::uint64_t ell = 0;
  bool aborted = false;
  AbortReason reason = AbortReason::none;
  double raw_length = 0.0;
  double rate_per_pulse = 0.0;
  double rate_per_second = 0.0;
  EstimationBreakdown breakdown;

  bool operator==(const KeyRateReport&) const = default;
};

class InsufficientStatistics : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double binary_entropy(double x);

VacuumEstimate estimate_vacuum_z(const ObservedTallies& tallies, const ProtocolParams& params,
                                 const SecuritySettings& settings, BoundAudit* audit = nullptr);

SinglePhotonEstimate estimate_single_z(const ObservedTallies& tallies,
                                       const ProtocolParams& params,
                                       const SecuritySettings& settings,
                                       BoundAudit* audit = nullptr);

SinglePhotonEstimate estimate_single_x(const ObservedTallies& tallies,
                                       const ProtocolParams& params,
                                       const SecuritySettings& settings,
                                       BoundAudit* audit = nullptr);

ErrorEstimate estimate_errors_x(const ObservedTallies& tallies, const ProtocolParams& params,
                                const SecuritySettings& settings, BoundAudit* audit = nullptr);

/// Uses s1_zz_lower, s1_xx_lower and t1_xx_upper from the breakdown.
/// Throws InsufficientStatistics when either single-photon bound is below 1.
PhaseErrorBound phase_error_rate(const EstimationBreakdown& breakdown,
                                 const SecuritySettings& settings, BoundAudit* audit = nullptr);

/// Constant finite-key penalty: log2(2/eps_cor) + 6 log2(22/eps_sec).
double composable_penalty(const SecuritySettings& settings);

KeyRateReport key_length(const ObservedTallies& tallies, const ProtocolParams& params,
                         const SecuritySettings& settings, double total_pulses, double clock_hz,
                         BoundAudit* audit = nullptr);

}  // namespace qkd
