#pragma once

// Derivative-free protocol parameter search. The objective (secret key rate
// per pulse from the expected-value simulator) has floors, clamps and abort
// cliffs, so the search uses coordinate descent with a shrinking step from
// several quasi-random starts.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "qkd/channel_sim.hpp"
#include "qkd/finite_key.hpp"

namespace qkd {

/// Internal search coordinates. Every point of the box maps to a feasible
/// ProtocolParams: nu = nu_ratio * mu, and the source probabilities come from
/// stick-breaking shares (p_mu = s0, p_nu = (1-s0) s1, p_omega = (1-s0)(1-s1) s2,
/// p_0 = the remainder).
enum class Coordinate : std::size_t {
  mu = 0,
  nu_ratio,
  omega,
  p_mu_share,
  p_nu_share,
  p_omega_share,
  q_z,
};

inline constexpr std::size_t kCoordinateCount = 7;
using CoordinateVector = std::array<double, kCoordinateCount>;

std::string_view name(Coordinate c);

struct SearchSpace {
  CoordinateVector lower{0.02, 0.01, 0.01, 0.001, 0.001, 0.001, 0.01};
  CoordinateVector upper{1.0, 0.99, 1.0, 0.999, 0.999, 0.999, 0.99};
  std::array<bool, kCoordinateCount> free{true, true, true, true, true, true, true};

  void fix(Coordinate c) { free[static_cast<std::size_t>(c)] = false; }
  void fix_all_except(Coordinate c);
  void validate() const;
};

CoordinateVector to_coordinates(const ProtocolParams& params);
ProtocolParams to_params(const CoordinateVector& coords);

struct OptimizerOptions {
  int budget = 2000;          // maximum objective evaluations
  std::uint64_t seed = 1;
  int starts = 8;             // the supplied point plus starts-1 quasi-random points
  double initial_step = 0.2;  // fraction of each coordinate's range
  double min_step = 1e-4;
};

struct OptimizationResult {
  ProtocolParams best;
  KeyRateReport report;
  std::vector<double> trace;  // incumbent rate_per_pulse after each evaluation
  int evaluations = 0;
};

/// Rate per pulse of the expected-value session at `params`; 0 on any failure.
double key_rate_objective(const ChannelModel& model, const SecuritySettings& security,
                          const SessionPlan& plan, const ProtocolParams& params,
                          KeyRateReport* report = nullptr);

OptimizationResult optimize(const ChannelModel& model, const SecuritySettings& security,
                            const SearchSpace& space, const SessionPlan& plan,
                            const ProtocolParams& start, const OptimizerOptions& options);

}  // namespace qkd
