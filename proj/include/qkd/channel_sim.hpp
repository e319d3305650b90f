#pragma once

// Desk-scale model of a time-phase encoded decoy-state link: attenuated
// weak coherent pulses, a passive biased beam splitter at the receiver and
// gated detectors with dark counts, misalignment and dead time.

#include <array>
#include <cstdint>
#include <vector>

#include "qkd/finite_key.hpp"

namespace qkd {

struct ChannelModel {
  double loss_db = 9.4;
  std::array<double, 2> det_eff{0.2, 0.2};
  std::array<double, 2> extra_loss_db{0.0, 1.8};
  double dark_cps = 120.0;
  std::array<double, 2> misalignment{0.005, 0.015};
  std::array<double, 2> dead_time_s{3e-6, 5e-6};
  double clock_hz = 2e8;
  double gate_fraction = 0.09;  // 450 ps effective gate at 200 MHz
  bool sync_blanking = true;
  double blanking_fraction = 0.02;  // 100 kHz sync pulses x 200 ns window

  double transmittance(Basis b) const;
  double dark_probability() const { return dark_cps * gate_fraction / clock_hz; }
  double keep_fraction() const { return sync_blanking ? 1.0 - blanking_fraction : 1.0; }
  void validate() const;

  bool operator==(const ChannelModel&) const = default;
};

enum class SimulationMode { expected, stochastic };

struct SessionPlan {
  std::uint64_t total_pulses = 12'000'000'000ULL;  // 60 s at 200 MHz
  std::uint64_t rng_seed = 1;
  SimulationMode mode = SimulationMode::expected;
  double f_ec = 1.42;

  void validate() const;

  bool operator==(const SessionPlan&) const = default;
};

/// Yield of an m-photon pulse routed to one basis.
struct PhotonTerm {
  double weight = 0.0;       // Poisson probability of m photons
  double yield = 0.0;        // click probability given m photons
  double error_yield = 0.0;  // erroneous-click probability given m photons
};

struct PulseProbabilities {
  double detection = 0.0;  // q_b [1 - (1 - p_dc)^2 e^{-k eta_b}]
  double error = 0.0;
  std::vector<PhotonTerm> terms;  // m = 0, 1, ... until the Poisson tail is negligible
};

PulseProbabilities per_pulse_probabilities(const ChannelModel& model, const ProtocolParams& params,
                                           Intensity k, Basis b);

/// Non-paralyzable throughput multiplier 1 / (1 + rate * tau_b).
double dead_time_factor(const ChannelModel& model, double raw_rate_hz, Basis b);

/// Click rate of a basis before dead time, summed over both detectors of the basis.
double raw_click_rate(const ChannelModel& model, const ProtocolParams& params, Basis b);

enum PhotonClass : std::size_t { kVacuum = 0, kSingle = 1, kMulti = 2 };

/// Photon-number-resolved bookkeeping of a session, used as ground truth.
struct TruthRecord {
  // [intensity][basis][photon class]
  std::array<std::array<std::array<double, 3>, 2>, 4> events{};
  std::array<std::array<std::array<double, 3>, 2>, 4> errors{};

  double event_count(Intensity k, Basis b, PhotonClass c) const {
    return events[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)][c];
  }
  double error_count(Intensity k, Basis b, PhotonClass c) const {
    return errors[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)][c];
  }

  /// Vacuum events in the key set (mu and nu sent, Z measured).
  double vacuum_events_z() const;
  double single_events_z() const;
  /// Single-photon events in the (omega, X) set.
  double single_events_x() const;
  double single_errors_x() const;
  double vacuum_errors_x() const;
};

struct SessionResult {
  ObservedTallies tallies;
  TruthRecord truth;
  std::array<double, 2> dead_time{1.0, 1.0};
  double qber_z = 0.0;
};

SessionResult run_session(const ChannelModel& model, const ProtocolParams& params,
                          const SessionPlan& plan);

}  // namespace qkd
