#include "qkd/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace qkd {
namespace {

constexpr double kPoissonTail = 1e-20;

std::size_t idx(Basis b) { return static_cast<std::size_t>(b); }
std::size_t idx(Intensity k) { return static_cast<std::size_t>(k); }

std::string basis_field(const char* field, Basis b) {
  return std::string("channel.") + field + "_" + std::string(name(b));
}

// 1 - (1 - p_dc)^2 e^{-k eta}
double click_probability(double p_dc, double k_eta) {
  return -std::expm1(2.0 * std::log1p(-p_dc) - k_eta);
}

struct ClassYields {
  std::array<double, 3> click{};  // weight * yield, per photon class
  std::array<double, 3> error{};  // weight * error_yield, per photon class
};

ClassYields collapse(const PulseProbabilities& probs) {
  ClassYields out;
  for (std::size_t m = 0; m < probs.terms.size(); ++m) {
    const std::size_t c = std::min<std::size_t>(m, kMulti);
    out.click[c] += probs.terms[m].weight * probs.terms[m].yield;
    out.error[c] += probs.terms[m].weight * probs.terms[m].error_yield;
  }
  return out;
}

// Sequential conditional binomials; the last bucket is the implicit remainder.
template <class Rng>
std::vector<std::int64_t> multinomial(std::int64_t trials, const std::vector<double>& probs,
                                      Rng& rng) {
  std::vector<std::int64_t> out(probs.size(), 0);
  double remaining_mass = 1.0;
  for (std::size_t i = 0; i < probs.size() && trials > 0; ++i) {
    if (probs[i] <= 0.0) continue;
    const double p = remaining_mass > 0.0 ? std::clamp(probs[i] / remaining_mass, 0.0, 1.0) : 1.0;
    std::binomial_distribution<std::int64_t> draw(trials, p);
    out[i] = draw(rng);
    trials -= out[i];
    remaining_mass -= probs[i];
  }
  return out;
}

}  // namespace

double ChannelModel::transmittance(Basis b) const {
  return det_eff[idx(b)] * std::pow(10.0, -(loss_db + extra_loss_db[idx(b)]) / 10.0);
}

void ChannelModel::validate() const {
  if (!(std::isfinite(loss_db) && loss_db >= 0.0)) {
    throw InvalidArgument("channel.loss_db: must be nonnegative");
  }
  for (Basis b : kBases) {
    const auto i = idx(b);
    if (!(det_eff[i] > 0.0 && det_eff[i] <= 1.0)) {
      throw InvalidArgument(basis_field("det_eff", b) + ": must lie in (0, 1]");
    }
    if (!(std::isfinite(extra_loss_db[i]) && extra_loss_db[i] >= 0.0)) {
      throw InvalidArgument(basis_field("extra_loss_db", b) + ": must be nonnegative");
    }
    if (!(misalignment[i] >= 0.0 && misalignment[i] <= 0.5)) {
      throw InvalidArgument(basis_field("misalignment", b) + ": must lie in [0, 0.5]");
    }
    if (!(std::isfinite(dead_time_s[i]) && dead_time_s[i] >= 0.0)) {
      throw InvalidArgument(basis_field("dead_time_s", b) + ": must be nonnegative");
    }
  }
  if (!(std::isfinite(dark_cps) && dark_cps >= 0.0)) {
    throw InvalidArgument("channel.dark_cps: must be nonnegative");
  }
  if (!(std::isfinite(clock_hz) && clock_hz > 0.0)) {
    throw InvalidArgument("channel.clock_hz: must be positive");
  }
  if (!(gate_fraction >= 0.0 && gate_fraction <= 1.0)) {
    throw InvalidArgument("channel.gate_fraction: must lie in [0, 1]");
  }
  if (!(blanking_fraction >= 0.0 && blanking_fraction < 1.0)) {
    throw InvalidArgument("channel.blanking_fraction: must lie in [0, 1)");
  }
  if (!(dark_probability() < 1.0)) {
    throw InvalidArgument("channel.dark_cps: dark probability per gate must be below 1");
  }
}

void SessionPlan::validate() const {
  if (total_pulses < 1) throw InvalidArgument("session.pulses: must be at least 1");
  if (!(std::isfinite(f_ec) && f_ec >= 1.0)) {
    throw InvalidArgument("session.f_ec: must be at least 1");
  }
}

PulseProbabilities per_pulse_probabilities(const ChannelModel& model, const ProtocolParams& params,
                                           Intensity k, Basis b) {
  model.validate();
  const double mean = params.intensity(k);
  const double q = params.basis_probability(b);
  const double eta = model.transmittance(b);
  const double p_dc = model.dark_probability();
  const double e_mis = model.misalignment[idx(b)];

  PulseProbabilities out;
  const double raw_click = click_probability(p_dc, mean * eta);
  const double signal = -std::expm1(-mean * eta);
  out.detection = q * raw_click;
  out.error = q * std::min(raw_click, p_dc + e_mis * signal);

  const double no_dark = (1.0 - p_dc) * (1.0 - p_dc);
  double weight = std::exp(-mean);
  double survive = 1.0;  // (1 - eta)^m
  for (int m = 0;; ++m) {
    PhotonTerm term;
    term.weight = weight;
    term.yield = 1.0 - no_dark * survive;
    term.error_yield = std::min(term.yield, p_dc + e_mis * (1.0 - survive));
    out.terms.push_back(term);
    weight *= mean / (m + 1);
    survive *= 1.0 - eta;
    if (m >= 1 && (weight < kPoissonTail || mean == 0.0)) break;
  }
  return out;
}

double dead_time_factor(const ChannelModel& model, double raw_rate_hz, Basis b) {
  return 1.0 / (1.0 + raw_rate_hz * model.dead_time_s[idx(b)]);
}

double raw_click_rate(const ChannelModel& model, const ProtocolParams& params, Basis b) {
  double per_pulse = 0.0;
  for (Intensity k : kIntensities) {
    per_pulse += params.probability(k) * per_pulse_probabilities(model, params, k, b).detection;
  }
  return per_pulse * model.clock_hz;
}

double TruthRecord::vacuum_events_z() const {
  return event_count(Intensity::mu, Basis::Z, kVacuum) + event_count(Intensity::nu, Basis::Z, kVacuum);
}

double TruthRecord::single_events_z() const {
  return event_count(Intensity::mu, Basis::Z, kSingle) + event_count(Intensity::nu, Basis::Z, kSingle);
}

double TruthRecord::single_events_x() const {
  return event_count(Intensity::omega, Basis::X, kSingle);
}

double TruthRecord::single_errors_x() const {
  return error_count(Intensity::omega, Basis::X, kSingle);
}

double TruthRecord::vacuum_errors_x() const {
  return error_count(Intensity::omega, Basis::X, kVacuum);
}

SessionResult run_session(const ChannelModel& model, const ProtocolParams& params,
                          const SessionPlan& plan) {
  model.validate();
  params.validate();
  plan.validate();

  SessionResult result;
  // Per-pulse scale of each basis: passive split, dead time, sync blanking.
  std::array<double, 2> scale{};
  for (Basis b : kBases) {
    result.dead_time[idx(b)] = dead_time_factor(model, raw_click_rate(model, params, b), b);
    scale[idx(b)] = params.basis_probability(b) * result.dead_time[idx(b)] * model.keep_fraction();
  }

  std::array<std::array<ClassYields, 2>, 4> yields{};
  for (Intensity k : kIntensities) {
    for (Basis b : kBases) {
      yields[idx(k)][idx(b)] = collapse(per_pulse_probabilities(model, params, k, b));
    }
  }

  const double pulses = static_cast<double>(plan.total_pulses);
  TruthRecord& truth = result.truth;

  if (plan.mode == SimulationMode::expected) {
    for (Intensity k : kIntensities) {
      for (Basis b : kBases) {
        const double sent = pulses * params.probability(k) * scale[idx(b)];
        const ClassYields& y = yields[idx(k)][idx(b)];
        for (std::size_t c = 0; c < 3; ++c) {
          truth.events[idx(k)][idx(b)][c] = sent * y.click[c];
          truth.errors[idx(k)][idx(b)][c] = sent * y.error[c];
        }
        // Tallies come from the closed form, not the truncated series.
        const auto probs = per_pulse_probabilities(model, params, k, b);
        const double expected_clicks = pulses * params.probability(k) * probs.detection *
                                       result.dead_time[idx(b)] * model.keep_fraction();
        result.tallies.count(k, b) = static_cast<std::uint64_t>(std::llround(expected_clicks));
        if (k == Intensity::omega && b == Basis::X) {
          const double expected_errors = pulses * params.probability(k) * probs.error *
                                         result.dead_time[idx(b)] * model.keep_fraction();
          result.tallies.m_omega_x = std::min(result.tallies.count(k, b),
                                              static_cast<std::uint64_t>(std::llround(expected_errors)));
        }
      }
    }
  } else {
    std::mt19937_64 rng(plan.rng_seed);
    std::vector<double> source(4);
    for (Intensity k : kIntensities) source[idx(k)] = params.probability(k);
    const auto sent = multinomial(static_cast<std::int64_t>(plan.total_pulses), source, rng);

    for (Intensity k : kIntensities) {
      // Categories: (basis, class, erroneous?) then an implicit no-click remainder.
      std::vector<double> cats;
      cats.reserve(12);
      for (Basis b : kBases) {
        const ClassYields& y = yields[idx(k)][idx(b)];
        for (std::size_t c = 0; c < 3; ++c) {
          cats.push_back(scale[idx(b)] * y.error[c]);
          cats.push_back(scale[idx(b)] * (y.click[c] - y.error[c]));
        }
      }
      const auto draws = multinomial(sent[idx(k)], cats, rng);
      std::size_t i = 0;
      for (Basis b : kBases) {
        std::uint64_t clicks = 0;
        std::uint64_t wrong = 0;
        for (std::size_t c = 0; c < 3; ++c) {
          const auto err = draws[i++];
          const auto ok = draws[i++];
          truth.events[idx(k)][idx(b)][c] = static_cast<double>(err + ok);
          truth.errors[idx(k)][idx(b)][c] = static_cast<double>(err);
          clicks += static_cast<std::uint64_t>(err + ok);
          wrong += static_cast<std::uint64_t>(err);
        }
        result.tallies.count(k, b) = clicks;
        if (k == Intensity::omega && b == Basis::X) result.tallies.m_omega_x = wrong;
      }
    }
  }

  // Error-correction leakage on the Z-basis key set.
  double key_events = 0.0;
  double key_errors = 0.0;
  for (Intensity k : {Intensity::mu, Intensity::nu}) {
    for (std::size_t c = 0; c < 3; ++c) {
      key_events += truth.events[idx(k)][idx(Basis::Z)][c];
      key_errors += truth.errors[idx(k)][idx(Basis::Z)][c];
    }
  }
  result.qber_z = key_events > 0.0 ? std::min(1.0, key_errors / key_events) : 0.0;
  const double sifted = static_cast<double>(result.tallies.count(Intensity::mu, Basis::Z) +
                                            result.tallies.count(Intensity::nu, Basis::Z));
  result.tallies.lambda_ec = plan.f_ec * sifted * binary_entropy(result.qber_z);
  return result;
}

}  // namespace qkd
