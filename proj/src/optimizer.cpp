#include "qkd/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <string>

namespace qkd {
namespace {

constexpr std::array<int, kCoordinateCount> kHaltonPrimes{2, 3, 5, 7, 11, 13, 17};

double radical_inverse(std::uint64_t index, int base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

struct Candidate {
  CoordinateVector unit{};  // position in [0,1]^n relative to the search box
  ProtocolParams params;
  double value = -1.0;
  KeyRateReport report;
};

class Search {
 public:
  Search(const ChannelModel& model, const SecuritySettings& security, const SearchSpace& space,
         const SessionPlan& plan, int budget)
      : model_(model), security_(security), space_(space), plan_(plan), budget_(budget) {}

  bool exhausted() const { return evaluations_ >= budget_; }

  CoordinateVector to_box(const CoordinateVector& unit) const {
    CoordinateVector out{};
    for (std::size_t i = 0; i < kCoordinateCount; ++i) {
      out[i] = space_.lower[i] + unit[i] * (space_.upper[i] - space_.lower[i]);
    }
    return out;
  }

  CoordinateVector to_unit(const CoordinateVector& coords) const {
    CoordinateVector out{};
    for (std::size_t i = 0; i < kCoordinateCount; ++i) {
      const double span = space_.upper[i] - space_.lower[i];
      out[i] = span > 0.0 ? std::clamp((coords[i] - space_.lower[i]) / span, 0.0, 1.0) : 0.0;
    }
    return out;
  }

  Candidate evaluate(const CoordinateVector& unit) { return evaluate(unit, to_params(to_box(unit))); }

  Candidate evaluate(const CoordinateVector& unit, const ProtocolParams& params) {
    Candidate c;
    c.unit = unit;
    c.params = params;
    c.value = key_rate_objective(model_, security_, plan_, params, &c.report);
    ++evaluations_;
    if (!has_best_ || c.value > best_.value) {
      best_ = c;
      has_best_ = true;
    }
    trace_.push_back(best_.value);
    return c;
  }

  void descend(Candidate current, const OptimizerOptions& options) {
    CoordinateVector step{};
    step.fill(options.initial_step);
    while (!exhausted()) {
      bool improved = false;
      for (std::size_t i = 0; i < kCoordinateCount && !exhausted(); ++i) {
        if (!space_.free[i]) continue;
        for (double direction : {1.0, -1.0}) {
          if (exhausted()) break;
          CoordinateVector trial = current.unit;
          trial[i] = std::clamp(trial[i] + direction * step[i], 0.0, 1.0);
          if (trial[i] == current.unit[i]) continue;
          Candidate c = evaluate(trial);
          if (c.value > current.value) {
            current = std::move(c);
            improved = true;
            break;
          }
        }
      }
      if (!improved) {
        double largest = 0.0;
        for (std::size_t i = 0; i < kCoordinateCount; ++i) {
          step[i] *= 0.5;
          if (space_.free[i]) largest = std::max(largest, step[i]);
        }
        if (largest < options.min_step) return;
      }
    }
  }

  const Candidate& best() const { return best_; }
  std::vector<double>& trace() { return trace_; }
  int evaluations() const { return evaluations_; }

 private:
  const ChannelModel& model_;
  const SecuritySettings& security_;
  const SearchSpace& space_;
  const SessionPlan& plan_;
  int budget_;
  int evaluations_ = 0;
  bool has_best_ = false;
  Candidate best_;
  std::vector<double> trace_;
};

}  // namespace

std::string_view name(Coordinate c) {
  switch (c) {
    case Coordinate::mu: return "mu";
    case Coordinate::nu_ratio: return "nu_ratio";
    case Coordinate::omega: return "omega";
    case Coordinate::p_mu_share: return "p_mu_share";
    case Coordinate::p_nu_share: return "p_nu_share";
    case Coordinate::p_omega_share: return "p_omega_share";
    case Coordinate::q_z: return "q_z";
  }
  return "?";
}

void SearchSpace::fix_all_except(Coordinate c) {
  free.fill(false);
  free[static_cast<std::size_t>(c)] = true;
}

void SearchSpace::validate() const {
  for (std::size_t i = 0; i < kCoordinateCount; ++i) {
    const std::string field = "search." + std::string(name(static_cast<Coordinate>(i)));
    if (!(lower[i] <= upper[i])) throw InvalidArgument(field + ": lower bound exceeds upper bound");
    if (!(lower[i] > 0.0)) throw InvalidArgument(field + ": lower bound must be positive");
  }
  for (auto c : {Coordinate::nu_ratio, Coordinate::p_mu_share, Coordinate::p_nu_share,
                 Coordinate::p_omega_share, Coordinate::q_z}) {
    if (!(upper[static_cast<std::size_t>(c)] < 1.0)) {
      throw InvalidArgument("search." + std::string(name(c)) + ": upper bound must be below 1");
    }
  }
}

CoordinateVector to_coordinates(const ProtocolParams& p) {
  const double rest_after_mu = 1.0 - p.p_mu;
  const double rest_after_nu = rest_after_mu - p.p_nu;
  return {p.mu,
          p.nu / p.mu,
          p.omega,
          p.p_mu,
          p.p_nu / rest_after_mu,
          p.p_omega / rest_after_nu,
          p.q_z};
}

ProtocolParams to_params(const CoordinateVector& c) {
  ProtocolParams p;
  p.mu = c[0];
  p.nu = c[1] * c[0];
  p.omega = c[2];
  p.p_mu = c[3];
  p.p_nu = (1.0 - c[3]) * c[4];
  p.p_omega = (1.0 - c[3]) * (1.0 - c[4]) * c[5];
  p.p_0 = (1.0 - c[3]) * (1.0 - c[4]) * (1.0 - c[5]);
  p.q_z = c[6];
  return p;
}

double key_rate_objective(const ChannelModel& model, const SecuritySettings& security,
                          const SessionPlan& plan, const ProtocolParams& params,
                          KeyRateReport* report) {
  try {
    SessionPlan expected = plan;
    expected.mode = SimulationMode::expected;
    const auto session = run_session(model, params, expected);
    auto r = key_length(session.tallies, params, security,
                        static_cast<double>(plan.total_pulses), model.clock_hz);
    const double value = r.rate_per_pulse;
    if (report != nullptr) *report = std::move(r);
    return value;
  } catch (const std::exception&) {
    if (report != nullptr) {
      *report = KeyRateReport{};
      report->aborted = true;
    }
    return 0.0;
  }
}

OptimizationResult optimize(const ChannelModel& model, const SecuritySettings& security,
                            const SearchSpace& space, const SessionPlan& plan,
                            const ProtocolParams& start, const OptimizerOptions& options) {
  space.validate();
  model.validate();
  security.validate();
  start.validate();
  if (options.budget < 1) throw InvalidArgument("optimize: budget must be at least 1");
  if (options.starts < 1) throw InvalidArgument("optimize: at least one start is required");

  Search search(model, security, space, plan, options.budget);

  // Start 0 is the supplied point; the rest are a seeded rotation of the
  // Halton sequence. Fixed coordinates keep the supplied value everywhere.
  const CoordinateVector origin = search.to_unit(to_coordinates(start));
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CoordinateVector shift{};
  for (double& s : shift) s = unit(rng);

  std::vector<Candidate> starts;
  for (int s = 0; s < options.starts && !search.exhausted(); ++s) {
    CoordinateVector point = origin;
    if (s > 0) {
      for (std::size_t i = 0; i < kCoordinateCount; ++i) {
        if (!space.free[i]) continue;
        point[i] = std::fmod(radical_inverse(static_cast<std::uint64_t>(s), kHaltonPrimes[i]) +
                                 shift[i],
                             1.0);
      }
    }
    starts.push_back(s == 0 ? search.evaluate(point, start) : search.evaluate(point));
  }

  std::vector<std::size_t> order(starts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return starts[a].value > starts[b].value; });
  for (std::size_t i : order) {
    if (search.exhausted()) break;
    search.descend(starts[i], options);
  }

  OptimizationResult result;
  result.best = search.best().params;
  result.report = search.best().report;
  result.trace = std::move(search.trace());
  result.evaluations = search.evaluations();
  return result;
}

}  // namespace qkd
