// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cli_support.hpp"
#include "oracle.hpp"
#include "qkd/channel_sim.hpp"
#include "qkd/config.hpp"
#include "qkd/finite_key.hpp"
#include "qkd/stat_bounds.hpp"

using namespace qkd;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double time_limit_s, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  if (elapsed > time_limit_s) {
    out.pass = false;
    out.detail += " (over time limit)";
  }
  if (!out.pass) ++failures;
  std::printf("[%s] %d %s: %s [%.2fs / %.0fs]\n", out.pass ? "PASS" : "FAIL", id, title, out.detail.c_str(),
              elapsed, time_limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

RunConfig reference_config() {
  RunConfig c;  // defaults are the reference experiment, 60 s at 200 MHz
  return c;
}

Outcome bound_oracle() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> log_x(-3.0, 10.0);
  std::uniform_real_distribution<double> beta_dist(1.0, 50.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double x = std::pow(10.0, log_x(rng));
    if (i % 100 == 0) x = 0.0;
    if (i % 100 == 1) x = 1e10;
    const double b = beta_dist(rng);
    const FailureBudget budget{b};
    worst = std::max({worst, oracle::rel_error(expected_upper(x, budget), oracle::expected_upper(x, b)),
                      oracle::rel_error(expected_lower(x, budget), oracle::expected_lower(x, b)),
                      oracle::rel_error(observed_upper(x, budget), oracle::observed_upper(x, b)),
                      oracle::rel_error(observed_lower(x, budget), oracle::observed_lower(x, b))});
  }
  return {worst <= 1e-12, fmt("max relative error %.3e over 10^4 points (limit 1e-12)", worst)};
}

Outcome coverage() {
  const FailureBudget budget{std::log(1.0 / 0.01)};
  const std::int64_t trials = 1'000'000;
  const double mean = 1000.0;
  std::mt19937_64 rng(77);
  std::binomial_distribution<std::int64_t> draw(trials, mean / static_cast<double>(trials));
  const int runs = 100'000;
  int covered = 0;
  for (int i = 0; i < runs; ++i) {
    const double x = static_cast<double>(draw(rng));
    if (expected_lower(x, budget) <= mean && mean <= expected_upper(x, budget)) ++covered;
  }
  const double frac = static_cast<double>(covered) / runs;
  return {frac >= 0.985, fmt("coverage %.5f of 10^5 trials (need >= 0.985)", frac)};
}

Outcome soundness() {
  const int configs = 1000;
  struct Violations {
    int s0 = 0, s1z = 0, s1x = 0, t1 = 0;
  };
  const unsigned threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<Violations> per_thread(threads);
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = static_cast<int>(t); i < configs; i += static_cast<int>(threads)) {
        std::mt19937_64 rng(9000 + static_cast<std::uint64_t>(i));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        ChannelModel model;
        model.loss_db = 25.0 * u(rng);
        model.misalignment = {0.03 * u(rng), 0.03 * u(rng)};
        model.dark_cps = std::pow(10.0, 1.0 + 2.0 * u(rng));
        SessionPlan plan;
        plan.mode = SimulationMode::stochastic;
        plan.total_pulses = static_cast<std::uint64_t>(std::pow(10.0, 9.0 + u(rng)));
        plan.rng_seed = rng();
        const ProtocolParams params;
        const SecuritySettings security;
        const auto session = run_session(model, params, plan);
        const auto r = key_length(session.tallies, params, security,
                                  static_cast<double>(plan.total_pulses), model.clock_hz);
        const auto& bd = r.breakdown;
        auto& v = per_thread[t];
        v.s0 += bd.s0_zz_lower > session.truth.vacuum_events_z();
        v.s1z += bd.s1_zz_lower > session.truth.single_events_z();
        v.s1x += bd.s1_xx_lower > session.truth.single_events_x();
        v.t1 += bd.t1_xx_upper < session.truth.single_errors_x();
      }
    });
  }
  pool.clear();
  Violations total;
  for (const auto& v : per_thread) {
    total.s0 += v.s0;
    total.s1z += v.s1z;
    total.s1x += v.s1x;
    total.t1 += v.t1;
  }
  const int all = total.s0 + total.s1z + total.s1x + total.t1;
  return {all == 0, "violations over 10^3 configs: s0=" + std::to_string(total.s0) +
                        " s1_zz=" + std::to_string(total.s1z) + " s1_xx=" + std::to_string(total.s1x) +
                        " t1_xx=" + std::to_string(total.t1)};
}

Outcome tightness() {
  RunConfig c = reference_config();
  c.session.total_pulses = 10'000'000'000ULL;
  const auto session = run_session(c.channel, c.protocol, c.session);
  const auto r = key_length(session.tallies, c.protocol, c.security,
                            static_cast<double>(c.session.total_pulses), c.channel.clock_hz);
  const double ratio = r.breakdown.s1_zz_lower / session.truth.single_events_z();
  return {ratio >= 0.85 && ratio <= 1.0, fmt("s1_zz_lower / true = %.4f (need >= 0.85)", ratio)};
}

Outcome paper_rate() {
  const RunConfig c = reference_config();
  const auto session = run_session(c.channel, c.protocol, c.session);
  const auto r = key_length(session.tallies, c.protocol, c.security,
                            static_cast<double>(c.session.total_pulses), c.channel.clock_hz);
  const double kbps = r.rate_per_second / 1e3;
  return {!r.aborted && kbps >= 30.0 && kbps <= 150.0,
          fmt("secret key rate %.2f kbps over 60 s (window [30, 150])", kbps)};
}

Outcome pipeline_shape() {
  const RunConfig c = reference_config();
  const auto session = run_session(c.channel, c.protocol, c.session);
  BoundAudit audit;
  const auto r = key_length(session.tallies, c.protocol, c.security,
                            static_cast<double>(c.session.total_pulses), c.channel.clock_hz, &audit);
  const bool ok = !r.aborted && audit.expected_calls == 8 && audit.observed_calls == 4 && audit.gamma_calls == 1;
  return {ok, "expected=" + std::to_string(audit.expected_calls) + " observed=" +
                  std::to_string(audit.observed_calls) + " gamma_u=" + std::to_string(audit.gamma_calls)};
}

Outcome monotonicity() {
  std::string detail;
  bool ok = true;

  // ell against m_omega_x on simulated reference tallies.
  const RunConfig c = reference_config();
  ObservedTallies t = run_session(c.channel, c.protocol, c.session).tallies;
  const std::uint64_t n_omega_x = t.count(Intensity::omega, Basis::X);
  std::uint64_t prev_ell = UINT64_MAX;
  int ell_breaks = 0;
  for (std::uint64_t m = 0; m <= n_omega_x / 4; m += std::max<std::uint64_t>(1, n_omega_x / 2000)) {
    t.m_omega_x = m;
    const auto r = key_length(t, c.protocol, c.security, static_cast<double>(c.session.total_pulses),
                              c.channel.clock_hz);
    if (r.ell > prev_ell) ++ell_breaks;
    prev_ell = r.ell;
  }
  ok = ok && ell_breaks == 0;
  detail += "ell(m) breaks=" + std::to_string(ell_breaks);

  // Scan rate against loss through the CLI.
  test_support::TempDir dir;
  const auto cfg = dir.write("run.ini", serialize_config(c));
  const auto scan = test_support::run_cli(
      {"scan", "--config", cfg, "--loss-min", "0", "--loss-max", "30", "--steps", "121", "--threads", "4"});
  const auto lines = test_support::split_lines(scan.out);
  int scan_breaks = 0;
  double prev_rate = INFINITY;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const double rate = std::stod(test_support::split_csv(lines[i])[2]);
    if (rate > prev_rate) ++scan_breaks;
    prev_rate = rate;
  }
  ok = ok && scan.code == 0 && lines.size() == 122 && scan_breaks == 0;
  detail += ", scan(loss) breaks=" + std::to_string(scan_breaks);

  // gamma_u symmetry, exact.
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> log_n(0.0, 9.0);
  std::uniform_real_distribution<double> lam(1e-6, 1.0 - 1e-6);
  int asym = 0;
  for (int i = 0; i < 100'000; ++i) {
    const double n = std::floor(std::pow(10.0, log_n(rng)));
    const double k = std::floor(std::pow(10.0, log_n(rng)));
    const double l = lam(rng);
    if (gamma_u(n, k, l, 1e-10 / 22.0) != gamma_u(k, n, l, 1e-10 / 22.0)) ++asym;
  }
  ok = ok && asym == 0;
  detail += ", gamma_u asymmetric=" + std::to_string(asym);
  return {ok, detail};
}

Outcome determinism() {
  test_support::TempDir dir;
  RunConfig c = reference_config();
  c.session.total_pulses = 2'000'000'000ULL;
  const auto cfg = dir.write("run.ini", serialize_config(c));
  const std::vector<std::string> base{"simulate", "--config", cfg, "--seed", "123456789", "--reps", "24"};
  auto with_threads = [&](const std::string& n) {
    auto args = base;
    args.insert(args.end(), {"--threads", n});
    return test_support::run_cli(args);
  };
  const auto a = with_threads("1");
  const auto b = with_threads("1");
  const auto c4 = with_threads("4");
  const auto c7 = with_threads("7");
  const bool ok = a.code == 0 && !a.out.empty() && a.out == b.out && a.out == c4.out && a.out == c7.out;
  return {ok, "24 reps, runs at 1/1/4/7 threads " + std::string(ok ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
  criterion(1, "bound toolkit oracle equivalence", 10, bound_oracle);
  criterion(2, "expected-value interval coverage", 60, coverage);
  criterion(3, "decoy-estimator soundness", 300, soundness);
  criterion(4, "single-photon estimator tightness", 60, tightness);
  criterion(5, "reference experiment key rate", 30, paper_rate);
  criterion(6, "pipeline-shape audit", 10, pipeline_shape);
  criterion(7, "monotonicity suite", 120, monotonicity);
  criterion(8, "simulate determinism", 120, determinism);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
