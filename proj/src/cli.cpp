#include "qkd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include "qkd/channel_sim.hpp"
#include "qkd/optimizer.hpp"

namespace qkd::cli {
namespace {

using Json = nlohmann::ordered_json;

constexpr std::array<std::pair<const char*, double EstimationBreakdown::*>, 20> kBreakdownFields{{
    {"n0z_lower_star", &EstimationBreakdown::n0z_lower_star},
    {"n_nu_z_lower_star", &EstimationBreakdown::n_nu_z_lower_star},
    {"n_mu_z_upper_star", &EstimationBreakdown::n_mu_z_upper_star},
    {"n0z_upper_star", &EstimationBreakdown::n0z_upper_star},
    {"n_nu_x_lower_star", &EstimationBreakdown::n_nu_x_lower_star},
    {"n_mu_x_upper_star", &EstimationBreakdown::n_mu_x_upper_star},
    {"n0x_upper_star", &EstimationBreakdown::n0x_upper_star},
    {"n0x_lower_star", &EstimationBreakdown::n0x_lower_star},
    {"s0_zz_lower_star", &EstimationBreakdown::s0_zz_lower_star},
    {"s1_zz_lower_star", &EstimationBreakdown::s1_zz_lower_star},
    {"s1_xx_lower_star", &EstimationBreakdown::s1_xx_lower_star},
    {"t0_xx_lower_star", &EstimationBreakdown::t0_xx_lower_star},
    {"s0_zz_lower", &EstimationBreakdown::s0_zz_lower},
    {"s1_zz_lower", &EstimationBreakdown::s1_zz_lower},
    {"s1_xx_lower", &EstimationBreakdown::s1_xx_lower},
    {"t0_xx_lower", &EstimationBreakdown::t0_xx_lower},
    {"t1_xx_upper", &EstimationBreakdown::t1_xx_upper},
    {"bit_error_ratio", &EstimationBreakdown::bit_error_ratio},
    {"gamma", &EstimationBreakdown::gamma},
    {"phi1_zz_upper", &EstimationBreakdown::phi1_zz_upper},
}};

// Results are written by index, so output order never depends on scheduling.
template <class Result>
std::vector<Result> parallel_map(std::size_t count, unsigned threads,
                                 const std::function<Result(std::size_t)>& fn) {
  std::vector<Result> results(count);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::vector<std::exception_ptr> failures(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < count; i += threads) results[i] = fn(i);
        } catch (...) {
          failures[t] = std::current_exception();
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return results;
}

Json tallies_json(const ObservedTallies& t) {
  Json j;
  for (Basis b : kBases) {
    for (Intensity k : kIntensities) {
      j["n_" + std::string(name(k)) + "_" + std::string(name(b))] = t.count(k, b);
    }
  }
  j["m_omega_x"] = t.m_omega_x;
  j["lambda_ec"] = t.lambda_ec;
  return j;
}

Json report_json(const KeyRateReport& r) {
  Json j;
  j["ell"] = r.ell;
  j["aborted"] = r.aborted;
  j["abort_reason"] = std::string(describe(r.reason));
  j["raw_length"] = r.raw_length;
  j["rate_per_pulse"] = r.rate_per_pulse;
  j["rate_per_second"] = r.rate_per_second;
  Json bd;
  for (const auto& [key, member] : kBreakdownFields) bd[key] = r.breakdown.*member;
  j["breakdown"] = std::move(bd);
  return j;
}

void render_params(const ProtocolParams& p, std::ostream& out) {
  out << "mu = " << format_number(p.mu) << '\n'
      << "nu = " << format_number(p.nu) << '\n'
      << "omega = " << format_number(p.omega) << '\n'
      << "p_mu = " << format_number(p.p_mu) << '\n'
      << "p_nu = " << format_number(p.p_nu) << '\n'
      << "p_omega = " << format_number(p.p_omega) << '\n'
      << "p_0 = " << format_number(p.p_0) << '\n'
      << "q_z = " << format_number(p.q_z) << '\n';
}

KeyRateReport expected_report(const RunConfig& config) {
  SessionPlan plan = config.session;
  plan.mode = SimulationMode::expected;
  const auto session = run_session(config.channel, config.protocol, plan);
  return key_length(session.tallies, config.protocol, config.security,
                    static_cast<double>(plan.total_pulses), config.channel.clock_hz);
}

// Writes to `path` when given, otherwise to `fallback`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw ConfigError("cannot write '" + path + "'");
      out_ = &file_;
    }
  }
  std::ostream& stream() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

int cmd_keyrate(const std::string& config_path, const std::string& tallies_path,
                std::ostream& out, std::ostream& err) {
  const RunConfig config = load_config(config_path);
  KeyRateReport report;
  if (tallies_path.empty()) {
    report = expected_report(config);
  } else {
    const ObservedTallies tallies = load_tallies(tallies_path);
    report = key_length(tallies, config.protocol, config.security,
                        static_cast<double>(config.session.total_pulses), config.channel.clock_hz);
  }
  render_report(report, out);
  if (report.aborted) {
    err << "aborted: " << describe(report.reason) << '\n';
    return kExitAbort;
  }
  return kExitOk;
}

int cmd_scan(const std::string& config_path, double loss_min, double loss_max, int steps,
             const std::string& out_path, unsigned threads, std::ostream& out) {
  const RunConfig config = load_config(config_path);
  if (steps < 1) throw ConfigError("scan: --steps must be at least 1");
  if (!(loss_min >= 0.0 && loss_max >= loss_min)) {
    throw ConfigError("scan: require 0 <= --loss-min <= --loss-max");
  }
  auto loss_at = [&](std::size_t i) {
    if (steps == 1) return loss_min;
    return loss_min + (loss_max - loss_min) * static_cast<double>(i) / (steps - 1);
  };
  const auto reports = parallel_map<KeyRateReport>(
      static_cast<std::size_t>(steps), threads, [&](std::size_t i) {
        RunConfig point = config;
        point.channel.loss_db = loss_at(i);
        return expected_report(point);
      });

  Sink sink(out_path, out);
  auto& os = sink.stream();
  os << kScanHeader << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << format_number(loss_at(i)) << ',' << r.ell << ',' << format_number(r.rate_per_second)
       << ',' << format_number(r.breakdown.phi1_zz_upper) << ','
       << format_number(r.breakdown.s1_zz_lower) << '\n';
  }
  return kExitOk;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, int reps,
                 const std::string& out_path, unsigned threads, std::ostream& out) {
  const RunConfig config = load_config(config_path);
  if (reps < 1) throw ConfigError("simulate: --reps must be at least 1");
  const auto lines = parallel_map<std::string>(
      static_cast<std::size_t>(reps), threads, [&](std::size_t i) {
        SessionPlan plan = config.session;
        plan.mode = SimulationMode::stochastic;
        plan.rng_seed = seed + i;
        const auto session = run_session(config.channel, config.protocol, plan);
        const auto report =
            key_length(session.tallies, config.protocol, config.security,
                       static_cast<double>(plan.total_pulses), config.channel.clock_hz);
        return simulate_record(plan.rng_seed, session.tallies, report);
      });
  Sink sink(out_path, out);
  for (const auto& line : lines) sink.stream() << line << '\n';
  return kExitOk;
}

int cmd_optimize(const std::string& config_path, int budget, std::uint64_t seed,
                 bool write_back, std::ostream& out) {
  RunConfig config = load_config(config_path);
  if (budget < 1) throw ConfigError("optimize: --budget must be at least 1");

  KeyRateReport input_report;
  const double input_rate = key_rate_objective(config.channel, config.security, config.session,
                                               config.protocol, &input_report);
  OptimizerOptions options;
  options.budget = budget;
  options.seed = seed;
  const auto result = optimize(config.channel, config.security, SearchSpace{}, config.session,
                               config.protocol, options);

  out << "[best]\n";
  render_params(result.best, out);
  out << "\n[rates]\n"
      << "evaluations = " << result.evaluations << '\n'
      << "input_rate_per_pulse = " << format_number(input_rate) << '\n'
      << "best_rate_per_pulse = " << format_number(result.report.rate_per_pulse) << '\n'
      << "input_rate_per_second = " << format_number(input_report.rate_per_second) << '\n'
      << "best_rate_per_second = " << format_number(result.report.rate_per_second) << '\n'
      << "improvement_per_second = "
      << format_number(result.report.rate_per_second - input_report.rate_per_second) << '\n'
      << "\n[report]\n";
  render_report(result.report, out);

  if (write_back) {
    config.protocol = result.best;
    save_config(config, config_path);
    out << "\nwritten = " << config_path << '\n';
  }
  return kExitOk;
}

}  // namespace

void render_report(const KeyRateReport& r, std::ostream& out) {
  out << "ell = " << r.ell << '\n'
      << "aborted = " << (r.aborted ? "true" : "false") << '\n'
      << "abort_reason = " << describe(r.reason) << '\n'
      << "raw_length = " << format_number(r.raw_length) << '\n'
      << "rate_per_pulse = " << format_number(r.rate_per_pulse) << '\n'
      << "rate_per_second = " << format_number(r.rate_per_second) << '\n';
  for (const auto& [key, member] : kBreakdownFields) {
    out << key << " = " << format_number(r.breakdown.*member) << '\n';
  }
}

std::string simulate_record(std::uint64_t seed, const ObservedTallies& tallies,
                            const KeyRateReport& report) {
  Json j;
  j["seed"] = seed;
  j["tallies"] = tallies_json(tallies);
  j["report"] = report_json(report);
  return j.dump();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Finite-key secret key rates for four-intensity decoy-state BB84"};
  app.require_subcommand(1);

  std::string config_path;
  std::string tallies_path;
  std::string out_path;
  double loss_min = 0.0;
  double loss_max = 0.0;
  int steps = 1;
  int reps = 1;
  int budget = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool write_back = false;

  auto* keyrate = app.add_subcommand("keyrate", "Secret key length from tallies or the channel model");
  keyrate->add_option("--config", config_path, "Run configuration (INI)")->required();
  keyrate->add_option("--tallies", tallies_path, "Observed tallies file");

  auto* scan = app.add_subcommand("scan", "Key rate versus channel loss as CSV");
  scan->add_option("--config", config_path)->required();
  scan->add_option("--loss-min", loss_min, "Smallest loss in dB")->required();
  scan->add_option("--loss-max", loss_max, "Largest loss in dB")->required();
  scan->add_option("--steps", steps, "Number of loss points")->required();
  scan->add_option("--out", out_path, "CSV output path (default stdout)");
  scan->add_option("--threads", threads, "Worker threads");

  auto* simulate = app.add_subcommand("simulate", "Stochastic sessions as JSON lines");
  simulate->add_option("--config", config_path)->required();
  simulate->add_option("--seed", seed, "Seed of the first repetition")->required();
  simulate->add_option("--reps", reps, "Number of repetitions")->required();
  simulate->add_option("--out", out_path, "JSON-lines output path (default stdout)");
  simulate->add_option("--threads", threads, "Worker threads");

  auto* opt = app.add_subcommand("optimize", "Maximize key rate over protocol parameters");
  opt->add_option("--config", config_path)->required();
  opt->add_option("--budget", budget, "Maximum objective evaluations")->required();
  opt->add_option("--seed", seed, "Seed for the quasi-random starts")->required();
  opt->add_flag("--write-back", write_back, "Store the optimized parameters in the config file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (keyrate->parsed()) return cmd_keyrate(config_path, tallies_path, out, err);
    if (scan->parsed()) return cmd_scan(config_path, loss_min, loss_max, steps, out_path, threads, out);
    if (simulate->parsed()) return cmd_simulate(config_path, seed, reps, out_path, threads, out);
    if (opt->parsed()) return cmd_optimize(config_path, budget, seed, write_back, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace qkd::cli
