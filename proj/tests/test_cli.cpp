#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <numeric>

#include "cli_support.hpp"
#include "qkd/config.hpp"

using namespace test_support;
using qkd::RunConfig;

namespace {

std::string default_config(const TempDir& dir) {
  return dir.write("run.ini", qkd::serialize_config(RunConfig{}));
}

}  // namespace

TEST_CASE("keyrate on the default config") {
  TempDir dir;
  const auto r = run_cli({"keyrate", "--config", default_config(dir)});
  CHECK(r.code == qkd::cli::kExitOk);
  CHECK(std::stoull(field(r.out, "ell")) > 0);
  CHECK(field(r.out, "aborted") == "false");
  CHECK_FALSE(field(r.out, "phi1_zz_upper").empty());
  CHECK_FALSE(field(r.out, "n_mu_x_upper_star").empty());
}

TEST_CASE("keyrate rejects mu below nu") {
  TempDir dir;
  const auto cfg = dir.write("bad.ini", "[protocol]\nmu = 0.1\nnu = 0.15\n");
  const auto r = run_cli({"keyrate", "--config", cfg});
  CHECK(r.code == qkd::cli::kExitInputError);
  CHECK(r.err.find("mu > nu") != std::string::npos);
}

TEST_CASE("keyrate on zero tallies aborts with exit code 2") {
  TempDir dir;
  const auto tallies = dir.write("t.txt", qkd::serialize_tallies(qkd::ObservedTallies{}));
  const auto r = run_cli({"keyrate", "--config", default_config(dir), "--tallies", tallies});
  CHECK(r.code == qkd::cli::kExitAbort);
  CHECK(r.err.find("insufficient statistics") != std::string::npos);
  CHECK(field(r.out, "ell") == "0");
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run_cli({}).code == qkd::cli::kExitInputError);
  CHECK(run_cli({"keyrate"}).code == qkd::cli::kExitInputError);
  CHECK(run_cli({"keyrate", "--config", "/nonexistent/run.ini"}).code == qkd::cli::kExitInputError);
  const auto help = run_cli({"--help"});
  CHECK(help.code == qkd::cli::kExitOk);
}

TEST_CASE("scan with one step equals keyrate") {
  TempDir dir;
  const auto cfg = default_config(dir);
  const auto scan = run_cli({"scan", "--config", cfg, "--loss-min", "9.4", "--loss-max", "9.4", "--steps", "1"});
  REQUIRE(scan.code == 0);
  const auto lines = split_lines(scan.out);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == qkd::cli::kScanHeader);
  const auto cells = split_csv(lines[1]);
  const auto key = run_cli({"keyrate", "--config", cfg});
  CHECK(cells[0] == "9.4");
  CHECK(cells[1] == field(key.out, "ell"));
  CHECK(cells[2] == field(key.out, "rate_per_second"));
  CHECK(cells[3] == field(key.out, "phi1_zz_upper"));
  CHECK(cells[4] == field(key.out, "s1_zz_lower"));
}

TEST_CASE("scan rate is nonincreasing in loss and thread-count independent") {
  TempDir dir;
  const auto cfg = default_config(dir);
  const auto out = dir.file("scan.csv");
  const auto r = run_cli({"scan", "--config", cfg, "--loss-min", "0", "--loss-max", "30", "--steps", "31",
                          "--out", out, "--threads", "4"});
  REQUIRE(r.code == 0);
  const auto csv = slurp(out);
  const auto lines = split_lines(csv);
  REQUIRE(lines.size() == 32);
  double prev = INFINITY;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const double rate = std::stod(split_csv(lines[i])[2]);
    CHECK(rate <= prev);
    prev = rate;
  }
  const auto single = run_cli({"scan", "--config", cfg, "--loss-min", "0", "--loss-max", "30", "--steps", "31"});
  CHECK(single.out == csv);
}

TEST_CASE("simulate is reproducible and records seeds") {
  TempDir dir;
  auto config = RunConfig{};
  config.session.total_pulses = 200'000'000;
  const auto cfg = dir.write("run.ini", qkd::serialize_config(config));
  const auto a = run_cli({"simulate", "--config", cfg, "--seed", "42", "--reps", "5"});
  const auto b = run_cli({"simulate", "--config", cfg, "--seed", "42", "--reps", "5", "--threads", "3"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto lines = split_lines(a.out);
  REQUIRE(lines.size() == 5);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = nlohmann::json::parse(lines[i]);
    CHECK(j["seed"].get<std::uint64_t>() == 42 + i);
    CHECK(j["tallies"].contains("n_mu_z"));
    CHECK(j["report"].contains("breakdown"));
  }
  // A single line is reproduced by its recorded seed.
  const auto one = run_cli({"simulate", "--config", cfg, "--seed", "44", "--reps", "1"});
  CHECK(split_lines(one.out)[0] == lines[2]);
}

TEST_CASE("simulate tallies agree with the expected-value model") {
  TempDir dir;
  auto config = RunConfig{};
  config.session.total_pulses = 200'000'000;
  const auto cfg = dir.write("run.ini", qkd::serialize_config(config));
  const auto r = run_cli({"simulate", "--config", cfg, "--seed", "7", "--reps", "100", "--threads", "4"});
  REQUIRE(r.code == 0);
  const auto expected = qkd::run_session(config.channel, config.protocol, config.session).tallies;

  const char* keys[] = {"n_mu_z", "n_nu_z", "n_omega_z", "n_mu_x", "n_nu_x", "n_omega_x", "m_omega_x"};
  const std::uint64_t want[] = {expected.count(qkd::Intensity::mu, qkd::Basis::Z),
                                expected.count(qkd::Intensity::nu, qkd::Basis::Z),
                                expected.count(qkd::Intensity::omega, qkd::Basis::Z),
                                expected.count(qkd::Intensity::mu, qkd::Basis::X),
                                expected.count(qkd::Intensity::nu, qkd::Basis::X),
                                expected.count(qkd::Intensity::omega, qkd::Basis::X),
                                expected.m_omega_x};
  const auto lines = split_lines(r.out);
  REQUIRE(lines.size() == 100);
  for (std::size_t k = 0; k < 7; ++k) {
    double mean = 0.0;
    for (const auto& line : lines) mean += nlohmann::json::parse(line)["tallies"][keys[k]].get<double>() / 100.0;
    const double e = static_cast<double>(want[k]);
    const double sigma_mean = std::sqrt(e) / 10.0;
    CHECK_MESSAGE(std::abs(mean - e) <= 5.0 * sigma_mean + 0.5, keys[k]);
  }
}

TEST_CASE("disjoint seed lists give uncorrelated tallies") {
  TempDir dir;
  auto config = RunConfig{};
  config.session.total_pulses = 100'000'000;
  const auto cfg = dir.write("run.ini", qkd::serialize_config(config));
  const int reps = 400;
  const auto a = split_lines(run_cli({"simulate", "--config", cfg, "--seed", "1000", "--reps", "400"}).out);
  const auto b = split_lines(run_cli({"simulate", "--config", cfg, "--seed", "5000", "--reps", "400"}).out);
  REQUIRE(a.size() == static_cast<std::size_t>(reps));
  REQUIRE(b.size() == static_cast<std::size_t>(reps));
  for (const char* key : {"n_mu_z", "n_omega_x", "m_omega_x"}) {
    std::vector<double> x, y;
    for (int i = 0; i < reps; ++i) {
      x.push_back(nlohmann::json::parse(a[i])["tallies"][key].get<double>());
      y.push_back(nlohmann::json::parse(b[i])["tallies"][key].get<double>());
    }
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / reps;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / reps;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < reps; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double corr = sxy / std::sqrt(sxx * syy);
    // |r| sqrt(n) is approximately standard normal; 3.29 is the two-sided p = 0.001 point.
    CHECK_MESSAGE(std::abs(corr) * std::sqrt(reps) < 3.29, key);
  }
}

TEST_CASE("optimize with budget one echoes the start") {
  TempDir dir;
  const auto cfg = default_config(dir);
  const auto r = run_cli({"optimize", "--config", cfg, "--budget", "1", "--seed", "3"});
  REQUIRE(r.code == 0);
  CHECK(field(r.out, "evaluations") == "1");
  CHECK(field(r.out, "mu") == "0.35");
  CHECK(field(r.out, "q_z") == "0.7");
  CHECK(field(r.out, "best_rate_per_pulse") == field(r.out, "input_rate_per_pulse"));
}

TEST_CASE("optimize write-back reloads and reproduces the reported rate") {
  TempDir dir;
  auto config = RunConfig{};
  config.session.total_pulses = 200'000'000;
  const auto cfg = dir.write("run.ini", qkd::serialize_config(config));
  const auto r = run_cli({"optimize", "--config", cfg, "--budget", "300", "--seed", "3", "--write-back"});
  REQUIRE(r.code == 0);
  CHECK(std::stod(field(r.out, "best_rate_per_pulse")) >= std::stod(field(r.out, "input_rate_per_pulse")));

  const RunConfig reloaded = qkd::load_config(cfg);
  CHECK(reloaded.channel == config.channel);
  CHECK_FALSE(reloaded.protocol == config.protocol);
  const auto again = run_cli({"keyrate", "--config", cfg});
  CHECK(field(again.out, "rate_per_pulse") == field(r.out, "best_rate_per_pulse"));
}
