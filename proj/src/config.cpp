#include "qkd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace qkd {
namespace {

namespace pt = boost::property_tree;

using FieldRef = std::variant<double*, std::uint64_t*, bool*, SimulationMode*>;

struct Field {
  std::string section;
  std::string key;
  FieldRef target;
};

std::vector<Field> config_fields(RunConfig& c) {
  auto& ch = c.channel;
  auto& p = c.protocol;
  auto& s = c.security;
  auto& se = c.session;
  return {
      {"protocol", "mu", &p.mu},
      {"protocol", "nu", &p.nu},
      {"protocol", "omega", &p.omega},
      {"protocol", "p_mu", &p.p_mu},
      {"protocol", "p_nu", &p.p_nu},
      {"protocol", "p_omega", &p.p_omega},
      {"protocol", "p_0", &p.p_0},
      {"protocol", "q_z", &p.q_z},
      {"security", "eps_sec", &s.eps_sec},
      {"security", "eps_cor", &s.eps_cor},
      {"security", "phi_tol", &s.phi_tol},
      {"channel", "loss_db", &ch.loss_db},
      {"channel", "det_eff_z", &ch.det_eff[0]},
      {"channel", "det_eff_x", &ch.det_eff[1]},
      {"channel", "extra_loss_db_z", &ch.extra_loss_db[0]},
      {"channel", "extra_loss_db_x", &ch.extra_loss_db[1]},
      {"channel", "dark_cps", &ch.dark_cps},
      {"channel", "misalignment_z", &ch.misalignment[0]},
      {"channel", "misalignment_x", &ch.misalignment[1]},
      {"channel", "dead_time_s_z", &ch.dead_time_s[0]},
      {"channel", "dead_time_s_x", &ch.dead_time_s[1]},
      {"channel", "clock_hz", &ch.clock_hz},
      {"channel", "gate_fraction", &ch.gate_fraction},
      {"channel", "sync_blanking", &ch.sync_blanking},
      {"channel", "blanking_fraction", &ch.blanking_fraction},
      {"session", "pulses", &se.total_pulses},
      {"session", "seed", &se.rng_seed},
      {"session", "mode", &se.mode},
      {"session", "f_ec", &se.f_ec},
  };
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_real(const std::string& path, std::string_view raw) {
  const std::string text = trim(raw);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty() || !std::isfinite(value)) {
    throw ConfigError(path + ": expected a finite number, got '" + text + "'");
  }
  return value;
}

std::uint64_t parse_count(const std::string& path, std::string_view raw) {
  const std::string text = trim(raw);
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec == std::errc() && ptr == end && !text.empty()) return value;
  // Scientific notation is accepted when it denotes an exact integer.
  const double real = parse_real(path, text);
  if (real < 0.0 || real != std::floor(real) || real >= 1.8446744073709552e19) {
    throw ConfigError(path + ": expected a nonnegative integer, got '" + text + "'");
  }
  return static_cast<std::uint64_t>(real);
}

bool parse_flag(const std::string& path, std::string_view raw) {
  const std::string text = trim(raw);
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError(path + ": expected true or false, got '" + text + "'");
}

SimulationMode parse_mode(const std::string& path, std::string_view raw) {
  const std::string text = trim(raw);
  if (text == "expected") return SimulationMode::expected;
  if (text == "stochastic") return SimulationMode::stochastic;
  throw ConfigError(path + ": expected 'expected' or 'stochastic', got '" + text + "'");
}

pt::ptree read_ini(std::string_view text, const char* what) {
  std::istringstream in{std::string(text)};
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string(what) + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  return tree;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TallyField {
  const char* key;
  Intensity k;
  Basis b;
};

constexpr std::array<TallyField, 8> kTallyFields{{
    {"n_mu_z", Intensity::mu, Basis::Z},
    {"n_nu_z", Intensity::nu, Basis::Z},
    {"n_omega_z", Intensity::omega, Basis::Z},
    {"n_0_z", Intensity::vacuum, Basis::Z},
    {"n_mu_x", Intensity::mu, Basis::X},
    {"n_nu_x", Intensity::nu, Basis::X},
    {"n_omega_x", Intensity::omega, Basis::X},
    {"n_0_x", Intensity::vacuum, Basis::X},
}};

}  // namespace

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

void RunConfig::validate() const {
  protocol.validate();
  security.validate();
  channel.validate();
  session.validate();
}

RunConfig parse_config(std::string_view text) {
  const pt::ptree tree = read_ini(text, "config");
  RunConfig config;
  auto fields = config_fields(config);

  std::map<std::string, std::map<std::string, Field*>> index;
  for (auto& f : fields) index[f.section][f.key] = &f;

  bool has_p0 = false;
  bool has_split = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' must belong to a section");
    }
    const auto sec = index.find(section);
    if (sec == index.end()) throw ConfigError("config: unknown section '" + section + "'");
    for (const auto& [key, node] : body) {
      const std::string path = section + "." + key;
      const auto it = sec->second.find(key);
      if (it == sec->second.end()) throw ConfigError("config: unknown key '" + path + "'");
      const std::string value = node.get_value<std::string>();
      std::visit(
          [&](auto* target) {
            using T = std::remove_pointer_t<decltype(target)>;
            if constexpr (std::is_same_v<T, double>) {
              *target = parse_real(path, value);
            } else if constexpr (std::is_same_v<T, std::uint64_t>) {
              *target = parse_count(path, value);
            } else if constexpr (std::is_same_v<T, bool>) {
              *target = parse_flag(path, value);
            } else {
              *target = parse_mode(path, value);
            }
          },
          it->second->target);
      if (path == "protocol.p_0") has_p0 = true;
      if (path == "protocol.p_mu" || path == "protocol.p_nu" || path == "protocol.p_omega") {
        has_split = true;
      }
    }
  }
  if (has_split && !has_p0) {
    auto& p = config.protocol;
    p.p_0 = 1.0 - p.p_mu - p.p_nu - p.p_omega;
  }

  try {
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const RunConfig& config) {
  RunConfig copy = config;
  std::ostringstream out;
  std::string current;
  for (const auto& f : config_fields(copy)) {
    if (f.section != current) {
      if (!current.empty()) out << '\n';
      out << '[' << f.section << "]\n";
      current = f.section;
    }
    out << f.key << " = ";
    std::visit(
        [&](auto* target) {
          using T = std::remove_pointer_t<decltype(target)>;
          if constexpr (std::is_same_v<T, double>) {
            out << format_number(*target);
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            out << *target;
          } else if constexpr (std::is_same_v<T, bool>) {
            out << (*target ? "true" : "false");
          } else {
            out << (*target == SimulationMode::expected ? "expected" : "stochastic");
          }
        },
        f.target);
    out << '\n';
  }
  return out.str();
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << serialize_config(config);
}

ObservedTallies parse_tallies(std::string_view text) {
  const pt::ptree tree = read_ini(text, "tallies");
  ObservedTallies tallies;
  std::set<std::string> seen;
  for (const auto& [key, node] : tree) {
    if (!node.empty()) throw ConfigError("tallies: sections are not allowed ('" + key + "')");
    const std::string path = "tallies." + key;
    const std::string value = node.get_value<std::string>();
    bool known = false;
    for (const auto& f : kTallyFields) {
      if (key == f.key) {
        tallies.count(f.k, f.b) = parse_count(path, value);
        known = true;
      }
    }
    if (key == "m_omega_x") {
      tallies.m_omega_x = parse_count(path, value);
      known = true;
    } else if (key == "lambda_ec") {
      tallies.lambda_ec = parse_real(path, value);
      known = true;
    }
    if (!known) throw ConfigError("tallies: unknown key '" + key + "'");
    seen.insert(key);
  }
  if (seen.size() != kTallyFields.size() + 2) {
    for (const auto& f : kTallyFields) {
      if (!seen.contains(f.key)) throw ConfigError(std::string("tallies: missing key '") + f.key + "'");
    }
    if (!seen.contains("m_omega_x")) throw ConfigError("tallies: missing key 'm_omega_x'");
    throw ConfigError("tallies: missing key 'lambda_ec'");
  }
  try {
    tallies.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return tallies;
}

ObservedTallies load_tallies(const std::filesystem::path& path) {
  try {
    return parse_tallies(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_tallies(const ObservedTallies& tallies) {
  std::ostringstream out;
  for (const auto& f : kTallyFields) out << f.key << " = " << tallies.count(f.k, f.b) << '\n';
  out << "m_omega_x = " << tallies.m_omega_x << '\n';
  out << "lambda_ec = " << format_number(tallies.lambda_ec) << '\n';
  return out.str();
}

}  // namespace qkd
