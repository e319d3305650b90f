#pragma once

// INI-style run configuration and tallies files.
//
//   [protocol]  mu nu omega p_mu p_nu p_omega p_0 q_z
//   [security]  eps_sec eps_cor phi_tol
//   [channel]   loss_db det_eff_z det_eff_x extra_loss_db_z extra_loss_db_x dark_cps
//               misalignment_z misalignment_x dead_time_s_z dead_time_s_x clock_hz
//               gate_fraction sync_blanking blanking_fraction
//   [session]   pulses seed mode f_ec
//
// Every key is optional and defaults to the reference experiment; unknown
// sections and keys are rejected. A tallies file is a flat list of
// n_mu_z n_nu_z n_omega_z n_0_z n_mu_x n_nu_x n_omega_x n_0_x m_omega_x lambda_ec.

#include <filesystem>
#include <string>
#include <string_view>

#include "qkd/channel_sim.hpp"
#include "qkd/finite_key.hpp"

namespace qkd {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct RunConfig {
  ChannelModel channel;
  ProtocolParams protocol;
  SecuritySettings security;
  SessionPlan session;

  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& config);
void save_config(const RunConfig& config, const std::filesystem::path& path);

ObservedTallies parse_tallies(std::string_view text);
ObservedTallies load_tallies(const std::filesystem::path& path);
std::string serialize_tallies(const ObservedTallies& tallies);

/// Shortest round-trip decimal form, independent of the C locale.
std::string format_number(double value);

}  // namespace qkd
