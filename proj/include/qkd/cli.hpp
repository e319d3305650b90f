#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/finite_key.hpp"

namespace qkd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitAbort = 2;

inline constexpr const char* kScanHeader = "loss_db,ell,rate_per_second,phi_upper,s1_lower";

/// `key = value` listing of a report and its full breakdown.
void render_report(const KeyRateReport& report, std::ostream& out);

/// One JSON-lines record of a stochastic session.
std::string simulate_record(std::uint64_t seed, const ObservedTallies& tallies,
                            const KeyRateReport& report);

/// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qkd::cli
