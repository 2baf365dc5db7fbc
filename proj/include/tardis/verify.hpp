#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tardis/oracle.hpp"

namespace tardis {

struct VerifyOptions {
  std::uint64_t seed = 1;
  /// Rank rule the oracle bills with. Replacing it simulates a tampered
  /// percentile definition.
  oracle::RankRule oracle_rank = oracle::default_rank;
};

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double deviation = 0.0;
  double tolerance = 0.0;
};

struct VerifyReport {
  std::uint64_t seed = 0;
  std::vector<VerifyCheck> checks;

  bool all_passed() const;
};

/// Exact-enumeration property suite on small random instances drawn from
/// the seed: Shapley efficiency, agreement with the brute-force oracle, the
/// gradient sum property, the per-user gradient identity and Lyapunov
/// descent of the continuous dynamics.
VerifyReport run_verify(const VerifyOptions& options = {});

/// One `PASS|FAIL name deviation=... tolerance=...` line per check.
void write_verify_report(std::ostream& out, const VerifyReport& report);

}  // namespace tardis
