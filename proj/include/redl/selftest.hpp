#pragma once

// Fast deterministic oracle and invariant suite behind `redl selftest`.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "redl/csv.hpp"
#include "redl/sl_core.hpp"

namespace redl {

struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;

  bool within(double exact, double num_se = 3.0) const;
};

/// E_{p ~ Dir(alpha)} ||y - p||^2.
McEstimate mc_squared_error(const DirichletParams& d, std::span<const double> y, std::size_t n,
                            std::uint64_t seed);
/// E[H(p)].
McEstimate mc_expected_entropy(const DirichletParams& d, std::size_t n, std::uint64_t seed);
/// -E[ln Dir(p; alpha)].
McEstimate mc_differential_entropy(const DirichletParams& d, std::size_t n, std::uint64_t seed);
/// H(E[p]) - E[H(p)]; the standard error is that of the E[H(p)] term.
McEstimate mc_mutual_information(const DirichletParams& d, std::size_t n, std::uint64_t seed);
/// E[ln Dir(p; alpha) - ln Dir(p; lambda 1)].
McEstimate mc_kl_to_scaled_uniform(const DirichletParams& d, double lambda, std::size_t n,
                                   std::uint64_t seed);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-4);

struct CheckResult {
  std::string group;
  std::string name;
  bool passed = false;
  double observed = 0.0;   ///< worst error or the measured value
  double tolerance = 0.0;
  std::string detail;
};

struct SelftestOptions {
  std::uint64_t seed = 20240607;
  std::size_t mc_samples = 200000;
};

std::vector<CheckResult> run_selftest(const SelftestOptions& options = {});

/// Columns group,name,passed,observed,tolerance,detail.
CsvTable selftest_table(const std::vector<CheckResult>& results);

}  // namespace redl
