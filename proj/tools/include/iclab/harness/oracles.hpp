#pragma once

#include "iclab/linear_transformer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace iclab::harness {

struct OracleResult {
  std::string name;
  double measured = 0.0;   // worst deviation, or worst z-score for Monte-Carlo checks
  double threshold = 0.0;
  bool passed = false;
};

/// Allowed |estimate - expected| in standard errors: 3 at 1e4 trials and
/// above, widening by 0.5 per decade below that.
double std_err_multiplier(std::int64_t trials);

struct EquivalenceInstance {
  int index = 0;
  int d = 0;
  int n = 0;
  int L = 0;
  bool matrix_rates = false;
  double max_deviation = 0.0;  // max over layers of |Z_l(d,n) + <w_l, x_q>| / (1 + |<w_l, x_q>|)
};

/// Random GD configs (alternating scalar and full-matrix rates) compared
/// layer by layer against the constructed transformer.
std::vector<EquivalenceInstance> equivalence_sweep(int instances, int max_d, int max_n, int max_L,
                                                   std::uint64_t seed, tf::Recurrence rec);

OracleResult equivalence_oracle(int instances, int max_d, int max_n, int max_L, std::uint64_t seed,
                                tf::Recurrence rec);
OracleResult closed_form_oracle(int instances, std::uint64_t seed);
OracleResult permutation_oracle(int instances, std::uint64_t seed);
OracleResult sign_expectation_oracle(int pairs, std::int64_t trials, std::uint64_t seed);
OracleResult risk_decomposition_oracle(int predictors, std::int64_t trials, std::uint64_t seed);
OracleResult hijack_identity_oracle(int instances, std::uint64_t seed);

std::vector<OracleResult> run_all_oracles(std::int64_t trials, int instances, std::uint64_t seed,
                                          tf::Recurrence rec);

}  // namespace iclab::harness
