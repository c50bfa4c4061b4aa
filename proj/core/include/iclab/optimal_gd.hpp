#pragma once

#include "iclab/common.hpp"
#include "iclab/data_model.hpp"

#include <cstdint>
#include <vector>

namespace iclab::opt {

inline const double kSqrt2OverPi = 0.79788456080286535588;

/// Mean with its standard error. Divergent estimates have mean = +inf.
struct RiskEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::int64_t trials = 0;

  bool diverged() const;
};

std::vector<double> logspace(double lo, double hi, int points);
std::vector<double> linspace(double lo, double hi, int points);

/// 25 log-spaced rates over [1e-4, 1].
std::vector<double> default_alphas();
/// 17 evenly spaced scales over [0, 1.6].
std::vector<double> default_cs();

struct GridSpec {
  std::vector<double> alphas = default_alphas();
  std::vector<double> cs = default_cs();
  int d = 20;
  int n = 50;
  int L = 1;
  std::int64_t trials = 10000;
  std::uint64_t seed = 0;
  data::PriorConfig prior;
  int workers = 1;

  void validate() const;
};

struct GridCell {
  double alpha = 0.0;
  double c = 0.0;
  RiskEstimate risk;
};

struct GridResult {
  int L = 0;
  std::vector<GridCell> table;  // alpha-major, then c
  double alpha_opt = 0.0;
  double c_opt = 0.0;
  RiskEstimate risk_opt;
};

/// One Monte-Carlo draw: a task, a clean prompt and its query label.
struct RiskTrial {
  data::TaskInstance task;
  data::LabeledPrompt prompt;
};

/// Trial `index` of a risk estimate. Depends only on (prior, n, seed, index),
/// so every (alpha, c, L) evaluated with the same seed sees the same draws.
RiskTrial draw_risk_trial(const data::PriorConfig& prior, int n, std::uint64_t seed,
                          std::int64_t index);

/// Risk of L-step GD from w0 = c * beta* with constant rate alpha.
RiskEstimate estimate_risk(double alpha, double c, int n, int L, const data::PriorConfig& prior,
                           std::int64_t trials, std::uint64_t seed, int workers = 1);

/// Grid results for every depth 1..spec.L from a single pass over the trials.
std::vector<GridResult> grid_search_depths(const GridSpec& spec);

/// Grid result at depth spec.L. Ties go to the smaller alpha, then smaller c.
GridResult grid_search(const GridSpec& spec);

struct ScalingRow {
  int d = 0;
  int n = 0;
  int L = 0;
  double alpha_opt = 0.0;
  double c_opt = 0.0;
  double alpha_times_nL = 0.0;
};

struct ScalingSpec {
  std::vector<int> n_list;
  std::vector<int> L_list;
  std::vector<int> d_list;
  data::PriorSpec prior;
  std::int64_t trials = 10000;
  std::uint64_t seed = 0;
  std::vector<double> alphas = default_alphas();
  std::vector<double> cs = default_cs();
  int workers = 1;
};

/// Seed used for the (d, n) cell of a scaling study or figure sweep.
std::uint64_t cell_seed(std::uint64_t seed, int d, int n);

std::vector<ScalingRow> scaling_study(const ScalingSpec& spec);

struct InitScanCell {
  double c1 = 0.0;
  double c2 = 0.0;
  RiskEstimate risk;
};

struct InitScanResult {
  std::vector<InitScanCell> table;  // c1-major, then c2
  double c1_opt = 0.0;
  double c2_opt = 0.0;
};

/// Risk of GD from w0 = c1 * beta* + c2 * v_perp over a grid of (c1, c2).
InitScanResult init_direction_scan(const std::vector<double>& c1_grid,
                                   const std::vector<double>& c2_grid, const Vec& v_perp, int n,
                                   int L, double alpha, const data::PriorConfig& prior,
                                   std::int64_t trials, std::uint64_t seed, int workers = 1);

struct MonteCarloCheck {
  double estimate = 0.0;
  double std_err = 0.0;
  double expected = 0.0;
  std::int64_t trials = 0;

  /// |estimate - expected| in units of std_err.
  double z_score() const;
};

/// E[<w, x> sign<w1, x>] with x ~ N(0, I); expected sqrt(2/pi) <w, w1>.
MonteCarloCheck check_sign_expectation(const Vec& w, const Vec& w1, std::int64_t trials,
                                       std::uint64_t seed);

/// E[(<w, x> - sign<w*, x>)^2] for fixed w and w*.
MonteCarloCheck fixed_predictor_risk(const Vec& w, const Vec& w_star, std::int64_t trials,
                                     std::uint64_t seed);

/// ||w - sqrt(2/pi) w*||^2 + 1 - 2/pi.
double fixed_predictor_risk_analytic(const Vec& w, const Vec& w_star);

}  // namespace iclab::opt
