#pragma once

#include "iclab/common.hpp"
#include "iclab/data_model.hpp"
#include "iclab/linear_transformer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace iclab::robust {

/// Test-time GD on N copies of the hijack example, from w0 = c * beta*.
struct HijackGdSpec {
  double c = 0.0;
  double alpha = 0.0;
  int L = 1;
  int N = 0;
  int d = 20;
  int n = 40;

  void validate() const;
};

/// Constant rate scaled like 1/(nL), used when no grid result is at hand.
double theta_scaled_alpha(int n, int L);

struct MarginBreakdown {
  double a_L = 0.0;           // coefficient of x_perp in the final iterate
  double margin = 0.0;        // <w~^(L), x_query>
  double decay_factor = 1.0;  // (1 - alpha N ||x_perp||^2)^L
};

/// Closed-form final iterate w~ = c beta* + a(L) x_perp. Throws when x_perp = 0.
MarginBreakdown hijack_margin_closed_form(const data::HijackSample& sample,
                                          const data::TaskInstance& task, const HijackGdSpec& spec);

/// Margin of explicit GD on the N-times repeated hijack example.
double hijack_margin_explicit(const data::HijackSample& sample, const data::TaskInstance& task,
                              const HijackGdSpec& spec);

struct ErrorEstimate {
  double error = 0.0;
  double std_err = 0.0;
  std::int64_t trials = 0;
};

/// One hijack trial: the task and hijack sample drawn from stream (seed, index).
/// Independent of N, so curves share draws across hijack counts.
struct HijackTrial {
  data::TaskInstance task;
  data::HijackSample sample;
};

HijackTrial draw_hijack_trial(const data::PriorConfig& prior, const data::SigmaDist& sigma,
                              std::uint64_t seed, std::int64_t index);

/// P(y_query * margin <= 0) under the closed-form margin.
ErrorEstimate estimate_error(const HijackGdSpec& spec, const data::PriorConfig& prior,
                             const data::SigmaDist& sigma, std::int64_t trials, std::uint64_t seed,
                             int workers = 1);

enum class CurveSource { gd_explicit, gd_closed_form, transformer_trained, transformer_constructed };

std::string to_string(CurveSource source);
CurveSource parse_curve_source(const std::string& text);

struct CurveCell {
  int d = 20;
  int n = 40;
  int L = 1;
  double alpha = 0.0;
  double c = 0.0;
  data::PriorConfig prior;
  data::SigmaDist sigma;
};

struct CurvePoint {
  int N = 0;
  double accuracy = 0.0;
  double std_err = 0.0;
  std::int64_t trials = 0;
  bool in_regime = false;  // N >= n / d^1.5 and n >= N d
};

struct RobustnessCurve {
  CurveCell cell;
  CurveSource source = CurveSource::gd_explicit;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;
};

/// Accuracy at each N on matched draws. `trained` is required for the
/// transformer_trained source and ignored otherwise.
RobustnessCurve robustness_curve(const CurveCell& cell, const std::vector<int>& N_list,
                                 std::int64_t trials, std::uint64_t seed, CurveSource source,
                                 const tf::TransformerParams* trained = nullptr, int workers = 1);

bool in_joint_regime(int N, int d, int n);

struct SmallNGap {
  double gap = 0.0;  // error(N) - error(0) on paired draws
  double std_err = 0.0;
  double regime_bound = 0.0;  // n / (20 d^1.5)
  bool in_regime = false;     // N <= max(1, ceil(regime_bound))
  int N = 0;
  std::int64_t trials = 0;
};

SmallNGap small_N_gap(const HijackGdSpec& spec, const data::PriorConfig& prior,
                      const data::SigmaDist& sigma, std::int64_t trials, std::uint64_t seed,
                      int workers = 1);

struct BoundFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double kappa = 0.0;
  double residual = 0.0;  // root-mean-square error of the fit
};

/// Least-squares fit of error(N) ~ c1 - c2 (1 - kappa N d / (n L))^L.
BoundFit bound_shape_fit(const std::vector<int>& N, const std::vector<double>& error, int d, int n,
                         int L);
BoundFit bound_shape_fit(const RobustnessCurve& curve);

}  // namespace iclab::robust
