#include "iclab/robustness_eval.hpp"

#include "iclab/gd_engine.hpp"
#include "iclab/parallel.hpp"
#include "iclab/rng.hpp"
#include "iclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iclab::robust {

namespace {

constexpr std::size_t kTrialBlock = 250;

template <class PerTrial>
std::vector<RunningStats> run_trials(std::int64_t trials, std::size_t slots, int workers,
                                     PerTrial&& per_trial) {
  const auto count = static_cast<std::size_t>(trials);
  const std::size_t blocks = block_count(count, kTrialBlock);
  std::vector<std::vector<RunningStats>> partial(blocks, std::vector<RunningStats>(slots));
  parallel_blocks(count, kTrialBlock, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) per_trial(static_cast<std::int64_t>(t), partial[b]);
  });
  std::vector<RunningStats> total(slots);
  for (const auto& block : partial)
    for (std::size_t i = 0; i < slots; ++i) total[i].merge(block[i]);
  return total;
}

void check_trials(std::int64_t trials) {
  if (trials < 2) fail(ErrorKind::config, "Monte-Carlo estimates need at least 2 trials");
}

HijackGdSpec with_N(HijackGdSpec spec, int N) {
  spec.N = N;
  return spec;
}

double misclassified(double y, double margin) { return y * margin > 0.0 ? 0.0 : 1.0; }

}  // namespace

void HijackGdSpec::validate() const {
  if (N < 0) fail(ErrorKind::config, "hijack count must be non-negative");
  if (L < 0) fail(ErrorKind::config, "hijack GD depth must be non-negative");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail(ErrorKind::config, "alpha must be >= 0");
  if (!std::isfinite(c)) fail(ErrorKind::config, "c must be finite");
}

double theta_scaled_alpha(int n, int L) {
  if (n < 1 || L < 1) fail(ErrorKind::config, "theta-scaled alpha needs n >= 1 and L >= 1");
  return 0.5 / (static_cast<double>(n) * L);
}

MarginBreakdown hijack_margin_closed_form(const data::HijackSample& sample,
                                          const data::TaskInstance& task, const HijackGdSpec& spec) {
  spec.validate();
  const Vec& beta = task.prior.beta_star;
  require_dims(sample.x_perp.size() == beta.size(), "hijack sample dimension mismatch");
  const double norm2 = sample.x_perp.squaredNorm();
  if (!(norm2 > 0.0)) fail(ErrorKind::degenerate, "x_perp is zero; hijack direction undefined");

  const double proj = sample.x_perp.dot(beta);
  MarginBreakdown out;
  out.decay_factor = std::pow(1.0 - spec.alpha * spec.N * norm2, spec.L);
  out.a_L = (1.0 - out.decay_factor) * (sample.y_hc - spec.c * proj) / norm2;
  out.margin = spec.c * sample.sigma * task.w_star.dot(beta) + sample.y_hc +
               out.decay_factor * (spec.c * proj - sample.y_hc);
  return out;
}

double hijack_margin_explicit(const data::HijackSample& sample, const data::TaskInstance& task,
                              const HijackGdSpec& spec) {
  spec.validate();
  const auto cfg = gd::GdConfig::constant(spec.c * task.prior.beta_star, spec.alpha, spec.L);
  const auto ctx = gd::GdContext::repeated({sample.x_hc, sample.y_hc}, spec.N);
  return gd::gd_run(cfg, ctx, sample.x_query).margins.back();
}

HijackTrial draw_hijack_trial(const data::PriorConfig& prior, const data::SigmaDist& sigma,
                              std::uint64_t seed, std::int64_t index) {
  Rng rng = Rng::stream(seed, {tag("hijack"), static_cast<std::uint64_t>(index)});
  data::TaskInstance task = data::sample_task(prior, rng);
  data::HijackSample sample = data::sample_hijack(task, sigma, rng);
  return {std::move(task), std::move(sample)};
}

ErrorEstimate estimate_error(const HijackGdSpec& spec, const data::PriorConfig& prior,
                             const data::SigmaDist& sigma, std::int64_t trials, std::uint64_t seed,
                             int workers) {
  spec.validate();
  sigma.validate();
  check_trials(trials);
  const auto stats = run_trials(trials, 1, workers, [&](std::int64_t t, std::vector<RunningStats>& s) {
    const HijackTrial trial = draw_hijack_trial(prior, sigma, seed, t);
    const double m = hijack_margin_closed_form(trial.sample, trial.task, spec).margin;
    s[0].add(misclassified(trial.sample.y_query, m));
  });
  return {stats[0].mean(), stats[0].std_err(), stats[0].count()};
}

std::string to_string(CurveSource source) {
  switch (source) {
    case CurveSource::gd_explicit: return "gd_explicit";
    case CurveSource::gd_closed_form: return "gd_closed_form";
    case CurveSource::transformer_trained: return "transformer_trained";
    case CurveSource::transformer_constructed: return "transformer_constructed";
  }
  return "unknown";
}

CurveSource parse_curve_source(const std::string& text) {
  for (auto s : {CurveSource::gd_explicit, CurveSource::gd_closed_form,
                 CurveSource::transformer_trained, CurveSource::transformer_constructed})
    if (to_string(s) == text) return s;
  fail(ErrorKind::config, "unknown curve source \"" + text + "\"");
}

bool in_joint_regime(int N, int d, int n) {
  const double lower = n / std::pow(static_cast<double>(d), 1.5);
  return N >= lower && n >= static_cast<double>(N) * d;
}

RobustnessCurve robustness_curve(const CurveCell& cell, const std::vector<int>& N_list,
                                 std::int64_t trials, std::uint64_t seed, CurveSource source,
                                 const tf::TransformerParams* trained, int workers) {
  check_trials(trials);
  cell.prior.validate();
  cell.sigma.validate();
  require_dims(cell.prior.d == cell.d, "curve prior dimension does not match d");
  if (N_list.empty()) fail(ErrorKind::config, "curve needs at least one N");
  for (std::size_t i = 0; i < N_list.size(); ++i) {
    if (N_list[i] < 0) fail(ErrorKind::config, "hijack counts must be non-negative");
    if (i > 0 && N_list[i] <= N_list[i - 1])
      fail(ErrorKind::config, "hijack counts must be strictly increasing");
  }

  std::optional<tf::TransformerParams> model;
  if (source == CurveSource::transformer_trained) {
    if (trained == nullptr)
      fail(ErrorKind::io, "transformer_trained curve needs a trained checkpoint");
    require_dims(trained->dim() == cell.d, "trained model dimension does not match d");
    model = *trained;
  } else if (source == CurveSource::transformer_constructed) {
    const auto cfg = gd::GdConfig::constant(cell.c * cell.prior.beta_star, cell.alpha, cell.L);
    model = gd::construct_gd_transformer(cfg, cell.d, cell.n);
  }

  HijackGdSpec base{cell.c, cell.alpha, cell.L, 0, cell.d, cell.n};
  base.validate();
  const auto stats = run_trials(trials, N_list.size(), workers,
                                [&](std::int64_t t, std::vector<RunningStats>& s) {
    const HijackTrial trial = draw_hijack_trial(cell.prior, cell.sigma, seed, t);
    for (std::size_t i = 0; i < N_list.size(); ++i) {
      const int N = N_list[i];
      double m = 0.0;
      switch (source) {
        case CurveSource::gd_explicit:
          m = hijack_margin_explicit(trial.sample, trial.task, with_N(base, N));
          break;
        case CurveSource::gd_closed_form:
          m = hijack_margin_closed_form(trial.sample, trial.task, with_N(base, N)).margin;
          break;
        case CurveSource::transformer_trained:
        case CurveSource::transformer_constructed:
          m = tf::predict(*model, data::make_hijack_prompt(trial.sample, N).matrix());
          break;
      }
      s[i].add(1.0 - misclassified(trial.sample.y_query, m));
    }
  });

  RobustnessCurve curve{cell, source, seed, {}};
  for (std::size_t i = 0; i < N_list.size(); ++i)
    curve.points.push_back({N_list[i], stats[i].mean(), stats[i].std_err(), stats[i].count(),
                            in_joint_regime(N_list[i], cell.d, cell.n)});
  return curve;
}

SmallNGap small_N_gap(const HijackGdSpec& spec, const data::PriorConfig& prior,
                      const data::SigmaDist& sigma, std::int64_t trials, std::uint64_t seed,
                      int workers) {
  spec.validate();
  sigma.validate();
  check_trials(trials);
  SmallNGap out;
  out.N = spec.N;
  out.trials = trials;
  out.regime_bound = spec.n / (20.0 * std::pow(static_cast<double>(spec.d), 1.5));
  out.in_regime = spec.N <= std::max(1.0, std::ceil(out.regime_bound));
  if (spec.N == 0) return out;

  const auto stats = run_trials(trials, 1, workers, [&](std::int64_t t, std::vector<RunningStats>& s) {
    const HijackTrial trial = draw_hijack_trial(prior, sigma, seed, t);
    const double y = trial.sample.y_query;
    const double hijacked = hijack_margin_closed_form(trial.sample, trial.task, spec).margin;
    const double zero_shot = hijack_margin_closed_form(trial.sample, trial.task, with_N(spec, 0)).margin;
    s[0].add(misclassified(y, hijacked) - misclassified(y, zero_shot));
  });
  out.gap = stats[0].mean();
  out.std_err = stats[0].std_err();
  return out;
}

namespace {

struct LinearFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double rms = std::numeric_limits<double>::infinity();
};

// Best (c1, c2) for error ~ c1 - c2 f at fixed f.
LinearFit fit_linear(const std::vector<double>& f, const std::vector<double>& e) {
  const auto m = static_cast<double>(f.size());
  double fm = 0.0, em = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fm += f[i];
    em += e[i];
  }
  fm /= m;
  em /= m;
  double sff = 0.0, sfe = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sff += (f[i] - fm) * (f[i] - fm);
    sfe += (f[i] - fm) * (e[i] - em);
  }
  LinearFit out;
  const double slope = sff > 1e-300 ? sfe / sff : 0.0;
  out.c2 = -slope;
  out.c1 = em + out.c2 * fm;
  double ss = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = out.c1 - out.c2 * f[i] - e[i];
    ss += r * r;
  }
  out.rms = std::sqrt(ss / m);
  if (!std::isfinite(out.rms)) out.rms = std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace

BoundFit bound_shape_fit(const std::vector<int>& N, const std::vector<double>& error, int d, int n,
                         int L) {
  if (N.size() != error.size()) fail(ErrorKind::dimension, "fit inputs differ in length");
  BoundFit out;
  if (N.size() < 4 || d < 1 || n < 1 || L < 1) {
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }
  const double scale = static_cast<double>(d) / (static_cast<double>(n) * L);
  std::vector<double> f(N.size());
  const auto profile = [&](double log_kappa) {
    const double kappa = std::exp(log_kappa);
    for (std::size_t i = 0; i < N.size(); ++i) f[i] = std::pow(1.0 - kappa * N[i] * scale, L);
    return fit_linear(f, error);
  };

  // Coarse scan in log kappa, then golden-section refinement around the best point.
  const double lo = std::log(1e-6), hi = std::log(1e3);
  const int grid = 900;
  const double step = (hi - lo) / grid;
  int best = 0;
  double best_rms = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double r = profile(lo + i * step).rms;
    if (r < best_rms) {
      best_rms = r;
      best = i;
    }
  }
  double a = lo + std::max(0, best - 1) * step;
  double b = lo + std::min(grid, best + 1) * step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100; ++it) {
    const double x1 = b - g * (b - a);
    const double x2 = a + g * (b - a);
    if (profile(x1).rms <= profile(x2).rms)
      b = x2;
    else
      a = x1;
  }
  double log_kappa = 0.5 * (a + b);
  LinearFit fit = profile(log_kappa);
  if (best_rms < fit.rms) {
    log_kappa = lo + best * step;
    fit = profile(log_kappa);
  }
  out.c1 = fit.c1;
  out.c2 = fit.c2;
  out.kappa = std::exp(log_kappa);
  out.residual = fit.rms;
  return out;
}

BoundFit bound_shape_fit(const RobustnessCurve& curve) {
  std::vector<int> N;
  std::vector<double> err;
  for (const auto& p : curve.points) {
    N.push_back(p.N);
    err.push_back(1.0 - p.accuracy);
  }
  return bound_shape_fit(N, err, curve.cell.d, curve.cell.n, curve.cell.L);
}

}  // namespace iclab::robust
