#include "iclab/optimal_gd.hpp"

#include "iclab/gd_engine.hpp"
#include "iclab/parallel.hpp"
#include "iclab/rng.hpp"
#include "iclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iclab::opt {

namespace {

constexpr std::size_t kTrialBlock = 250;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-cell accumulator that remembers whether any trial blew up.
struct CellAcc {
  RunningStats stats;
  bool divergent = false;

  void add(double v) {
    if (std::isfinite(v))
      stats.add(v);
    else
      divergent = true;
  }
  void merge(const CellAcc& o) {
    stats.merge(o.stats);
    divergent = divergent || o.divergent;
  }
  RiskEstimate estimate() const {
    if (divergent || !std::isfinite(stats.mean())) return {kInf, kInf, stats.count()};
    return {stats.mean(), stats.std_err(), stats.count()};
  }
};

// Runs `per_trial(trial, acc)` over all trials in fixed blocks and merges
// the block accumulators in block order.
template <class PerTrial>
std::vector<CellAcc> run_trials(std::int64_t trials, std::size_t cells, int workers,
                                PerTrial&& per_trial) {
  const auto count = static_cast<std::size_t>(trials);
  const std::size_t blocks = block_count(count, kTrialBlock);
  std::vector<std::vector<CellAcc>> partial(blocks, std::vector<CellAcc>(cells));
  parallel_blocks(count, kTrialBlock, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) per_trial(static_cast<std::int64_t>(t), partial[b]);
  });
  std::vector<CellAcc> total(cells);
  for (const auto& block : partial)
    for (std::size_t i = 0; i < cells; ++i) total[i].merge(block[i]);
  return total;
}

void check_trials(std::int64_t trials) {
  if (trials < 2) fail(ErrorKind::config, "Monte-Carlo estimates need at least 2 trials");
}

}  // namespace

bool RiskEstimate::diverged() const { return !std::isfinite(mean); }

std::vector<double> logspace(double lo, double hi, int points) {
  if (points < 1 || !(lo > 0.0) || !(hi >= lo)) fail(ErrorKind::config, "invalid logspace range");
  if (points == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(points));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < points; ++i)
    out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (points - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> linspace(double lo, double hi, int points) {
  if (points < 1 || !(hi >= lo)) fail(ErrorKind::config, "invalid linspace range");
  if (points == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  out.back() = hi;
  return out;
}

std::vector<double> default_alphas() { return logspace(1e-4, 1.0, 25); }
std::vector<double> default_cs() { return linspace(0.0, 1.6, 17); }

void GridSpec::validate() const {
  if (alphas.empty() || cs.empty()) fail(ErrorKind::config, "grid axes must be non-empty");
  if (!std::is_sorted(alphas.begin(), alphas.end()) || !std::is_sorted(cs.begin(), cs.end()))
    fail(ErrorKind::config, "grid axes must be sorted ascending");
  if (d < 1 || n < 0 || L < 1) fail(ErrorKind::config, "grid needs d >= 1, n >= 0, L >= 1");
  check_trials(trials);
  prior.validate();
  require_dims(prior.d == d, "prior dimension does not match grid d");
}

RiskTrial draw_risk_trial(const data::PriorConfig& prior, int n, std::uint64_t seed,
                          std::int64_t index) {
  Rng rng = Rng::stream(seed, {tag("risk"), static_cast<std::uint64_t>(index)});
  data::TaskInstance task = data::sample_task(prior, rng);
  data::LabeledPrompt prompt = data::sample_train_prompt(task, n, rng);
  return {std::move(task), std::move(prompt)};
}

std::vector<GridResult> grid_search_depths(const GridSpec& spec) {
  spec.validate();
  const std::size_t A = spec.alphas.size();
  const std::size_t C = spec.cs.size();
  const auto Lmax = static_cast<std::size_t>(spec.L);
  const auto index = [&](std::size_t l, std::size_t a, std::size_t c) { return (l * A + a) * C + c; };

  // GD from c * beta* is affine in c: w_l = c * u_l + v_l, with u_l started
  // at beta* with b = 0 and v_l started at 0 with the full b.
  const auto acc = run_trials(spec.trials, Lmax * A * C, spec.workers,
                              [&](std::int64_t t, std::vector<CellAcc>& cells) {
    const RiskTrial trial = draw_risk_trial(spec.prior, spec.n, spec.seed, t);
    const gd::GdContext ctx = gd::GdContext::from_prompt(trial.prompt.prompt);
    const Vec xq = trial.prompt.prompt.query();
    const double y = trial.prompt.y_query;
    for (std::size_t a = 0; a < A; ++a) {
      const double alpha = spec.alphas[a];
      Vec u = spec.prior.beta_star;
      Vec v = Vec::Zero(spec.d);
      for (std::size_t l = 0; l < Lmax; ++l) {
        u -= alpha * (ctx.sigma_hat * u);
        v -= alpha * (ctx.sigma_hat * v - ctx.b);
        const double pu = u.dot(xq);
        const double pv = v.dot(xq);
        for (std::size_t c = 0; c < C; ++c) {
          const double e = spec.cs[c] * pu + pv - y;
          cells[index(l, a, c)].add(e * e);
        }
      }
    }
  });

  std::vector<GridResult> out(Lmax);
  for (std::size_t l = 0; l < Lmax; ++l) {
    GridResult& r = out[l];
    r.L = static_cast<int>(l + 1);
    r.table.reserve(A * C);
    bool found = false;
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t c = 0; c < C; ++c) {
        const RiskEstimate est = acc[index(l, a, c)].estimate();
        r.table.push_back({spec.alphas[a], spec.cs[c], est});
        if (!est.diverged() && (!found || est.mean < r.risk_opt.mean)) {
          found = true;
          r.alpha_opt = spec.alphas[a];
          r.c_opt = spec.cs[c];
          r.risk_opt = est;
        }
      }
    if (!found)
      fail(ErrorKind::numeric, "grid entirely divergent at L=" + std::to_string(l + 1));
  }
  return out;
}

GridResult grid_search(const GridSpec& spec) { return grid_search_depths(spec).back(); }

RiskEstimate estimate_risk(double alpha, double c, int n, int L, const data::PriorConfig& prior,
                           std::int64_t trials, std::uint64_t seed, int workers) {
  check_trials(trials);
  GridSpec spec;
  spec.alphas = {alpha};
  spec.cs = {c};
  spec.d = prior.d;
  spec.n = n;
  spec.L = L;
  spec.trials = trials;
  spec.seed = seed;
  spec.prior = prior;
  spec.workers = workers;
  spec.validate();
  // Same arithmetic as the grid kernel, so a grid cell and a point estimate
  // with the same seed agree bit for bit.
  const auto acc = run_trials(trials, 1, workers, [&](std::int64_t t, std::vector<CellAcc>& cells) {
    const RiskTrial trial = draw_risk_trial(prior, n, seed, t);
    const gd::GdContext ctx = gd::GdContext::from_prompt(trial.prompt.prompt);
    const Vec xq = trial.prompt.prompt.query();
    Vec u = prior.beta_star;
    Vec v = Vec::Zero(prior.d);
    for (int l = 0; l < L; ++l) {
      u -= alpha * (ctx.sigma_hat * u);
      v -= alpha * (ctx.sigma_hat * v - ctx.b);
    }
    const double e = c * u.dot(xq) + v.dot(xq) - trial.prompt.y_query;
    cells[0].add(e * e);
  });
  return acc[0].estimate();
}

std::uint64_t cell_seed(std::uint64_t seed, int d, int n) {
  return derive_seed(seed, {tag("cell"), static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(n)});
}

std::vector<ScalingRow> scaling_study(const ScalingSpec& spec) {
  if (spec.n_list.empty() || spec.L_list.empty() || spec.d_list.empty())
    fail(ErrorKind::config, "scaling study lists must be non-empty");
  const int Lmax = *std::max_element(spec.L_list.begin(), spec.L_list.end());
  std::vector<ScalingRow> rows;
  for (int d : spec.d_list)
    for (int n : spec.n_list) {
      GridSpec g;
      g.alphas = spec.alphas;
      g.cs = spec.cs;
      g.d = d;
      g.n = n;
      g.L = Lmax;
      g.trials = spec.trials;
      g.seed = cell_seed(spec.seed, d, n);
      g.prior = spec.prior.for_dim(d);
      g.workers = spec.workers;
      const auto depths = grid_search_depths(g);
      for (int L : spec.L_list) {
        if (L < 1) fail(ErrorKind::config, "scaling study depths must be positive");
        const GridResult& r = depths[static_cast<std::size_t>(L - 1)];
        rows.push_back({d, n, L, r.alpha_opt, r.c_opt, r.alpha_opt * n * L});
      }
    }
  return rows;
}

InitScanResult init_direction_scan(const std::vector<double>& c1_grid,
                                   const std::vector<double>& c2_grid, const Vec& v_perp, int n,
                                   int L, double alpha, const data::PriorConfig& prior,
                                   std::int64_t trials, std::uint64_t seed, int workers) {
  prior.validate();
  check_trials(trials);
  if (c1_grid.empty() || c2_grid.empty()) fail(ErrorKind::config, "scan grids must be non-empty");
  require_dims(v_perp.size() == prior.d, "v_perp dimension mismatch");
  if (std::abs(v_perp.norm() - 1.0) > 1e-9 || std::abs(v_perp.dot(prior.beta_star)) > 1e-9)
    fail(ErrorKind::config, "v_perp must be a unit vector orthogonal to beta*");
  if (L < 0) fail(ErrorKind::config, "scan depth must be non-negative");

  const std::size_t C1 = c1_grid.size();
  const std::size_t C2 = c2_grid.size();
  const auto acc = run_trials(trials, C1 * C2, workers, [&](std::int64_t t, std::vector<CellAcc>& cells) {
    const RiskTrial trial = draw_risk_trial(prior, n, seed, t);
    const gd::GdContext ctx = gd::GdContext::from_prompt(trial.prompt.prompt);
    const Vec xq = trial.prompt.prompt.query();
    Vec u1 = prior.beta_star;
    Vec u2 = v_perp;
    Vec v = Vec::Zero(prior.d);
    for (int l = 0; l < L; ++l) {
      u1 -= alpha * (ctx.sigma_hat * u1);
      u2 -= alpha * (ctx.sigma_hat * u2);
      v -= alpha * (ctx.sigma_hat * v - ctx.b);
    }
    const double p1 = u1.dot(xq);
    const double p2 = u2.dot(xq);
    const double pv = v.dot(xq) - trial.prompt.y_query;
    for (std::size_t i = 0; i < C1; ++i)
      for (std::size_t j = 0; j < C2; ++j) {
        const double e = c1_grid[i] * p1 + c2_grid[j] * p2 + pv;
        cells[i * C2 + j].add(e * e);
      }
  });

  InitScanResult out;
  double best = kInf;
  for (std::size_t i = 0; i < C1; ++i)
    for (std::size_t j = 0; j < C2; ++j) {
      const RiskEstimate est = acc[i * C2 + j].estimate();
      out.table.push_back({c1_grid[i], c2_grid[j], est});
      if (est.mean < best) {
        best = est.mean;
        out.c1_opt = c1_grid[i];
        out.c2_opt = c2_grid[j];
      }
    }
  return out;
}

double MonteCarloCheck::z_score() const {
  const double diff = std::abs(estimate - expected);
  if (diff == 0.0) return 0.0;
  return std_err > 0.0 ? diff / std_err : kInf;
}

MonteCarloCheck check_sign_expectation(const Vec& w, const Vec& w1, std::int64_t trials,
                                       std::uint64_t seed) {
  check_trials(trials);
  require_dims(w.size() == w1.size(), "sign expectation vectors differ in dimension");
  Rng rng = Rng::stream(seed, {tag("sign-expectation")});
  RunningStats s;
  for (std::int64_t t = 0; t < trials; ++t) {
    const Vec x = rng.normal_vector(w.size());
    const double proj = w1.dot(x);
    s.add(proj == 0.0 ? 0.0 : w.dot(x) * sign_label(proj));
  }
  return {s.mean(), s.std_err(), kSqrt2OverPi * w.dot(w1), s.count()};
}

MonteCarloCheck fixed_predictor_risk(const Vec& w, const Vec& w_star, std::int64_t trials,
                                     std::uint64_t seed) {
  check_trials(trials);
  require_dims(w.size() == w_star.size(), "predictor and task differ in dimension");
  Rng rng = Rng::stream(seed, {tag("fixed-risk")});
  RunningStats s;
  for (std::int64_t t = 0; t < trials; ++t) {
    const Vec x = rng.normal_vector(w.size());
    const double proj = w_star.dot(x);
    if (proj == 0.0) {
      --t;
      continue;
    }
    const double e = w.dot(x) - sign_label(proj);
    s.add(e * e);
  }
  return {s.mean(), s.std_err(), fixed_predictor_risk_analytic(w, w_star), s.count()};
}

double fixed_predictor_risk_analytic(const Vec& w, const Vec& w_star) {
  return (w - kSqrt2OverPi * w_star).squaredNorm() + 1.0 - 2.0 / 3.14159265358979323846;
}

}  // namespace iclab::opt
