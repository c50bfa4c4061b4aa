#include "iclab/harness/oracles.hpp"

#include "iclab/gd_engine.hpp"
#include "iclab/optimal_gd.hpp"
#include "iclab/rng.hpp"
#include "iclab/robustness_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iclab::harness {

namespace {

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(std::floor(rng.uniform() * (hi - lo + 1)));
}

std::vector<data::LabeledExample> random_context(int d, int n, Rng& rng) {
  const data::TaskInstance task{rng.normal_vector(d).normalized(), data::PriorConfig::e1(d, 0.0)};
  std::vector<data::LabeledExample> ex;
  for (int i = 0; i < n; ++i) ex.push_back(data::sample_example(task, rng));
  return ex;
}

// Rates kept below 1/(n + d) so iterates stay O(1).
double rate_scale(int d, int n) { return 1.0 / (n + d); }

}  // namespace

double std_err_multiplier(std::int64_t trials) {
  if (trials >= 10000) return 3.0;
  return 3.0 + 0.5 * std::log10(10000.0 / static_cast<double>(std::max<std::int64_t>(trials, 1)));
}

std::vector<EquivalenceInstance> equivalence_sweep(int instances, int max_d, int max_n, int max_L,
                                                   std::uint64_t seed, tf::Recurrence rec) {
  std::vector<EquivalenceInstance> out;
  for (int i = 0; i < instances; ++i) {
    Rng rng = Rng::stream(seed, {tag("equivalence"), static_cast<std::uint64_t>(i)});
    EquivalenceInstance inst;
    inst.index = i;
    inst.d = uniform_int(rng, 1, max_d);
    inst.n = uniform_int(rng, 0, max_n);
    inst.L = uniform_int(rng, 1, max_L);
    inst.matrix_rates = i % 2 == 1;
    const double scale = rate_scale(inst.d, inst.n);
    const Vec w0 = rng.normal_vector(inst.d);
    gd::GdConfig cfg = gd::GdConfig::constant(w0, 0.0, inst.L);
    if (inst.matrix_rates) {
      std::vector<Mat> gammas;
      for (int l = 0; l < inst.L; ++l) {
        Mat g(inst.d, inst.d);
        for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = scale * rng.normal();
        gammas.push_back(g);
      }
      cfg = gd::GdConfig::matrix(w0, gammas);
    } else {
      std::vector<double> alphas;
      for (int l = 0; l < inst.L; ++l) alphas.push_back(scale * rng.uniform());
      cfg = gd::GdConfig::scalar(w0, alphas);
    }
    const auto examples = random_context(inst.d, inst.n, rng);
    const Vec xq = rng.normal_vector(inst.d);
    const data::PromptMatrix z(examples, xq);
    const auto params = gd::construct_gd_transformer(cfg, inst.d, inst.n);
    const auto trace = tf::forward(params, z, rec);
    const auto traj = gd::gd_run_examples(cfg, examples, xq);
    for (int l = 0; l <= inst.L; ++l) {
      const double raw = trace.z_layers[static_cast<std::size_t>(l)](inst.d, inst.n);
      const double m = traj.margins[static_cast<std::size_t>(l)];
      double dev = std::abs(raw + m) / (1.0 + std::abs(m));
      if (!std::isfinite(dev)) dev = std::numeric_limits<double>::infinity();
      inst.max_deviation = std::max(inst.max_deviation, dev);
    }
    out.push_back(inst);
  }
  return out;
}

OracleResult equivalence_oracle(int instances, int max_d, int max_n, int max_L, std::uint64_t seed,
                                tf::Recurrence rec) {
  double worst = 0.0;
  for (const auto& inst : equivalence_sweep(instances, max_d, max_n, max_L, seed, rec))
    worst = std::max(worst, inst.max_deviation);
  return {"gd_transformer_equivalence", worst, 1e-9, worst <= 1e-9};
}

OracleResult closed_form_oracle(int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    Rng rng = Rng::stream(seed, {tag("closed-form"), static_cast<std::uint64_t>(i)});
    const int d = uniform_int(rng, 1, 6);
    const int n = uniform_int(rng, 0, 10);
    const int L = uniform_int(rng, 1, 6);
    std::vector<double> alphas;
    for (int l = 0; l < L; ++l) alphas.push_back(rate_scale(d, n) * rng.uniform());
    const auto cfg = gd::GdConfig::scalar(rng.normal_vector(d), alphas);
    const auto ctx = gd::GdContext::from_examples(random_context(d, n, rng), d);
    const auto traj = gd::gd_run(cfg, ctx);
    for (int l = 0; l <= L; ++l) {
      const Vec& w = traj.iterates[static_cast<std::size_t>(l)];
      worst = std::max(worst, (gd::gd_closed_form(cfg, ctx, l) - w).norm() / (1.0 + w.norm()));
    }
  }
  return {"closed_form_iterate", worst, 1e-8, worst <= 1e-8};
}

OracleResult permutation_oracle(int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    Rng rng = Rng::stream(seed, {tag("permutation"), static_cast<std::uint64_t>(i)});
    const int d = uniform_int(rng, 1, 6);
    const int n = uniform_int(rng, 1, 10);
    const int L = uniform_int(rng, 2, 6);
    std::vector<double> alphas;
    for (int l = 0; l < L; ++l) alphas.push_back(rate_scale(d, n) * rng.uniform());
    const auto cfg = gd::GdConfig::scalar(rng.normal_vector(d), alphas);
    const auto ctx = gd::GdContext::from_examples(random_context(d, n, rng), d);
    std::vector<int> perm(static_cast<std::size_t>(L));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    const double norm = gd::gd_run(cfg, ctx).final_iterate().norm();
    worst = std::max(worst, gd::check_permutation_invariance(cfg, ctx, perm) / (1.0 + norm));
  }
  return {"permutation_invariance", worst, 1e-10, worst <= 1e-10};
}

OracleResult sign_expectation_oracle(int pairs, std::int64_t trials, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < pairs; ++i) {
    Rng rng = Rng::stream(seed, {tag("sign-pair"), static_cast<std::uint64_t>(i)});
    const Vec w1 = rng.normal_vector(10).normalized();
    const Vec w = rng.normal_vector(10);
    const auto r = opt::check_sign_expectation(w, w1, trials, derive_seed(seed, {tag("sign"), static_cast<std::uint64_t>(i)}));
    worst = std::max(worst, r.z_score());
  }
  const double k = std_err_multiplier(trials);
  return {"sign_expectation", worst, k, worst <= k};
}

OracleResult risk_decomposition_oracle(int predictors, std::int64_t trials, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < predictors; ++i) {
    Rng rng = Rng::stream(seed, {tag("risk-pair"), static_cast<std::uint64_t>(i)});
    const Vec ws = rng.normal_vector(10).normalized();
    const Vec w = 0.5 * rng.normal_vector(10);
    const auto r = opt::fixed_predictor_risk(w, ws, trials, derive_seed(seed, {tag("risk"), static_cast<std::uint64_t>(i)}));
    worst = std::max(worst, r.z_score());
  }
  const double k = std_err_multiplier(trials);
  return {"risk_decomposition", worst, k, worst <= k};
}

OracleResult hijack_identity_oracle(int instances, std::uint64_t seed) {
  double worst = 0.0;
  const data::PriorConfig prior = data::PriorConfig::e1(20, 0.1);
  for (int i = 0; i < instances; ++i) {
    Rng rng = Rng::stream(seed, {tag("hijack-identity"), static_cast<std::uint64_t>(i)});
    const data::SigmaDist sigma = data::SigmaDist::uniform(0.05, 0.8, i % 2 == 1);
    const auto trial = robust::draw_hijack_trial(prior, sigma, seed, i);
    const robust::HijackGdSpec spec{rng.uniform(0, 1.6), 0.004 * rng.uniform(), uniform_int(rng, 1, 6),
                                    uniform_int(rng, 0, 60), 20, 40};
    const double closed = robust::hijack_margin_closed_form(trial.sample, trial.task, spec).margin;
    const double loop = robust::hijack_margin_explicit(trial.sample, trial.task, spec);
    worst = std::max(worst, std::abs(closed - loop) / (1.0 + std::abs(loop)));
  }
  return {"hijack_margin_identity", worst, 1e-10, worst <= 1e-10};
}

std::vector<OracleResult> run_all_oracles(std::int64_t trials, int instances, std::uint64_t seed,
                                          tf::Recurrence rec) {
  return {sign_expectation_oracle(5, trials, seed),
          risk_decomposition_oracle(5, trials, seed),
          permutation_oracle(instances, seed),
          closed_form_oracle(instances, seed),
          equivalence_oracle(instances, 8, 12, 6, seed, rec),
          hijack_identity_oracle(instances, seed)};
}

}  // namespace iclab::harness
