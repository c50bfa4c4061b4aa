#include "iclab/harness/experiments.hpp"

#include "iclab/checkpoint.hpp"
#include "iclab/csv.hpp"
#include "iclab/gd_engine.hpp"
#include "iclab/harness/oracles.hpp"
#include "iclab/harness/output.hpp"
#include "iclab/optimal_gd.hpp"
#include "iclab/robustness_eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

namespace iclab::harness {

namespace {

using csv::fmt;
namespace fs = std::filesystem;

// ---- parameter access -------------------------------------------------------

const Json& field(const Json& p, const char* key) {
  if (!p.contains(key)) fail(ErrorKind::config, std::string("missing parameter '") + key + "'");
  return p.at(key);
}

double get_double(const Json& p, const char* key) {
  const Json& v = field(p, key);
  if (!v.is_number()) fail(ErrorKind::config, std::string("parameter '") + key + "' must be a number");
  return v.get<double>();
}

std::int64_t get_int(const Json& p, const char* key) {
  const double v = get_double(p, key);
  if (v != std::floor(v)) fail(ErrorKind::config, std::string("parameter '") + key + "' must be an integer");
  return static_cast<std::int64_t>(v);
}

int get_positive(const Json& p, const char* key) {
  const auto v = get_int(p, key);
  if (v < 1) fail(ErrorKind::config, std::string("parameter '") + key + "' must be positive");
  return static_cast<int>(v);
}

bool get_bool(const Json& p, const char* key) {
  const Json& v = field(p, key);
  if (!v.is_boolean()) fail(ErrorKind::config, std::string("parameter '") + key + "' must be true or false");
  return v.get<bool>();
}

std::string get_string(const Json& p, const char* key) {
  const Json& v = field(p, key);
  if (!v.is_string()) fail(ErrorKind::config, std::string("parameter '") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<int> get_int_list(const Json& p, const char* key, int min_value) {
  const Json& v = field(p, key);
  if (!v.is_array() || v.empty())
    fail(ErrorKind::config, std::string("parameter '") + key + "' must be a non-empty list");
  std::vector<int> out;
  for (const Json& x : v) {
    if (!x.is_number() || x.get<double>() != std::floor(x.get<double>()) || x.get<double>() < min_value)
      fail(ErrorKind::config, std::string("parameter '") + key + "' must hold integers >= " +
                                  std::to_string(min_value));
    out.push_back(x.get<int>());
  }
  return out;
}

std::vector<double> get_double_list(const Json& p, const char* key) {
  const Json& v = field(p, key);
  if (!v.is_array() || v.empty())
    fail(ErrorKind::config, std::string("parameter '") + key + "' must be a non-empty list");
  std::vector<double> out;
  for (const Json& x : v) {
    if (!x.is_number()) fail(ErrorKind::config, std::string("parameter '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

data::PriorSpec prior_spec(const Json& p) {
  const Json& j = field(p, "prior");
  data::PriorSpec s;
  s.mean = data::parse_prior_mean(get_string(j, "mean"));
  s.tau = get_double(j, "tau");
  if (!(s.tau >= 0.0)) fail(ErrorKind::config, "prior.tau must be non-negative");
  return s;
}

std::pair<std::vector<double>, std::vector<double>> grid_axes(const Json& p) {
  const Json& g = field(p, "grid");
  return {opt::logspace(get_double(g, "alpha_min"), get_double(g, "alpha_max"), get_positive(g, "alpha_points")),
          opt::linspace(get_double(g, "c_min"), get_double(g, "c_max"), get_positive(g, "c_points"))};
}

data::SigmaDist sigma_dist(const Json& p) {
  const Json& s = field(p, "sigma");
  const std::string kind = get_string(s, "kind");
  const bool sym = get_bool(s, "symmetric");
  if (kind == "fixed") return data::SigmaDist::fixed(get_double(s, "a"), sym);
  if (kind == "uniform") return data::SigmaDist::uniform(get_double(s, "a"), get_double(s, "b"), sym);
  fail(ErrorKind::config, "sigma.kind must be \"fixed\" or \"uniform\"");
}

std::vector<int> hijack_counts(const Json& p) {
  const int step = get_positive(p, "N_step");
  const auto max = get_int(p, "N_max");
  if (max < 0) fail(ErrorKind::config, "N_max must be non-negative");
  std::vector<int> out;
  for (int N = 0; N <= max; N += step) out.push_back(N);
  return out;
}

std::string sigma_mode(const data::SigmaDist& s) { return s.symmetric ? "symmetric" : "positive"; }

// ---- shared pieces ----------------------------------------------------------

struct Run {
  const Json& config;
  const Json& p;
  std::uint64_t seed;
  int workers;
  RunOutput out;
  std::ostringstream summary;

  explicit Run(const Json& c)
      : config(c),
        p(c.at("parameters")),
        seed(c.at("master_seed").get<std::uint64_t>()),
        workers(c.at("workers").get<int>()),
        out(c) {}

  int finish(int code) {
    out.write_text("summary.txt", summary.str());
    out.finish(code == kExitOk ? "ok" : "oracle_failure");
    return code;
  }
};

std::vector<std::string> grid_table_header() {
  return {"d", "n", "L", "alpha", "c", "risk_mean", "risk_stderr", "trials", "is_opt"};
}

std::vector<std::string> curve_header() {
  return {"source", "d", "n", "L", "sigma_kind", "sigma_a", "sigma_b", "N",
          "accuracy", "std_err", "trials", "seed", "in_regime"};
}

void append_curve_rows(std::vector<Row>& rows, const robust::RobustnessCurve& c) {
  for (const auto& pt : c.points)
    rows.push_back({robust::to_string(c.source), fmt(c.cell.d), fmt(c.cell.n), fmt(c.cell.L),
                    data::to_string(c.cell.sigma.kind), fmt(c.cell.sigma.a), fmt(c.cell.sigma.b),
                    fmt(pt.N), fmt(pt.accuracy), fmt(pt.std_err), fmt(pt.trials),
                    std::to_string(c.seed), pt.in_regime ? "1" : "0"});
}

/// Counts adjacent increases larger than `slack` in a sequence meant to be non-increasing.
int count_increases(const std::vector<double>& v, double slack = 0.0) {
  int k = 0;
  for (std::size_t i = 1; i < v.size(); ++i) k += v[i] > v[i - 1] + slack;
  return k;
}

/// Optimal (alpha, c) per depth at (d, n), from a grid pass or from explicit overrides.
struct DepthParams {
  std::vector<double> alpha;  // index L-1
  std::vector<double> c;
  bool from_grid = false;
};

DepthParams optimal_params(const Json& p, int d, int n, int L_max, std::uint64_t seed, int workers) {
  DepthParams out;
  const bool fixed_alpha = !field(p, "alpha").is_null();
  const bool fixed_c = !field(p, "c").is_null();
  std::vector<opt::GridResult> grid;
  if (!fixed_alpha || !fixed_c) {
    const auto [alphas, cs] = grid_axes(p);
    opt::GridSpec g;
    g.alphas = alphas;
    g.cs = cs;
    g.d = d;
    g.n = n;
    g.L = L_max;
    g.trials = get_positive(p, "grid_trials");
    g.seed = opt::cell_seed(seed, d, n);
    g.prior = prior_spec(p).for_dim(d);
    g.workers = workers;
    grid = opt::grid_search_depths(g);
    out.from_grid = true;
  }
  for (int L = 1; L <= L_max; ++L) {
    out.alpha.push_back(fixed_alpha ? get_double(p, "alpha") : grid[static_cast<std::size_t>(L - 1)].alpha_opt);
    out.c.push_back(fixed_c ? get_double(p, "c") : grid[static_cast<std::size_t>(L - 1)].c_opt);
  }
  return out;
}

fs::path checkpoint_dir(const Json& p, const Json& config) {
  const std::string dir = get_string(p, "checkpoint_dir");
  return dir.empty() ? fs::path(config.at("out_dir").get<std::string>()) : fs::path(dir);
}

std::string train_hint(int d, int n, int L, const fs::path& dir) {
  return "iclab train --set d=" + std::to_string(d) + " --set n=" + std::to_string(n) +
         " --set L=" + std::to_string(L) + " --out " + dir.string();
}

tf::TransformerParams require_checkpoint(const fs::path& dir, int d, int n, int L) {
  const fs::path path = dir / tf::checkpoint_name(d, n, L);
  if (!fs::exists(path))
    fail(ErrorKind::io, "missing checkpoint " + path.string() + "; run: " + train_hint(d, n, L, dir));
  return tf::load_checkpoint(path);
}

std::uint64_t curve_seed(std::uint64_t seed, int d) {
  return derive_seed(seed, {tag("curve"), static_cast<std::uint64_t>(d)});
}

void dump_risk_tasks(Run& run, int d, int n, std::int64_t count, std::uint64_t seed,
                     const data::PriorConfig& prior) {
  std::ostringstream s;
  data::write_dataset_header(s, d);
  for (std::int64_t t = 0; t < count; ++t) {
    const auto trial = opt::draw_risk_trial(prior, n, seed, t);
    data::write_dataset_rows(s, t, trial.prompt.prompt, trial.prompt.y_query, "context");
  }
  run.out.write_text("dataset_d" + std::to_string(d) + "_n" + std::to_string(n) + ".csv", s.str(),
                     count * (n + 1));
}

// ---- experiments ------------------------------------------------------------

int verify_equivalence(Run& run) {
  const std::string fault = get_string(run.p, "fault");
  if (fault != "none" && fault != "implicit-recurrence")
    fail(ErrorKind::config, "fault must be \"none\" or \"implicit-recurrence\"");
  const auto rec = fault == "none" ? tf::Recurrence::previous_state : tf::Recurrence::implicit_current_state;
  const double tol = get_double(run.p, "tolerance");
  const auto sweep = equivalence_sweep(get_positive(run.p, "instances"), get_positive(run.p, "max_d"),
                                       static_cast<int>(get_int(run.p, "max_n")), get_positive(run.p, "max_L"),
                                       run.seed, rec);
  std::vector<Row> rows;
  double worst = 0.0;
  for (const auto& s : sweep) {
    rows.push_back({fmt(s.index), fmt(s.d), fmt(s.n), fmt(s.L), s.matrix_rates ? "matrix" : "scalar",
                    fmt(s.max_deviation)});
    worst = std::max(worst, s.max_deviation);
  }
  run.out.write_csv("equivalence.csv", {"instance", "d", "n", "L", "rate_kind", "max_deviation"}, rows,
                    "fault=" + fault);
  const bool ok = worst <= tol;
  run.summary << "instances=" << sweep.size() << "\nmax_deviation=" << fmt(worst) << "\ntolerance=" << fmt(tol)
              << "\nfault=" << fault << "\nstatus=" << (ok ? "pass" : "fail") << "\n";
  return run.finish(ok ? kExitOk : kExitOracle);
}

int check_oracles(Run& run) {
  const std::string fault = get_string(run.p, "fault");
  if (fault != "none" && fault != "implicit-recurrence")
    fail(ErrorKind::config, "fault must be \"none\" or \"implicit-recurrence\"");
  const auto rec = fault == "none" ? tf::Recurrence::previous_state : tf::Recurrence::implicit_current_state;
  const auto trials = get_int(run.p, "trials");
  if (trials < 2) fail(ErrorKind::config, "trials must be at least 2");
  const auto results = run_all_oracles(trials, get_positive(run.p, "instances"), run.seed, rec);
  std::vector<Row> rows;
  bool ok = true;
  for (const auto& r : results) {
    rows.push_back({r.name, fmt(r.measured), fmt(r.threshold), r.passed ? "1" : "0"});
    run.summary << (r.passed ? "PASS " : "FAIL ") << r.name << " measured=" << fmt(r.measured)
                << " threshold=" << fmt(r.threshold) << "\n";
    ok = ok && r.passed;
  }
  run.out.write_csv("oracles.csv", {"oracle", "measured", "threshold", "passed"}, rows,
                    "fault=" + fault + " std_err_multiplier=" + fmt(std_err_multiplier(trials)));
  return run.finish(ok ? kExitOk : kExitOracle);
}

int grid_search(Run& run, bool figure) {
  const auto d_list = get_int_list(run.p, "d_list", 1);
  const auto n_list = get_int_list(run.p, "n_list", 0);
  const int L_max = get_positive(run.p, "L_max");
  const auto [alphas, cs] = grid_axes(run.p);
  const auto dump = get_int(run.p, "dump_tasks");
  std::vector<Row> table, opt_rows;
  std::map<int, std::vector<Row>> per_d;

  for (int d : d_list)
    for (int n : n_list) {
      opt::GridSpec g;
      g.alphas = alphas;
      g.cs = cs;
      g.d = d;
      g.n = n;
      g.L = L_max;
      g.trials = get_positive(run.p, "trials");
      g.seed = opt::cell_seed(run.seed, d, n);
      g.prior = prior_spec(run.p).for_dim(d);
      g.workers = run.workers;
      const auto results = opt::grid_search_depths(g);
      std::vector<double> alpha_path;
      for (const auto& r : results) {
        for (const auto& cell : r.table)
          table.push_back({fmt(d), fmt(n), fmt(r.L), fmt(cell.alpha), fmt(cell.c), fmt(cell.risk.mean),
                           fmt(cell.risk.std_err), fmt(cell.risk.trials),
                           cell.alpha == r.alpha_opt && cell.c == r.c_opt ? "1" : "0"});
        Row row{fmt(d), fmt(n), fmt(r.L), fmt(r.alpha_opt), fmt(r.c_opt), fmt(r.risk_opt.mean),
                fmt(r.risk_opt.std_err)};
        opt_rows.push_back(row);
        if (n == n_list.front()) per_d[d].push_back(row);
        alpha_path.push_back(r.alpha_opt);
      }
      run.summary << "d=" << d << " n=" << n << " alpha_opt(L=1.." << L_max << ")=";
      for (double a : alpha_path) run.summary << ' ' << fmt(a);
      run.summary << "\n  non_increasing_in_L violations=" << count_increases(alpha_path) << "\n";
      if (dump > 0) dump_risk_tasks(run, d, n, dump, g.seed, g.prior);
    }

  const std::vector<std::string> opt_header{"d", "n", "L", "alpha_opt", "c_opt", "risk_mean", "risk_stderr"};
  run.out.write_csv("grid_table.csv", grid_table_header(), table);
  run.out.write_csv("grid_opt.csv", opt_header, opt_rows);
  if (figure)
    for (const auto& [d, rows] : per_d) run.out.write_csv("fig2_d" + std::to_string(d) + ".csv", opt_header, rows);
  return run.finish(kExitOk);
}

int scaling_study(Run& run) {
  opt::ScalingSpec s;
  s.d_list = get_int_list(run.p, "d_list", 1);
  s.n_list = get_int_list(run.p, "n_list", 1);
  s.L_list = get_int_list(run.p, "L_list", 1);
  s.trials = get_positive(run.p, "trials");
  s.seed = run.seed;
  s.prior = prior_spec(run.p);
  std::tie(s.alphas, s.cs) = grid_axes(run.p);
  s.workers = run.workers;
  const auto rows = opt::scaling_study(s);
  std::vector<Row> out;
  double lo = INFINITY, hi = 0;
  for (const auto& r : rows) {
    out.push_back({fmt(r.d), fmt(r.n), fmt(r.L), fmt(r.alpha_opt), fmt(r.c_opt), fmt(r.alpha_times_nL)});
    lo = std::min(lo, r.alpha_times_nL);
    hi = std::max(hi, r.alpha_times_nL);
  }
  run.out.write_csv("scaling.csv", {"d", "n", "L", "alpha_opt", "c_opt", "alpha_times_nL"}, out);
  run.summary << "alpha_times_nL min=" << fmt(lo) << " max=" << fmt(hi) << " ratio=" << fmt(hi / lo) << "\n";
  return run.finish(kExitOk);
}

int train(Run& run) {
  const int d = get_positive(run.p, "d");
  const int n = static_cast<int>(get_int(run.p, "n"));
  const int L = get_positive(run.p, "L");
  tf::TrainConfig cfg;
  cfg.steps = static_cast<int>(get_int(run.p, "steps"));
  cfg.batch_size = get_positive(run.p, "batch_size");
  cfg.base_lr = get_double(run.p, "base_lr");
  cfg.lr_halving_period = static_cast<int>(get_int(run.p, "lr_halving_period"));
  cfg.grad_clip_norm = get_double(run.p, "grad_clip_norm");
  const std::string optimizer = get_string(run.p, "optimizer");
  if (optimizer == "adam")
    cfg.optimizer = tf::Optimizer::adam;
  else if (optimizer == "sgd")
    cfg.optimizer = tf::Optimizer::sgd;
  else
    fail(ErrorKind::config, "optimizer must be \"adam\" or \"sgd\"");
  cfg.train_embedding = get_bool(run.p, "train_embedding");
  cfg.n = n;
  cfg.seed = derive_seed(run.seed, {tag("train")});
  cfg.workers = run.workers;
  cfg.validate();

  const auto init = tf::TransformerParams::random_init(d, L, derive_seed(run.seed, {tag("init")}),
                                                       get_double(run.p, "init_scale"));
  const auto result = tf::train(init, cfg, prior_spec(run.p).for_dim(d));

  const std::string name = tf::checkpoint_name(d, n, L);
  tf::save_checkpoint(run.out.dir() / name, result.params);
  run.out.record(name, 0);
  std::vector<Row> rows;
  for (const auto& h : result.history) rows.push_back({fmt(h.step), fmt(h.lr), fmt(h.loss), fmt(h.grad_norm)});
  run.out.write_csv("loss.csv", {"step", "lr", "loss", "grad_norm"}, rows);

  const std::size_t window = std::min<std::size_t>(1000, result.history.size());
  if (window > 0) {
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < window; ++i) {
      head += result.history[i].loss;
      tail += result.history[result.history.size() - 1 - i].loss;
    }
    run.summary << "initial_mean_loss=" << fmt(head / window) << "\nfinal_mean_loss=" << fmt(tail / window) << "\n";
  }
  run.summary << "checkpoint=" << name << "\n";
  return run.finish(kExitOk);
}

std::vector<data::LabeledPrompt> clean_prompts(const data::PriorConfig& prior, int n, std::int64_t trials,
                                               std::uint64_t seed) {
  std::vector<data::LabeledPrompt> out;
  out.reserve(static_cast<std::size_t>(trials));
  for (std::int64_t t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, {tag("clean"), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)});
    const auto task = data::sample_task(prior, rng);
    out.push_back(data::sample_train_prompt(task, n, rng));
  }
  return out;
}

int eval_clean(Run& run) {
  const int d = get_positive(run.p, "d");
  const int n = static_cast<int>(get_int(run.p, "n"));
  const int L = get_positive(run.p, "L");
  const std::string ckpt = get_string(run.p, "checkpoint");
  const fs::path dir = run.config.at("out_dir").get<std::string>();
  const auto params = ckpt.empty() ? require_checkpoint(dir, d, n, L) : tf::load_checkpoint(ckpt);
  require_dims(params.dim() == d, "checkpoint dimension does not match d");
  const auto prior = prior_spec(run.p).for_dim(d);
  const auto trials = get_positive(run.p, "trials");
  std::vector<Row> rows;
  for (int m : get_int_list(run.p, "n_eval", 0)) {
    const auto r = tf::evaluate(params, clean_prompts(prior, m, trials, run.seed));
    rows.push_back({fmt(m), fmt(r.accuracy), fmt(r.mse), fmt(trials)});
    run.summary << "n=" << m << " accuracy=" << fmt(r.accuracy) << "\n";
  }
  run.out.write_csv("clean_accuracy.csv", {"n", "accuracy", "mse", "trials"}, rows);
  return run.finish(kExitOk);
}

int fig4(Run& run) {
  const int d = get_positive(run.p, "d");
  const int n = static_cast<int>(get_int(run.p, "n"));
  const int L = get_positive(run.p, "L");
  const auto prior = prior_spec(run.p).for_dim(d);
  const auto trials = get_positive(run.p, "trials");
  const fs::path dir = checkpoint_dir(run.p, run.config);
  const fs::path path = dir / tf::checkpoint_name(d, n, L);

  std::vector<std::pair<std::string, tf::TransformerParams>> models;
  if (fs::exists(path))
    models.emplace_back("transformer_trained", tf::load_checkpoint(path));
  else if (get_bool(run.p, "require_trained"))
    fail(ErrorKind::io, "missing checkpoint " + path.string() + "; run: " + train_hint(d, n, L, dir));

  Json gd_params = run.p;
  gd_params["alpha"] = nullptr;
  gd_params["c"] = nullptr;
  const auto best = optimal_params(gd_params, d, n, L, run.seed, run.workers);
  const auto cfg = gd::GdConfig::constant(best.c.back() * prior.beta_star, best.alpha.back(), L);
  models.emplace_back("transformer_constructed", gd::construct_gd_transformer(cfg, d, n));

  std::vector<Row> rows;
  for (int m : get_int_list(run.p, "n_eval", 0)) {
    const auto prompts = clean_prompts(prior, m, trials, run.seed);
    for (const auto& [source, params] : models) {
      const auto r = tf::evaluate(params, prompts);
      rows.push_back({source, fmt(d), fmt(n), fmt(L), fmt(m), fmt(r.accuracy), fmt(r.mse), fmt(trials)});
      run.summary << source << " n=" << m << " accuracy=" << fmt(r.accuracy) << "\n";
    }
  }
  run.out.write_csv("fig4.csv", {"source", "d", "n_train", "L", "n", "accuracy", "mse", "trials"}, rows,
                    "gd_alpha=" + fmt(best.alpha.back()) + " gd_c=" + fmt(best.c.back()));
  return run.finish(kExitOk);
}

void summarize_curves(std::ostringstream& s, const std::vector<robust::RobustnessCurve>& curves) {
  for (const auto& c : curves) {
    std::vector<double> acc;
    double band = 0;
    int band_n = 0;
    int crossing = -1;
    for (const auto& pt : c.points) {
      acc.push_back(pt.accuracy);
      if (pt.N >= 20 && pt.N <= 100) {
        band += pt.accuracy;
        ++band_n;
      }
      if (crossing < 0 && pt.accuracy < 0.7) crossing = pt.N;
    }
    s << "n=" << c.cell.n << " L=" << c.cell.L << " sigma=" << fmt(c.cell.sigma.a)
      << " alpha=" << fmt(c.cell.alpha) << " c=" << fmt(c.cell.c)
      << " acc(N=" << c.points.front().N << ")=" << fmt(acc.front())
      << " acc(N=" << c.points.back().N << ")=" << fmt(acc.back())
      << " mean_acc_N20_100=" << (band_n ? fmt(band / band_n) : "nan")
      << " first_N_below_0.7=" << crossing << " increases=" << count_increases(acc) << "\n";
  }
}

int eval_hijack(Run& run, const std::string& experiment) {
  const int d = get_positive(run.p, "d");
  const auto n_list = get_int_list(run.p, "n_list", 0);
  const auto L_list = get_int_list(run.p, "L_list", 1);
  const auto Ns = hijack_counts(run.p);
  const auto trials = get_positive(run.p, "trials");
  const auto source = robust::parse_curve_source(get_string(run.p, "source"));
  const auto sigma = sigma_dist(run.p);
  const auto prior = prior_spec(run.p).for_dim(d);
  const int L_max = *std::max_element(L_list.begin(), L_list.end());
  const std::uint64_t seed = curve_seed(run.seed, d);
  const fs::path ckpt_dir = checkpoint_dir(run.p, run.config);

  std::vector<robust::RobustnessCurve> curves;
  std::vector<Row> opt_rows, fit_rows;
  for (int n : n_list) {
    const bool trained = source == robust::CurveSource::transformer_trained;
    DepthParams dp;
    if (!trained) dp = optimal_params(run.p, d, n, L_max, run.seed, run.workers);
    for (int L : L_list) {
      robust::CurveCell cell{d, n, L, 0.0, 0.0, prior, sigma};
      std::optional<tf::TransformerParams> model;
      if (trained) {
        model = require_checkpoint(ckpt_dir, d, n, L);
      } else {
        cell.alpha = dp.alpha[static_cast<std::size_t>(L - 1)];
        cell.c = dp.c[static_cast<std::size_t>(L - 1)];
        opt_rows.push_back({fmt(d), fmt(n), fmt(L), fmt(cell.alpha), fmt(cell.c), dp.from_grid ? "grid" : "config"});
      }
      curves.push_back(robust::robustness_curve(cell, Ns, trials, seed, source, model ? &*model : nullptr,
                                                run.workers));
      if (get_bool(run.p, "fit")) {
        const auto f = robust::bound_shape_fit(curves.back());
        fit_rows.push_back({fmt(d), fmt(n), fmt(L), fmt(f.c1), fmt(f.c2), fmt(f.kappa), fmt(f.residual)});
      }
    }
  }

  const std::string meta = "sigma_mode=" + sigma_mode(sigma);
  if (experiment == "fig3") {
    for (int n : n_list) {
      std::vector<Row> rows;
      for (const auto& c : curves)
        if (c.cell.n == n) append_curve_rows(rows, c);
      run.out.write_csv("fig3_n" + std::to_string(n) + ".csv", curve_header(), rows, meta);
    }
  } else {
    std::vector<Row> rows;
    for (const auto& c : curves) append_curve_rows(rows, c);
    run.out.write_csv(experiment == "fig5" ? "fig5_depth.csv" : "curves.csv", curve_header(), rows, meta);
  }
  if (!opt_rows.empty())
    run.out.write_csv("opt_params.csv", {"d", "n", "L", "alpha", "c", "origin"}, opt_rows);
  if (!fit_rows.empty())
    run.out.write_csv("fit.csv", {"d", "n", "L", "c1_hat", "c2_hat", "kappa_hat", "residual"}, fit_rows);

  const auto dump = get_int(run.p, "dump_tasks");
  if (dump > 0) {
    std::ostringstream s;
    data::write_dataset_header(s, d);
    for (std::int64_t t = 0; t < dump; ++t) {
      const auto trial = robust::draw_hijack_trial(prior, sigma, seed, t);
      data::write_dataset_rows(s, t, data::make_hijack_prompt(trial.sample, Ns.back()), trial.sample.y_query,
                               "hijack");
    }
    run.out.write_text("dataset_hijack_d" + std::to_string(d) + "_N" + std::to_string(Ns.back()) + ".csv",
                       s.str(), dump * (Ns.back() + 1));
  }

  run.summary << "source=" << robust::to_string(source) << " " << meta << "\n";
  summarize_curves(run.summary, curves);
  return run.finish(kExitOk);
}

int sigma_sweep(Run& run, const std::string& experiment) {
  const int d = get_positive(run.p, "d");
  const int n = static_cast<int>(get_int(run.p, "n"));
  const int L = get_positive(run.p, "L");
  const auto Ns = hijack_counts(run.p);
  const auto trials = get_positive(run.p, "trials");
  const auto source = robust::parse_curve_source(get_string(run.p, "source"));
  const bool symmetric = get_bool(run.p, "symmetric");
  const auto prior = prior_spec(run.p).for_dim(d);
  const std::uint64_t seed = curve_seed(run.seed, d);

  std::optional<tf::TransformerParams> model;
  double alpha = 0.0, c = 0.0;
  if (source == robust::CurveSource::transformer_trained) {
    model = require_checkpoint(checkpoint_dir(run.p, run.config), d, n, L);
  } else {
    const auto dp = optimal_params(run.p, d, n, L, run.seed, run.workers);
    alpha = dp.alpha.back();
    c = dp.c.back();
  }

  std::vector<robust::RobustnessCurve> curves;
  std::vector<Row> rows;
  for (double s : get_double_list(run.p, "sigmas")) {
    const robust::CurveCell cell{d, n, L, alpha, c, prior, data::SigmaDist::fixed(s, symmetric)};
    curves.push_back(robust::robustness_curve(cell, Ns, trials, seed, source, model ? &*model : nullptr,
                                              run.workers));
    append_curve_rows(rows, curves.back());
  }
  const std::string meta = std::string("sigma_mode=") + (symmetric ? "symmetric" : "positive");
  run.out.write_csv(experiment == "fig6" ? "fig6.csv" : "sigma_sweep.csv", curve_header(), rows, meta);
  run.summary << "source=" << robust::to_string(source) << " " << meta << "\n";
  summarize_curves(run.summary, curves);
  return run.finish(kExitOk);
}

}  // namespace

int run_experiment(const Json& config) {
  const std::string e = config.at("experiment").get<std::string>();
  Run run(config);
  if (e == "verify-equivalence") return verify_equivalence(run);
  if (e == "check-oracles") return check_oracles(run);
  if (e == "grid-search") return grid_search(run, false);
  if (e == "fig2") return grid_search(run, true);
  if (e == "scaling-study") return scaling_study(run);
  if (e == "train") return train(run);
  if (e == "eval-clean") return eval_clean(run);
  if (e == "fig4") return fig4(run);
  if (e == "eval-hijack" || e == "fig3" || e == "fig5") return eval_hijack(run, e);
  if (e == "sigma-sweep" || e == "fig6") return sigma_sweep(run, e);
  fail(ErrorKind::config, "unknown experiment \"" + e + "\"");
}

}  // namespace iclab::harness
