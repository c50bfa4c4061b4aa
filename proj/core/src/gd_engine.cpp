#include "iclab/gd_engine.hpp"

#include <algorithm>
#include <string>

namespace iclab::gd {

GdConfig::GdConfig(Vec w0, std::variant<std::vector<double>, std::vector<Mat>> rates)
    : w0_(std::move(w0)), rates_(std::move(rates)) {
  if (w0_.size() < 1) fail(ErrorKind::config, "GD initialization must be non-empty");
  if (!is_scalar())
    for (const Mat& g : std::get<std::vector<Mat>>(rates_))
      require_dims(g.rows() == w0_.size() && g.cols() == w0_.size(),
                   "preconditioner must be d x d");
}

GdConfig GdConfig::scalar(Vec w0, std::vector<double> alphas) {
  return GdConfig(std::move(w0), std::move(alphas));
}

GdConfig GdConfig::constant(Vec w0, double alpha, int L) {
  if (L < 0) fail(ErrorKind::config, "GD step count must be non-negative");
  return scalar(std::move(w0), std::vector<double>(static_cast<std::size_t>(L), alpha));
}

GdConfig GdConfig::matrix(Vec w0, std::vector<Mat> gammas) {
  return GdConfig(std::move(w0), std::move(gammas));
}

int GdConfig::steps() const {
  return std::visit([](const auto& r) { return static_cast<int>(r.size()); }, rates_);
}

const std::vector<double>& GdConfig::alphas() const {
  if (!is_scalar()) fail(ErrorKind::config, "operation requires scalar learning rates");
  return std::get<std::vector<double>>(rates_);
}

Mat GdConfig::gamma(int l) const {
  const auto d = w0_.size();
  if (is_scalar()) return alphas().at(static_cast<std::size_t>(l)) * Mat::Identity(d, d);
  return std::get<std::vector<Mat>>(rates_).at(static_cast<std::size_t>(l));
}

GdConfig GdConfig::permuted(const std::vector<int>& perm) const {
  const int L = steps();
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  bool ok = static_cast<int>(perm.size()) == L;
  for (int i = 0; ok && i < L; ++i) ok = sorted[static_cast<std::size_t>(i)] == i;
  if (!ok) fail(ErrorKind::config, "rate permutation must be a permutation of 0..L-1");

  return std::visit(
      [&](const auto& r) {
        std::decay_t<decltype(r)> out;
        out.reserve(r.size());
        for (int p : perm) out.push_back(r[static_cast<std::size_t>(p)]);
        return GdConfig(w0_, std::move(out));
      },
      rates_);
}

GdContext GdContext::from_examples(const std::vector<data::LabeledExample>& examples, int d) {
  GdContext ctx{Mat::Zero(d, d), Vec::Zero(d), static_cast<int>(examples.size())};
  for (const auto& ex : examples) {
    require_dims(ex.x.size() == d, "example dimension mismatch");
    ctx.sigma_hat.selfadjointView<Eigen::Lower>().rankUpdate(ex.x);
    ctx.b += ex.y * ex.x;
  }
  ctx.sigma_hat = ctx.sigma_hat.selfadjointView<Eigen::Lower>();
  return ctx;
}

GdContext GdContext::from_prompt(const data::PromptMatrix& prompt) {
  const int d = prompt.dim();
  const int n = prompt.count();
  const auto xs = prompt.matrix().topLeftCorner(d, n);
  const auto ys = prompt.matrix().row(d).head(n);
  GdContext ctx;
  ctx.sigma_hat = xs * xs.transpose();
  ctx.b = xs * ys.transpose();
  ctx.count = n;
  return ctx;
}

GdContext GdContext::repeated(const data::LabeledExample& example, int N) {
  if (N < 0) fail(ErrorKind::config, "repeat count must be non-negative");
  const double n = static_cast<double>(N);
  return {n * example.x * example.x.transpose(), n * example.y * example.x, N};
}

namespace {

void record(GdTrajectory& traj, const Vec& w, const std::optional<Vec>& x_query) {
  traj.iterates.push_back(w);
  if (x_query) traj.margins.push_back(w.dot(*x_query));
}

}  // namespace

GdTrajectory gd_run(const GdConfig& cfg, const GdContext& ctx, const std::optional<Vec>& x_query) {
  require_dims(ctx.dim() == cfg.dim(), "GD context and initialization differ in dimension");
  if (x_query) require_dims(x_query->size() == cfg.dim(), "query dimension mismatch");
  GdTrajectory traj;
  Vec w = cfg.w0();
  record(traj, w, x_query);
  for (int l = 0; l < cfg.steps(); ++l) {
    const Vec grad = ctx.sigma_hat * w - ctx.b;
    if (cfg.is_scalar())
      w -= cfg.alphas()[static_cast<std::size_t>(l)] * grad;
    else
      w -= cfg.gamma(l) * grad;
    record(traj, w, x_query);
  }
  return traj;
}

GdTrajectory gd_run_examples(const GdConfig& cfg, const std::vector<data::LabeledExample>& examples,
                             const std::optional<Vec>& x_query) {
  GdTrajectory traj;
  Vec w = cfg.w0();
  record(traj, w, x_query);
  for (int l = 0; l < cfg.steps(); ++l) {
    Vec grad = Vec::Zero(w.size());
    for (const auto& ex : examples) {
      require_dims(ex.x.size() == w.size(), "example dimension mismatch");
      grad += (w.dot(ex.x) - ex.y) * ex.x;
    }
    w -= cfg.gamma(l) * grad;
    record(traj, w, x_query);
  }
  return traj;
}

tf::TransformerParams construct_gd_transformer(const GdConfig& cfg, int d, int n) {
  require_dims(cfg.dim() == d, "GD config dimension does not match d");
  if (n < 0) fail(ErrorKind::config, "context length must be non-negative");
  if (cfg.steps() < 1) fail(ErrorKind::config, "a transformer needs at least one GD step");
  tf::TransformerParams p = tf::TransformerParams::zeros(d, cfg.steps());
  p.w_e.setIdentity();
  p.w_e.block(d, 0, 1, d) = -cfg.w0().transpose();
  for (int l = 0; l < cfg.steps(); ++l) {
    auto& layer = p.layers[static_cast<std::size_t>(l)];
    layer.p(d, d) = 1.0;
    // Transposed so that non-symmetric preconditioners act as Gamma, not Gamma^T.
    layer.q.topLeftCorner(d, d) = -cfg.gamma(l).transpose();
  }
  return p;
}

std::vector<std::vector<double>> sym_coeff_table(const std::vector<double>& rates) {
  const std::size_t L = rates.size();
  std::vector<std::vector<double>> table(L + 1);
  table[0] = {1.0};
  for (std::size_t l = 0; l < L; ++l) {
    auto& next = table[l + 1];
    next.assign(l + 2, 0.0);
    next[0] = 1.0;
    for (std::size_t k = 1; k <= l + 1; ++k) {
      const double keep = k <= l ? table[l][k] : 0.0;
      next[k] = keep + rates[l] * table[l][k - 1];
    }
  }
  return table;
}

SymCoeffs sym_coeffs(const std::vector<double>& rates) {
  if (rates.empty()) fail(ErrorKind::config, "symmetric coefficients need L >= 1");
  const auto table = sym_coeff_table(rates);
  return {std::vector<double>(table.back().begin() + 1, table.back().end())};
}

Vec gd_closed_form(const GdConfig& cfg, const GdContext& ctx, int l) {
  require_dims(ctx.dim() == cfg.dim(), "GD context and initialization differ in dimension");
  const auto& alphas = cfg.alphas();
  if (l < 0 || l > cfg.steps()) fail(ErrorKind::config, "closed-form step index out of range");
  const std::vector<double> head(alphas.begin(), alphas.begin() + l);
  const std::vector<double> a = sym_coeff_table(head).back();

  Vec w = cfg.w0();
  Vec pw = cfg.w0();  // (-Sigma)^k w0
  Vec pb = ctx.b;     // (-Sigma)^(k-1) b
  for (int k = 1; k <= l; ++k) {
    pw = -(ctx.sigma_hat * pw);
    w += a[static_cast<std::size_t>(k)] * (pw + pb);
    pb = -(ctx.sigma_hat * pb);
  }
  return w;
}

double check_permutation_invariance(const GdConfig& cfg, const GdContext& ctx,
                                    const std::vector<int>& perm) {
  cfg.alphas();
  const Vec a = gd_run(cfg, ctx).final_iterate();
  const Vec b = gd_run(cfg.permuted(perm), ctx).final_iterate();
  return (a - b).norm();
}

}  // namespace iclab::gd
