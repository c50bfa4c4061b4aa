#include "iclab/data_model.hpp"

#include "iclab/csv.hpp"

#include <cmath>
#include <ostream>

namespace iclab::data {

namespace {

constexpr int kMaxPriorDraws = 10000;

}  // namespace

PriorConfig PriorConfig::make(const Vec& direction, double tau) {
  const double norm = direction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    fail(ErrorKind::config, "prior direction must be a finite nonzero vector");
  PriorConfig p;
  p.d = static_cast<int>(direction.size());
  p.beta_star = direction / norm;
  p.tau = tau;
  p.validate();
  return p;
}

PriorConfig PriorConfig::e1(int d, double tau) {
  if (d <= 0) fail(ErrorKind::config, "prior dimension must be positive");
  return make(Vec::Unit(d, 0), tau);
}

PriorConfig PriorConfig::ones(int d, double tau) {
  if (d <= 0) fail(ErrorKind::config, "prior dimension must be positive");
  return make(Vec::Ones(d), tau);
}

void PriorConfig::validate() const {
  if (d <= 0) fail(ErrorKind::config, "prior dimension must be positive");
  require_dims(beta_star.size() == d, "beta_star length does not match d");
  if (std::abs(beta_star.norm() - 1.0) > 1e-12)
    fail(ErrorKind::config, "beta_star must have unit norm");
  if (!(tau >= 0.0) || !std::isfinite(tau))
    fail(ErrorKind::config, "tau must be finite and non-negative");
}

PriorConfig PriorSpec::for_dim(int d) const {
  return mean == Mean::e1 ? PriorConfig::e1(d, tau) : PriorConfig::ones(d, tau);
}

std::string to_string(PriorSpec::Mean mean) { return mean == PriorSpec::Mean::e1 ? "e1" : "ones"; }

PriorSpec::Mean parse_prior_mean(const std::string& text) {
  if (text == "e1") return PriorSpec::Mean::e1;
  if (text == "ones") return PriorSpec::Mean::ones;
  fail(ErrorKind::config, "prior mean must be \"e1\" or \"ones\", got \"" + text + "\"");
}

PromptMatrix::PromptMatrix(const std::vector<LabeledExample>& examples, const Vec& query) {
  const auto d = query.size();
  const auto count = static_cast<Eigen::Index>(examples.size());
  z_.resize(d + 1, count + 1);
  for (Eigen::Index j = 0; j < count; ++j) {
    const auto& ex = examples[static_cast<std::size_t>(j)];
    require_dims(ex.x.size() == d, "example dimension does not match query");
    z_.col(j).head(d) = ex.x;
    z_(d, j) = ex.y;
  }
  z_.col(count).head(d) = query;
  z_(d, count) = 0.0;
}

PromptMatrix::PromptMatrix(Mat z) : z_(std::move(z)) {
  require_dims(z_.rows() >= 2 && z_.cols() >= 1, "prompt matrix too small");
  if (z_(z_.rows() - 1, z_.cols() - 1) != 0.0)
    fail(ErrorKind::config, "prompt label placeholder must be zero");
}

std::vector<LabeledExample> PromptMatrix::examples() const {
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(count()));
  for (int j = 0; j < count(); ++j) out.push_back({x(j), y(j)});
  return out;
}

SigmaDist SigmaDist::fixed(double value, bool symmetric) {
  SigmaDist s;
  s.kind = Kind::fixed;
  s.a = s.b = value;
  s.symmetric = symmetric;
  s.validate();
  return s;
}

SigmaDist SigmaDist::uniform(double a, double b, bool symmetric) {
  SigmaDist s;
  s.kind = Kind::uniform;
  s.a = a;
  s.b = b;
  s.symmetric = symmetric;
  s.validate();
  return s;
}

void SigmaDist::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) fail(ErrorKind::config, "sigma must be finite");
  if (kind == Kind::fixed && a == 0.0) fail(ErrorKind::config, "fixed sigma must be nonzero");
  if (kind == Kind::uniform && !(a < b)) fail(ErrorKind::config, "uniform sigma needs a < b");
}

double SigmaDist::draw(Rng& rng) const {
  for (;;) {
    double s = kind == Kind::fixed ? a : rng.uniform(a, b);
    if (symmetric) s = rng.coin() ? std::abs(s) : -std::abs(s);
    if (s != 0.0) return s;
  }
}

std::string to_string(SigmaDist::Kind kind) {
  return kind == SigmaDist::Kind::fixed ? "fixed" : "uniform";
}

TaskInstance sample_task(const PriorConfig& prior, Rng& rng) {
  prior.validate();
  if (prior.tau == 0.0) return {prior.beta_star, prior};
  for (int draw = 0; draw < kMaxPriorDraws; ++draw) {
    Vec w = prior.beta_star + prior.tau * rng.normal_vector(prior.d);
    const double norm = w.norm();
    if (!(norm > 0.0)) continue;
    w /= norm;
    if (w.dot(prior.beta_star) > 0.0) return {w, prior};
  }
  fail(ErrorKind::config, "prior rejected 10000 consecutive draws; tau is unusable");
}

LabeledExample sample_example(const TaskInstance& task, Rng& rng) {
  for (;;) {
    Vec x = rng.normal_vector(task.dim());
    const double s = task.w_star.dot(x);
    if (s != 0.0) return {std::move(x), sign_label(s)};
  }
}

LabeledPrompt sample_train_prompt(const TaskInstance& task, int n, Rng& rng) {
  if (n < 0) fail(ErrorKind::config, "context length must be non-negative");
  std::vector<LabeledExample> examples;
  examples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) examples.push_back(sample_example(task, rng));
  LabeledExample query = sample_example(task, rng);
  return {PromptMatrix(examples, query.x), query.y};
}

Vec project_to_boundary(const Vec& x, const TaskInstance& task) {
  require_dims(x.size() == task.w_star.size(), "projection dimension mismatch");
  return x - task.w_star * task.w_star.dot(x);
}

HijackSample sample_hijack(const TaskInstance& task, const SigmaDist& sigma, Rng& rng) {
  HijackSample h;
  h.x_perp = project_to_boundary(rng.normal_vector(task.dim()), task);
  h.sigma = sigma.draw(rng);
  h.x_query = h.x_perp + h.sigma * task.w_star;
  h.y_query = sign_label(h.sigma);
  h.x_hc = h.x_perp;
  h.y_hc = -h.y_query;
  return h;
}

PromptMatrix make_hijack_prompt(const HijackSample& sample, int N) {
  if (N < 0) fail(ErrorKind::config, "hijack count must be non-negative");
  const auto d = sample.x_query.size();
  Mat z(d + 1, N + 1);
  for (int j = 0; j < N; ++j) {
    z.col(j).head(d) = sample.x_hc;
    z(d, j) = sample.y_hc;
  }
  z.col(N).head(d) = sample.x_query;
  z(d, N) = 0.0;
  return PromptMatrix(std::move(z));
}

std::pair<PromptMatrix, HijackSample> sample_hijack_prompt(const TaskInstance& task, int N,
                                                          const SigmaDist& sigma, Rng& rng) {
  sigma.validate();
  HijackSample h = sample_hijack(task, sigma, rng);
  PromptMatrix z = make_hijack_prompt(h, N);
  return {std::move(z), std::move(h)};
}

void write_dataset_header(std::ostream& out, int d) {
  std::vector<std::string> cols{"task_id", "kind", "col_index", "y"};
  for (int i = 0; i < d; ++i) cols.push_back("x_" + std::to_string(i));
  csv::Writer(out).header(cols);
}

void write_dataset_rows(std::ostream& out, std::int64_t task_id, const PromptMatrix& prompt,
                        double y_query, const std::string& context_kind) {
  csv::Writer w(out);
  const auto emit = [&](const std::string& kind, int j, double y) {
    std::vector<std::string> f{csv::fmt(task_id), kind, csv::fmt(j), csv::fmt(y)};
    for (int i = 0; i < prompt.dim(); ++i) f.push_back(csv::fmt(prompt.matrix()(i, j)));
    w.row(f);
  };
  for (int j = 0; j < prompt.count(); ++j) emit(context_kind, j, prompt.y(j));
  emit("query", prompt.count(), y_query);
}

}  // namespace iclab::data
