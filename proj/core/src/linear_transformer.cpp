#include "iclab/linear_transformer.hpp"

#include "iclab/parallel.hpp"
#include "iclab/rng.hpp"

#include <cmath>
#include <string>

namespace iclab::tf {

namespace {

constexpr std::size_t kBatchBlock = 32;

Mat zero_last_col(const Mat& z) {
  Mat zm = z;
  zm.col(zm.cols() - 1).setZero();
  return zm;
}

void check_input(const TransformerParams& params, const Mat& z_input) {
  require_dims(z_input.rows() == params.w_e.rows(),
               "prompt has " + std::to_string(z_input.rows() - 1) + " features but model expects " +
                   std::to_string(params.dim()));
  require_dims(z_input.cols() >= 1, "prompt must contain a query column");
}

Mat step_previous(const LayerParams& layer, const Mat& z) {
  const Mat c = zero_last_col(z) * z.transpose();
  const Mat k = layer.p * c * layer.q;
  return z + k * z;
}

// Solves Z_i = Z_{i-1} + P Z_i S with S = M Z_{i-1}^T Q Z_{i-1}, via
// (I - S^T kron P) vec(Z_i) = vec(Z_{i-1}).
Mat step_implicit(const LayerParams& layer, const Mat& z) {
  const Eigen::Index m = z.rows();
  const Eigen::Index k = z.cols();
  Mat s = z.transpose() * layer.q * z;
  s.row(k - 1).setZero();
  Mat a = Mat::Identity(m * k, m * k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (s(j, i) != 0.0) a.block(i * m, j * m, m, m) -= s(j, i) * layer.p;
  const Eigen::Map<const Vec> rhs(z.data(), m * k);
  Vec sol = a.partialPivLu().solve(rhs);
  return Eigen::Map<Mat>(sol.data(), m, k);
}

}  // namespace

TransformerParams TransformerParams::zeros(int d, int L) {
  if (d <= 0 || L < 1) fail(ErrorKind::config, "transformer needs d >= 1 and L >= 1");
  TransformerParams p;
  p.w_e = Mat::Zero(d + 1, d + 1);
  p.layers.assign(static_cast<std::size_t>(L), {Mat::Zero(d + 1, d + 1), Mat::Zero(d + 1, d + 1)});
  return p;
}

TransformerParams TransformerParams::random_init(int d, int L, std::uint64_t seed, double scale) {
  TransformerParams p = zeros(d, L);
  p.w_e.setIdentity();
  Rng rng = Rng::stream(seed, {tag("init")});
  for (auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.p.size(); ++i) layer.p.data()[i] = scale * rng.normal();
    for (Eigen::Index i = 0; i < layer.q.size(); ++i) layer.q.data()[i] = scale * rng.normal();
  }
  return p;
}

bool TransformerParams::all_finite() const {
  if (!w_e.allFinite()) return false;
  for (const auto& layer : layers)
    if (!layer.p.allFinite() || !layer.q.allFinite()) return false;
  return true;
}

void TransformerParams::validate() const {
  if (layers.empty()) fail(ErrorKind::config, "transformer needs at least one layer");
  require_dims(w_e.rows() == w_e.cols() && w_e.rows() >= 2, "W_E must be square with d >= 1");
  for (const auto& layer : layers)
    require_dims(layer.p.rows() == w_e.rows() && layer.p.cols() == w_e.rows() &&
                     layer.q.rows() == w_e.rows() && layer.q.cols() == w_e.rows(),
                 "layer matrices must match W_E");
}

Eigen::Index TransformerParams::flat_size() const {
  return w_e.size() * (1 + 2 * static_cast<Eigen::Index>(layers.size()));
}

Vec TransformerParams::flatten() const {
  Vec flat(flat_size());
  const Eigen::Index block = w_e.size();
  flat.segment(0, block) = w_e.reshaped();
  Eigen::Index at = block;
  for (const auto& layer : layers) {
    flat.segment(at, block) = layer.p.reshaped();
    flat.segment(at + block, block) = layer.q.reshaped();
    at += 2 * block;
  }
  return flat;
}

void TransformerParams::assign_flat(const Vec& flat) {
  require_dims(flat.size() == flat_size(), "flat parameter vector has the wrong length");
  const Eigen::Index m = w_e.rows();
  const Eigen::Index block = w_e.size();
  w_e = flat.segment(0, block).reshaped(m, m);
  Eigen::Index at = block;
  for (auto& layer : layers) {
    layer.p = flat.segment(at, block).reshaped(m, m);
    layer.q = flat.segment(at + block, block).reshaped(m, m);
    at += 2 * block;
  }
}

Mat MaskMatrix::dense() const {
  Mat m = Mat::Zero(n + 1, n + 1);
  m.topLeftCorner(n, n).setIdentity();
  return m;
}

Mat MaskMatrix::apply_right(const Mat& z) const {
  require_dims(z.cols() == n + 1, "mask size does not match prompt");
  return zero_last_col(z);
}

ForwardTrace forward(const TransformerParams& params, const Mat& z_input, Recurrence rec) {
  params.validate();
  check_input(params, z_input);
  const Eigen::Index d = z_input.rows() - 1;
  const Eigen::Index q = z_input.cols() - 1;
  ForwardTrace trace;
  trace.z_layers.reserve(params.layers.size() + 1);
  trace.z_layers.push_back(params.w_e * z_input);
  for (const auto& layer : params.layers) {
    const Mat& z = trace.z_layers.back();
    trace.z_layers.push_back(rec == Recurrence::previous_state ? step_previous(layer, z)
                                                               : step_implicit(layer, z));
  }
  trace.y_hat.reserve(trace.z_layers.size());
  for (const auto& z : trace.z_layers) trace.y_hat.push_back(-z(d, q));
  return trace;
}

ForwardTrace forward(const TransformerParams& params, const data::PromptMatrix& prompt,
                     Recurrence rec) {
  return forward(params, prompt.matrix(), rec);
}

double predict(const TransformerParams& params, const Mat& z_input) {
  check_input(params, z_input);
  Mat z = params.w_e * z_input;
  for (const auto& layer : params.layers) z = step_previous(layer, z);
  return -z(z.rows() - 1, z.cols() - 1);
}

namespace {

// Adds the gradient of scale * (y_hat - y)^2 for one prompt into `acc` and
// returns the squared error.
double accumulate_sample(const TransformerParams& params, const data::LabeledPrompt& sample,
                         double scale, TransformerParams& acc, std::size_t index) {
  const Mat& z_input = sample.prompt.matrix();
  check_input(params, z_input);
  const Eigen::Index d = z_input.rows() - 1;
  const Eigen::Index q = z_input.cols() - 1;
  const std::size_t L = params.layers.size();

  std::vector<Mat> zs;
  std::vector<Mat> cs;
  zs.reserve(L + 1);
  cs.reserve(L);
  zs.push_back(params.w_e * z_input);
  for (const auto& layer : params.layers) {
    const Mat& z = zs.back();
    cs.push_back(zero_last_col(z) * z.transpose());
    zs.push_back(z + layer.p * cs.back() * layer.q * z);
  }

  const double y_hat = -zs.back()(d, q);
  const double err = y_hat - sample.y_query;
  const double sq = err * err;
  if (!std::isfinite(sq))
    fail(ErrorKind::numeric, "non-finite loss at batch index " + std::to_string(index));

  Mat g = Mat::Zero(zs.back().rows(), zs.back().cols());
  g(d, q) = -2.0 * err * scale;

  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = params.layers[l];
    const Mat& z = zs[l];
    const Mat& c = cs[l];
    const Mat k = layer.p * c * layer.q;
    const Mat dk = g * z.transpose();
    acc.layers[l].p.noalias() += dk * (c * layer.q).transpose();
    acc.layers[l].q.noalias() += (layer.p * c).transpose() * dk;
    const Mat dc = layer.p.transpose() * dk * layer.q.transpose();
    Mat g_prev = g + k.transpose() * g;
    g_prev.noalias() += (dc + dc.transpose()) * zero_last_col(z);
    g = std::move(g_prev);
  }
  acc.w_e.noalias() += g * z_input.transpose();
  return sq;
}

void add_into(TransformerParams& dst, const TransformerParams& src) {
  dst.w_e += src.w_e;
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    dst.layers[l].p += src.layers[l].p;
    dst.layers[l].q += src.layers[l].q;
  }
}

LossGrad loss_and_grads_blocked(const TransformerParams& params,
                                const std::vector<data::LabeledPrompt>& batch, int workers) {
  params.validate();
  if (batch.empty()) fail(ErrorKind::config, "loss needs a non-empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t blocks = block_count(batch.size(), kBatchBlock);
  std::vector<TransformerParams> partial(blocks, TransformerParams::zeros(params.dim(), params.depth()));
  std::vector<double> partial_loss(blocks, 0.0);
  parallel_blocks(batch.size(), kBatchBlock, workers,
                  [&](std::size_t b, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i)
                      partial_loss[b] += accumulate_sample(params, batch[i], scale, partial[b], i);
                  });
  LossGrad out{0.0, std::move(partial[0])};
  out.loss = partial_loss[0];
  for (std::size_t b = 1; b < blocks; ++b) {
    add_into(out.grads, partial[b]);
    out.loss += partial_loss[b];
  }
  out.loss *= scale;
  return out;
}

}  // namespace

LossGrad loss_and_grads(const TransformerParams& params,
                        const std::vector<data::LabeledPrompt>& batch) {
  return loss_and_grads_blocked(params, batch, 1);
}

void TrainConfig::validate() const {
  if (steps < 0) fail(ErrorKind::config, "steps must be non-negative");
  if (batch_size < 1) fail(ErrorKind::config, "batch_size must be positive");
  if (!(base_lr > 0.0)) fail(ErrorKind::config, "base_lr must be positive");
  if (lr_halving_period < 0) fail(ErrorKind::config, "lr_halving_period must be non-negative");
  if (!(grad_clip_norm >= 0.0)) fail(ErrorKind::config, "grad_clip_norm must be non-negative");
  if (n < 0) fail(ErrorKind::config, "training context length must be non-negative");
  if (optimizer == Optimizer::adam &&
      !(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0))
    fail(ErrorKind::config, "adam hyperparameters out of range");
}

double TrainConfig::lr_at(int step) const {
  if (lr_halving_period <= 0) return base_lr;
  return std::ldexp(base_lr, -(step / lr_halving_period));
}

TrainResult train(const TransformerParams& init, const TrainConfig& cfg,
                  const data::PriorConfig& prior) {
  cfg.validate();
  init.validate();
  prior.validate();
  require_dims(prior.d == init.dim(), "prior dimension does not match the model");

  TrainResult result{init, {}};
  result.history.reserve(static_cast<std::size_t>(cfg.steps));
  Vec theta = init.flatten();
  Vec m1 = Vec::Zero(theta.size());
  Vec m2 = Vec::Zero(theta.size());
  const Eigen::Index embed = init.w_e.size();
  const auto batch_n = static_cast<std::size_t>(cfg.batch_size);
  std::vector<data::LabeledPrompt> batch(batch_n);
  int over_limit = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    parallel_blocks(batch_n, kBatchBlock, cfg.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
                      for (std::size_t b = begin; b < end; ++b) {
                        Rng rng = Rng::stream(cfg.seed, {tag("train"), static_cast<std::uint64_t>(step), b});
                        const data::TaskInstance task = data::sample_task(prior, rng);
                        batch[b] = data::sample_train_prompt(task, cfg.n, rng);
                      }
                    });

    LossGrad lg;
    try {
      lg = loss_and_grads_blocked(result.params, batch, cfg.workers);
    } catch (const Error& e) {
      fail(e.kind(), "step " + std::to_string(step) + ": " + e.what());
    }

    Vec g = lg.grads.flatten();
    if (!cfg.train_embedding) g.head(embed).setZero();
    const double gnorm = g.norm();
    if (cfg.grad_clip_norm > 0.0 && gnorm > cfg.grad_clip_norm) g *= cfg.grad_clip_norm / gnorm;

    const double lr = cfg.lr_at(step);
    if (cfg.optimizer == Optimizer::sgd) {
      theta -= lr * g;
    } else {
      m1 = cfg.adam_beta1 * m1 + (1.0 - cfg.adam_beta1) * g;
      m2 = cfg.adam_beta2 * m2 + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
      const double t = step + 1.0;
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
      theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.adam_eps);
    }
    result.params.assign_flat(theta);
    if (!result.params.all_finite())
      fail(ErrorKind::numeric, "parameters became non-finite at step " + std::to_string(step));

    result.history.push_back({step, lr, lg.loss, gnorm});
    over_limit = lg.loss > 1e6 ? over_limit + 1 : 0;
    if (over_limit >= 100)
      fail(ErrorKind::diverged, "loss above 1e6 for 100 consecutive steps (step " +
                                    std::to_string(step) + ", loss " + std::to_string(lg.loss) +
                                    "); lower base_lr");
  }
  return result;
}

EvalResult evaluate(const TransformerParams& params,
                    const std::vector<data::LabeledPrompt>& prompts) {
  params.validate();
  if (prompts.empty()) fail(ErrorKind::config, "evaluate needs at least one prompt");
  std::size_t correct = 0;
  double sq = 0.0;
  for (const auto& p : prompts) {
    const double y_hat = predict(params, p.prompt.matrix());
    if (y_hat * p.y_query > 0.0) ++correct;
    sq += (y_hat - p.y_query) * (y_hat - p.y_query);
  }
  const auto count = static_cast<double>(prompts.size());
  return {static_cast<double>(correct) / count, sq / count};
}

}  // namespace iclab::tf
