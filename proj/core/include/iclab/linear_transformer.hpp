#pragma once

#include "iclab/common.hpp"
#include "iclab/data_model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace iclab::tf {

struct LayerParams {
  Mat p;
  Mat q;
};

/// Embedding W_E plus one (P, Q) pair per layer, all (d+1) x (d+1).
struct TransformerParams {
  Mat w_e;
  std::vector<LayerParams> layers;

  int dim() const { return static_cast<int>(w_e.rows()) - 1; }
  int depth() const { return static_cast<int>(layers.size()); }

  static TransformerParams zeros(int d, int L);
  /// W_E = I, P and Q entries i.i.d. N(0, scale^2).
  static TransformerParams random_init(int d, int L, std::uint64_t seed, double scale = 0.02);

  bool all_finite() const;
  void validate() const;

  /// Flat view used by the optimizers: W_E, then P_0, Q_0, P_1, Q_1, ...
  Vec flatten() const;
  void assign_flat(const Vec& flat);
  Eigen::Index flat_size() const;
};

/// The (n+1) x (n+1) mask with I_n in the top-left block.
struct MaskMatrix {
  int n = 0;
  Mat dense() const;
  /// Z * M, i.e. Z with its last column zeroed.
  Mat apply_right(const Mat& z) const;
};

enum class Recurrence {
  previous_state,          // Z_i = Z_{i-1} + P Z_{i-1} M Z_{i-1}^T Q Z_{i-1}
  implicit_current_state,  // Z_i on both sides, solved exactly; fault-injection only
};

struct ForwardTrace {
  std::vector<Mat> z_layers;   // Z_0 (after embedding) .. Z_L
  std::vector<double> y_hat;   // y_hat[l] = -Z_l(d, count)

  double output() const { return y_hat.back(); }
};

/// The embedding is applied first: z_layers[0] = W_E * Z_input.
ForwardTrace forward(const TransformerParams& params, const Mat& z_input,
                     Recurrence rec = Recurrence::previous_state);
ForwardTrace forward(const TransformerParams& params, const data::PromptMatrix& prompt,
                     Recurrence rec = Recurrence::previous_state);

/// Final-layer output only, without storing intermediate states.
double predict(const TransformerParams& params, const Mat& z_input);

struct LossGrad {
  double loss = 0.0;
  TransformerParams grads;
};

/// Mean squared error over the batch and its exact gradient.
LossGrad loss_and_grads(const TransformerParams& params,
                        const std::vector<data::LabeledPrompt>& batch);

enum class Optimizer { sgd, adam };

struct TrainConfig {
  int steps = 20000;
  int batch_size = 256;
  double base_lr = 1e-3;
  int lr_halving_period = 5000;  // 0 disables halving
  double grad_clip_norm = 1.0;   // 0 disables clipping
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int n = 40;
  std::uint64_t seed = 0;
  bool train_embedding = true;
  int workers = 1;

  void validate() const;
  double lr_at(int step) const;
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct TrainResult {
  TransformerParams params;
  std::vector<StepRecord> history;
};

/// Fresh tasks and prompts each step. Sample b of step s comes from the
/// stream (seed, s, b), so the result does not depend on cfg.workers.
TrainResult train(const TransformerParams& init, const TrainConfig& cfg,
                  const data::PriorConfig& prior);

struct EvalResult {
  double accuracy = 0.0;
  double mse = 0.0;
};

/// Zero outputs count as misclassified.
EvalResult evaluate(const TransformerParams& params,
                    const std::vector<data::LabeledPrompt>& prompts);

}  // namespace iclab::tf
