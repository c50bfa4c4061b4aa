#pragma once

#include "iclab/common.hpp"
#include "iclab/data_model.hpp"
#include "iclab/linear_transformer.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace iclab::gd {

/// Initialization plus per-step rates, either scalars or d x d matrices.
class GdConfig {
 public:
  static GdConfig scalar(Vec w0, std::vector<double> alphas);
  static GdConfig constant(Vec w0, double alpha, int L);
  static GdConfig matrix(Vec w0, std::vector<Mat> gammas);

  const Vec& w0() const { return w0_; }
  int dim() const { return static_cast<int>(w0_.size()); }
  int steps() const;
  bool is_scalar() const { return std::holds_alternative<std::vector<double>>(rates_); }

  /// Throws unless the config uses scalar rates.
  const std::vector<double>& alphas() const;
  /// Gamma_l as a matrix in either mode.
  Mat gamma(int l) const;

  /// Rates reordered so that step l uses the old rate perm[l].
  GdConfig permuted(const std::vector<int>& perm) const;

 private:
  GdConfig(Vec w0, std::variant<std::vector<double>, std::vector<Mat>> rates);

  Vec w0_;
  std::variant<std::vector<double>, std::vector<Mat>> rates_;
};

/// Sufficient statistics of the in-context loss: sum x x^T and sum y x.
struct GdContext {
  Mat sigma_hat;
  Vec b;
  int count = 0;

  static GdContext from_examples(const std::vector<data::LabeledExample>& examples, int d);
  static GdContext from_prompt(const data::PromptMatrix& prompt);
  /// N copies of one example.
  static GdContext repeated(const data::LabeledExample& example, int N);

  int dim() const { return static_cast<int>(b.size()); }
};

struct GdTrajectory {
  std::vector<Vec> iterates;     // w^(0) .. w^(L)
  std::vector<double> margins;   // <w^(l), x_query>, empty when no query given

  const Vec& final_iterate() const { return iterates.back(); }
};

GdTrajectory gd_run(const GdConfig& cfg, const GdContext& ctx,
                    const std::optional<Vec>& x_query = std::nullopt);

/// Same update, written as the literal sum over examples. Slow; used as an
/// independent oracle for gd_run.
GdTrajectory gd_run_examples(const GdConfig& cfg, const std::vector<data::LabeledExample>& examples,
                             const std::optional<Vec>& x_query = std::nullopt);

/// Weights whose per-layer output -Z_l(d, n) equals <w^(l), x_query>.
tf::TransformerParams construct_gd_transformer(const GdConfig& cfg, int d, int n);

struct SymCoeffs {
  std::vector<double> a;  // a[k-1] = A_{L,k}, k = 1..L
};

SymCoeffs sym_coeffs(const std::vector<double>& rates);

/// table[l][k] = A_{l,k} for 0 <= k <= l <= L, with A_{l,0} = 1.
std::vector<std::vector<double>> sym_coeff_table(const std::vector<double>& rates);

/// Iterate l from the elementary-symmetric expansion. Scalar rates only.
Vec gd_closed_form(const GdConfig& cfg, const GdContext& ctx, int l);

/// ||w^(L) - w'^(L)|| where w' runs with the permuted rates. Scalar rates only.
double check_permutation_invariance(const GdConfig& cfg, const GdContext& ctx,
                                    const std::vector<int>& perm);

}  // namespace iclab::gd
