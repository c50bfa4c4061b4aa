#pragma once

#include "iclab/common.hpp"
#include "iclab/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace iclab::data {

/// Prior over unit task vectors: w* = normalize(beta_star + tau * g).
struct PriorConfig {
  int d = 0;
  Vec beta_star;
  double tau = 0.1;

  /// Normalizes `direction`; throws on a zero vector or negative tau.
  static PriorConfig make(const Vec& direction, double tau);
  static PriorConfig e1(int d, double tau);
  static PriorConfig ones(int d, double tau);

  void validate() const;
};

/// Dimension-free prior description, resolved per d by `for_dim`.
struct PriorSpec {
  enum class Mean { e1, ones };
  Mean mean = Mean::e1;
  double tau = 0.1;

  PriorConfig for_dim(int d) const;
};

std::string to_string(PriorSpec::Mean mean);
PriorSpec::Mean parse_prior_mean(const std::string& text);

struct TaskInstance {
  Vec w_star;
  PriorConfig prior;

  int dim() const { return static_cast<int>(w_star.size()); }
};

struct LabeledExample {
  Vec x;
  double y = 1.0;
};

/// Dense (d+1) x (count+1) prompt. Column j < count is [x_j; y_j]; the last
/// column is [x_query; 0].
class PromptMatrix {
 public:
  PromptMatrix() = default;
  PromptMatrix(const std::vector<LabeledExample>& examples, const Vec& query);
  /// Takes an existing matrix; throws if the label slot of the query is nonzero.
  explicit PromptMatrix(Mat z);

  int dim() const { return static_cast<int>(z_.rows()) - 1; }
  int count() const { return static_cast<int>(z_.cols()) - 1; }

  Vec x(int j) const { return z_.col(j).head(dim()); }
  double y(int j) const { return z_(dim(), j); }
  Vec query() const { return z_.col(count()).head(dim()); }
  std::vector<LabeledExample> examples() const;

  const Mat& matrix() const { return z_; }

 private:
  Mat z_;
};

struct LabeledPrompt {
  PromptMatrix prompt;
  double y_query = 1.0;
};

struct HijackSample {
  Vec x_perp;
  Vec x_query;
  double y_query = 1.0;
  double sigma = 0.0;
  Vec x_hc;
  double y_hc = -1.0;
};

/// Distribution of the signed offset sigma along w*.
///
/// With `symmetric` set, a magnitude is drawn first and then a fair sign,
/// so y_query is +1 or -1 with equal probability.
struct SigmaDist {
  enum class Kind { fixed, uniform };
  Kind kind = Kind::fixed;
  double a = 0.1;
  double b = 0.1;
  bool symmetric = false;

  static SigmaDist fixed(double value, bool symmetric = false);
  static SigmaDist uniform(double a, double b, bool symmetric = false);

  void validate() const;
  /// Nonzero draw; exact zeros are resampled.
  double draw(Rng& rng) const;
};

std::string to_string(SigmaDist::Kind kind);

TaskInstance sample_task(const PriorConfig& prior, Rng& rng);

/// x ~ N(0, I), y = sign<w*, x>; draws on the boundary are resampled.
LabeledExample sample_example(const TaskInstance& task, Rng& rng);

/// n clean examples followed by a fresh query.
LabeledPrompt sample_train_prompt(const TaskInstance& task, int n, Rng& rng);

Vec project_to_boundary(const Vec& x, const TaskInstance& task);

HijackSample sample_hijack(const TaskInstance& task, const SigmaDist& sigma, Rng& rng);

/// N copies of [x_hc; y_hc] followed by [x_query; 0].
PromptMatrix make_hijack_prompt(const HijackSample& sample, int N);

std::pair<PromptMatrix, HijackSample> sample_hijack_prompt(const TaskInstance& task, int N,
                                                          const SigmaDist& sigma, Rng& rng);

/// Dataset dump rows `task_id,kind,col_index,y,x_0..x_{d-1}`.
void write_dataset_header(std::ostream& out, int d);
/// `context_kind` is "context" or "hijack". The query row carries y_query.
void write_dataset_rows(std::ostream& out, std::int64_t task_id, const PromptMatrix& prompt,
                        double y_query, const std::string& context_kind);

}  // namespace iclab::data
