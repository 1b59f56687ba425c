#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smoothcal {

/// Predicted probabilities in [0,1] paired with binary labels (n >= 1).
class PredictionSet {
 public:
  PredictionSet(std::vector<double> probs, std::vector<int> labels);

  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  std::span<const int> labels() const noexcept { return labels_; }

 private:
  std::vector<double> probs_;
  std::vector<int> labels_;
};

/// Finite logits paired with binary labels (n >= 1).
class LogitSet {
 public:
  LogitSet(std::vector<double> logits, std::vector<int> labels);

  std::size_t size() const noexcept { return logits_.size(); }
  std::span<const double> logits() const noexcept { return logits_; }
  std::span<const int> labels() const noexcept { return labels_; }

  /// sigma(g_i) for every logit.
  PredictionSet to_predictions() const;

 private:
  std::vector<double> logits_;
  std::vector<int> labels_;
};

/// Sorted-order form of the smooth-CE linear program
///   maximize sum_k c_k w_k  s.t.  |w_{k+1} - w_k| <= d_k,  w in [-1,1]^n.
///
/// For sorted anchors a_1 <= ... <= a_n the pairwise constraints
/// |w_i - w_j| <= L |a_i - a_j| are implied by the adjacent ones, since the
/// adjacent gaps telescope (see docs/chain_lp.md).
struct ChainLpProblem {
  std::vector<double> c;  // length n
  std::vector<double> d;  // length n-1, all >= 0
};

struct ChainBuild {
  ChainLpProblem problem;
  // permutation[k] = original index of the k-th smallest anchor.
  std::vector<std::size_t> permutation;
};

struct ChainSolution {
  double value = 0.0;
  std::vector<double> omega;  // in sorted (chain) order
};

/// Chain problem for the smooth CE of probabilities (anchors = probs).
ChainBuild build_chain_problem(const PredictionSet& preds, double lipschitz_scale = 1.0);
/// Chain problem for the dual smooth CE: anchors are logits, residuals use
/// sigma(logit), gaps are scaled by lipschitz_scale (1/4 for the dual CE).
ChainBuild build_chain_problem(const LogitSet& logits, double lipschitz_scale = 0.25);

/// Exact solver. Dynamic programming over concave piecewise-linear value
/// functions; O(n * segments).
ChainSolution solve_chain_lp(const ChainLpProblem& p);

double smooth_ce(const PredictionSet& preds);
double dual_smooth_ce(const LogitSet& logits);

/// Independent check of smooth_ce: DP over modifier values restricted to the
/// grid {-1, -1+step, ..., 1}; adjacent transitions allowed when
/// |w_{k+1} - w_k| <= d_k + step/2. Throws SizeError beyond kMaxOracleWork
/// state transitions.
double smooth_ce_grid_oracle(const PredictionSet& preds, double grid_step);
inline constexpr double kMaxOracleWork = 5.0e7;

double binned_ece(const PredictionSet& preds, std::size_t num_bins);

/// Width term sum_j w(I_j) * P(V in I_j) for the equal-width binning used by
/// binned_ece. Exposed for the intCE comparison.
double binned_width_term(const PredictionSet& preds, std::size_t num_bins);

double interval_ce(const PredictionSet& preds);

/// sqrt of (1/n^2) sum_ij r_i exp(-|v_i - v_j| / bandwidth) r_j, r = y - v.
double mmce(const PredictionSet& preds, double bandwidth);

struct MetricReport {
  double smooth_ce = 0.0;
  std::optional<double> dual_smooth_ce;
  double binned_ece = 0.0;
  double interval_ce = 0.0;
  double mmce = 0.0;
  double mean_abs_residual = 0.0;
  double log_loss = 0.0;
  double accuracy = 0.0;
};

inline constexpr const char* kMetricReportColumns =
    "smooth_ce,dual_smooth_ce,binned_ece,interval_ce,mmce,mean_abs_residual,log_loss,accuracy";

MetricReport metric_report(const PredictionSet& preds, std::size_t num_bins = 10,
                           double bandwidth = 1.0);
MetricReport metric_report(const LogitSet& logits, std::size_t num_bins = 10,
                           double bandwidth = 1.0);

/// One CSV row in kMetricReportColumns order; an absent dual value is an
/// empty field.
std::string to_csv_row(const MetricReport& r);
/// Single JSON object; absent dual value is null.
std::string to_json(const MetricReport& r);

/// Probability clamp used for log loss on probability inputs so that the
/// value stays finite.
inline constexpr double kProbClamp = 1e-15;

}  // namespace smoothcal
