#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothcal/dataset.hpp"
#include "smoothcal/loss.hpp"
#include "smoothcal/metrics.hpp"

namespace smoothcal {

/// Which function a trained learner evaluates: the final iterate g^(T) or the
/// Cesaro average (1/T) sum_{t<T} g^(t).
enum class PredictMode { kLast, kAverage };

/// sigma(g_i) - y_i for every sample.
std::vector<double> functional_gradient(const LogitSet& logits);

/// Axis-aligned binary regression tree; a node with feature < 0 is a leaf.
/// Samples with x[feature] <= threshold go left.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
  int depth() const;
  std::size_t num_leaves() const;
};

/// Greedy least-squares CART fit to `targets`.
///
/// Candidate thresholds are midpoints between consecutive distinct values; a
/// node splits only on a strict reduction of squared error, ties going to the
/// lowest feature index and then the lowest threshold. Leaf values are the
/// region means clipped to [-clip, clip].
RegressionTree fit_tree(std::span<const double> features, std::size_t dim,
                        std::span<const double> targets, int max_depth, double clip);

struct GbtConfig {
  std::size_t iterations = 100;  // T
  double step = 0.1;             // w
  int depth = 3;                 // m
  double leaf_clip = 1.0;        // B
  // Record smooth/dual smooth CE in the trace at every iteration. Loss and
  // gradient norm are always recorded.
  bool record_calibration = true;

  static constexpr double kSmoothness = 0.25;  // M for cross-entropy
};

struct TraceRow {
  std::size_t t = 0;
  double log_loss = 0.0;
  double grad_l1 = 0.0;
  double hnorm = 0.0;  // kernel boosting only
  std::optional<double> dual_smce;
  std::optional<double> smce;
};

struct GbtModel {
  std::size_t dim = 0;
  double step = 0.0;
  double leaf_clip = 1.0;
  int depth = 0;
  std::vector<RegressionTree> trees;  // psi_0 .. psi_{T-1}
  std::vector<TraceRow> trace;        // t = 0 .. T

  std::size_t iterations() const noexcept { return trees.size(); }
};

/// Gradient boosting with cross-entropy: g^(0) = 0 and
///   psi_t = argmin ||M w psi - grad||^2 (greedy CART),  g <- g - w psi_t.
GbtModel gbt_train(const Dataset& train, const GbtConfig& config);

/// Logit of the model truncated to its first `iterations` trees (all when
/// omitted).
double gbt_predict_logit(const GbtModel& model, std::span<const double> x, PredictMode mode,
                         std::optional<std::size_t> iterations = std::nullopt);
std::vector<double> gbt_predict_logits(const GbtModel& model, const Dataset& data,
                                       PredictMode mode,
                                       std::optional<std::size_t> iterations = std::nullopt);

std::string gbt_to_json(const GbtModel& model);
GbtModel gbt_from_json(const std::string& json);

/// Trace CSV with header t,log_loss,grad_l1,dual_smce,smce.
std::string gbt_trace_csv(const GbtModel& model);

/// Shared trace row evaluation for every learner.
TraceRow evaluate_trace_row(std::size_t t, std::span<const double> logits,
                            std::span<const int> labels, bool calibration);

}  // namespace smoothcal
