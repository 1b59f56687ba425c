#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "smoothcal/dataset.hpp"
#include "smoothcal/metrics.hpp"

namespace smoothcal {

/// Inputs to the closed-form training bounds. All logs are natural.
struct BoundInputs {
  double gamma = 1.0;                 // margin
  double B = 1.0;                     // base-learner sup norm
  double w = 0.1;                     // stepsize
  double T = 100;                     // iterations
  double L0 = std::numbers::ln2;      // initial loss; log 2 when g^(0) = 0
  double Lambda = 1.0;                // kernel sup bound
  double m = 300;                     // hidden units
  double beta = 0.5;
  double K1 = 0.25;
  double K2 = 0.096225044864937627;
};

/// Averaged-iterate dual smooth CE bound for boosting trees:
///   L0 / (gamma B w T) + w B / (8 gamma).  Requires T >= 2.
double gbt_training_bound(const BoundInputs& in);

/// Stepsize minimising gbt_training_bound for fixed T: sqrt(8 L0 / (B^2 T)).
double gbt_optimal_step(const BoundInputs& in);

/// (1 / gamma) sqrt(L0 / (w T)). `warning` is set when w >= 4 / Lambda.
double kernel_training_bound(const BoundInputs& in, std::string* warning = nullptr);

/// K1^4 + 2 K1^2 K2 + K1^4 K2^2.
double nn_constant_k(double k1, double k2);

/// sqrt(16 log 2 / (gamma^2 T) * (m^{2 beta - 1} / w + K)), the bound on the
/// best dual smooth CE along the gradient-descent path.
double nn_training_bound(const BoundInputs& in);

/// (1/n) sum |sigma(g_i) - y_i|.
double l1_grad_norm(const LogitSet& logits);

/// Fraction of samples with (2y - 1) g <= 0; g = 0 counts as an error.
double misclassification_rate(const LogitSet& logits);

struct StumpMargin {
  bool holds = false;
  double gamma = 0.0;
  // Separating stump when holds: x[feature] <= threshold predicts `left_label`.
  int feature = -1;
  double threshold = 0.0;
  int left_label = 0;
};

/// Looks for a single-coordinate threshold that separates the labels
/// perfectly. If one exists, B * sign(x_j - s) certifies the weak-learning
/// margin with gamma = 1 for every reweighting.
StumpMargin verify_stump_margin(const Dataset& train);

/// Stepsize conditions under which the network functional-gradient bound is
/// stated; each violated condition yields one message. gamma/delta/n are
/// needed for the width and horizon conditions.
std::vector<std::string> nn_admissibility_warnings(const BoundInputs& in, std::size_t n,
                                                   double delta = 0.05);

/// Non-normative schedule helper: w = c / sqrt(T) with c = sqrt(8 L0) / B.
struct SuggestedSchedule {
  double c;
  double step;
  double bound_at_step;
};
SuggestedSchedule suggest_gbt_schedule(const BoundInputs& in);

}  // namespace smoothcal
