#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace smoothcal {

inline double sigmoid(double g) {
  if (g >= 0.0) return 1.0 / (1.0 + std::exp(-g));
  const double e = std::exp(g);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// Cross-entropy of logit g against label y in {0,1}, in nats.
inline double logit_log_loss(double g, int y) {
  return y == 1 ? softplus(-g) : softplus(g);
}

/// Mean cross-entropy L_n over a batch of logits.
double mean_log_loss(std::span<const double> logits, std::span<const int> labels);

/// Per-sample derivative of the cross-entropy w.r.t. the logit: sigma(g) - y.
std::vector<double> functional_gradient(std::span<const double> logits,
                                        std::span<const int> labels);

}  // namespace smoothcal
