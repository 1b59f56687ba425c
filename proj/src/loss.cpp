#include "smoothcal/loss.hpp"

namespace smoothcal {

double mean_log_loss(std::span<const double> logits, std::span<const int> labels) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += logit_log_loss(logits[i], labels[i]);
  return s / static_cast<double>(logits.size());
}

std::vector<double> functional_gradient(std::span<const double> logits,
                                        std::span<const int> labels) {
  std::vector<double> g(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) g[i] = sigmoid(logits[i]) - labels[i];
  return g;
}

}  // namespace smoothcal
