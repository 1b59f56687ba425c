#include "smoothcal/bounds.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "smoothcal/error.hpp"
#include "smoothcal/loss.hpp"

namespace smoothcal {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw InvalidArgument(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

double gbt_training_bound(const BoundInputs& in) {
  if (in.T < 2) throw InvalidArgument("the boosting bound requires T >= 2");
  require_positive(in.gamma, "gamma");
  require_positive(in.w, "w");
  require_positive(in.L0, "L0");
  if (!(in.B >= 1.0)) throw InvalidArgument("B must be >= 1");
  return in.L0 / (in.gamma * in.B * in.w * in.T) + in.w * in.B / (8.0 * in.gamma);
}

double gbt_optimal_step(const BoundInputs& in) {
  require_positive(in.T, "T");
  require_positive(in.L0, "L0");
  return std::sqrt(8.0 * in.L0 / (in.B * in.B * in.T));
}

double kernel_training_bound(const BoundInputs& in, std::string* warning) {
  require_positive(in.gamma, "gamma");
  require_positive(in.w * in.T, "w * T");
  require_positive(in.w, "w");
  require_positive(in.L0, "L0");
  if (warning && in.w >= 4.0 / in.Lambda) {
    *warning = "w >= 4/Lambda: the kernel boosting bound assumes w < 4/Lambda";
  }
  return std::sqrt(in.L0 / (in.w * in.T)) / in.gamma;
}

double nn_constant_k(double k1, double k2) {
  const double k1sq = k1 * k1;
  return k1sq * k1sq + 2.0 * k1sq * k2 + k1sq * k1sq * k2 * k2;
}

double nn_training_bound(const BoundInputs& in) {
  require_positive(in.gamma, "gamma");
  require_positive(in.T, "T");
  require_positive(in.m, "m");
  require_positive(in.w, "w");
  require_positive(in.K1, "K1");
  require_positive(in.K2, "K2");
  if (!(in.beta >= 0.0 && in.beta <= 1.0)) throw InvalidArgument("beta must lie in [0, 1]");
  const double k = nn_constant_k(in.K1, in.K2);
  const double inner = 16.0 * std::numbers::ln2 / (in.gamma * in.gamma * in.T) *
                       (std::pow(in.m, 2.0 * in.beta - 1.0) / in.w + k);
  return std::sqrt(inner);
}

double l1_grad_norm(const LogitSet& logits) {
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    s += std::abs(sigmoid(logits.logits()[i]) - logits.labels()[i]);
  }
  return s / static_cast<double>(logits.size());
}

double misclassification_rate(const LogitSet& logits) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double margin = (2.0 * logits.labels()[i] - 1.0) * logits.logits()[i];
    wrong += margin <= 0.0;
  }
  return static_cast<double>(wrong) / static_cast<double>(logits.size());
}

StumpMargin verify_stump_margin(const Dataset& train) {
  StumpMargin out;
  if (train.empty()) return out;
  const std::size_t n = train.size();
  const std::size_t positives =
      static_cast<std::size_t>(std::count(train.labels().begin(), train.labels().end(), 1));
  if (positives == 0 || positives == n) {
    // A constant stump B * (2y - 1) already attains the margin.
    out.holds = true;
    out.gamma = 1.0;
    out.left_label = positives == n ? 1 : 0;
    out.feature = 0;
    out.threshold = std::numeric_limits<double>::infinity();
    return out;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t f = 0; f < train.dim(); ++f) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return train.at(a, f) < train.at(b, f); });
    std::size_t left_pos = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left_pos += train.label(order[k]) == 1;
      const double lo = train.at(order[k], f);
      const double hi = train.at(order[k + 1], f);
      if (!(lo < hi)) continue;
      const std::size_t left_n = k + 1;
      const bool left_all_neg = left_pos == 0 && positives == n - left_n;
      const bool left_all_pos = left_pos == left_n && positives == left_n;
      if (left_all_neg || left_all_pos) {
        out.holds = true;
        out.gamma = 1.0;
        out.feature = static_cast<int>(f);
        out.threshold = lo + (hi - lo) / 2.0;
        out.left_label = left_all_pos ? 1 : 0;
        return out;
      }
    }
  }
  return out;
}

std::vector<std::string> nn_admissibility_warnings(const BoundInputs& in, std::size_t n,
                                                   double delta) {
  std::vector<std::string> w;
  const double k1 = in.K1, k2 = in.K2;
  const double step_cap =
      std::min(std::pow(in.m, -in.beta), 4.0 * std::pow(in.m, 2.0 * in.beta - 1.0) / (k1 * k1 + k2));
  if (in.w > step_cap) {
    w.push_back("w = " + std::to_string(in.w) + " exceeds min{m^-beta, 4 m^(2beta-1)/(K1^2+K2)} = " +
                std::to_string(step_cap));
  }
  if (in.beta >= 1.0) w.push_back("beta must lie in [0, 1) for the network bound");
  const double width = 16.0 * k1 * k1 / (in.gamma * in.gamma) *
                       std::log(2.0 * static_cast<double>(n) / delta);
  if (in.m < width) {
    w.push_back("m = " + std::to_string(in.m) + " is below the width requirement " +
                std::to_string(width));
  }
  const double horizon =
      std::floor(in.m * in.gamma * in.gamma / (32.0 * in.w * k2 * k2 * std::numbers::ln2));
  if (in.T > horizon) {
    w.push_back("T = " + std::to_string(in.T) + " exceeds the horizon " + std::to_string(horizon));
  }
  return w;
}

SuggestedSchedule suggest_gbt_schedule(const BoundInputs& in) {
  require_positive(in.T, "T");
  const double c = std::sqrt(8.0 * in.L0) / in.B;
  const double step = c / std::sqrt(in.T);
  BoundInputs at = in;
  at.w = step;
  return {c, step, in.T >= 2 ? gbt_training_bound(at) : std::numeric_limits<double>::infinity()};
}

}  // namespace smoothcal
