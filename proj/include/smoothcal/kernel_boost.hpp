#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothcal/dataset.hpp"
#include "smoothcal/gbt.hpp"

namespace smoothcal {

enum class KernelKind { kGaussian, kLaplace };

/// Gaussian exp(-|x-x'|^2 / (2 bw^2)) or Laplace exp(-|x-x'| / bw). Both are
/// bounded by Lambda = 1.
struct KernelSpec {
  KernelKind kind = KernelKind::kGaussian;
  double bandwidth = 1.0;

  static constexpr double kSupBound = 1.0;  // Lambda

  double operator()(std::span<const double> a, std::span<const double> b) const;
};

/// Dense symmetric n x n matrix, row-major.
struct KernelMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

KernelMatrix kernel_matrix(const Dataset& data, const KernelSpec& kernel);

struct KernelBoostConfig {
  KernelSpec kernel;
  double step = 1.0;             // w; descent guaranteed for w < 4 / Lambda
  std::size_t iterations = 100;  // T
  bool record_calibration = true;
};

/// g(x) = sum_i alpha_i k(x_i, x) with g^(0) = 0.
struct KernelModel {
  KernelSpec kernel;
  std::size_t dim = 0;
  std::vector<double> support;        // n x dim, row-major (training features)
  std::vector<double> alpha;          // coefficients of g^(T)
  std::vector<double> alpha_average;  // coefficients of (1/T) sum_{t<T} g^(t)
  std::size_t iterations = 0;
  std::vector<TraceRow> trace;        // t = 0 .. T, hnorm populated
  // alpha after each iteration, kept so the model can be truncated; entry t
  // holds alpha^(t) for t = 0..T (row-major, (T+1) x n).
  std::vector<double> alpha_history;

  std::size_t support_size() const noexcept { return alpha.size(); }
  std::span<const double> alpha_at(std::size_t t) const {
    return {alpha_history.data() + t * alpha.size(), alpha.size()};
  }
  /// Cesaro mean of the alphas over t < T (T = 0 gives zeros).
  std::vector<double> averaged_alpha(std::size_t T) const;
};

/// Functional-gradient descent in the RKHS:
///   alpha <- alpha - (w/n) (sigma(g(x_i)) - y_i).
/// Throws InvalidArgument for w <= 0. A stepsize at or above 4/Lambda is
/// accepted (descent is then not guaranteed); `warning` receives a message.
KernelModel kb_train(const Dataset& train, const KernelBoostConfig& config,
                     std::string* warning = nullptr);

double kb_predict_logit(const KernelModel& model, std::span<const double> x, PredictMode mode,
                        std::optional<std::size_t> iterations = std::nullopt);
std::vector<double> kb_predict_logits(const KernelModel& model, const Dataset& data,
                                      PredictMode mode,
                                      std::optional<std::size_t> iterations = std::nullopt);

/// ||T_k grad||_H = sqrt(grad^T K grad) / n. Radicands in [-1e-12, 0) are
/// clamped; anything more negative raises InternalError.
double rkhs_grad_norm(const KernelMatrix& K, std::span<const double> grad);

std::string kb_to_json(const KernelModel& model);
KernelModel kb_from_json(const std::string& json);

/// Trace CSV with header t,log_loss,hnorm,grad_l1,dual_smce.
std::string kb_trace_csv(const KernelModel& model);

}  // namespace smoothcal
