#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothcal/dataset.hpp"
#include "smoothcal/gbt.hpp"

namespace smoothcal {

enum class Activation { kSigmoid, kTanh };

/// sup|phi'| and sup|phi''| of the activation.
struct ActivationBounds {
  double k1;
  double k2;
};

// sigmoid: phi'' = s(1-s)(1-2s) peaks at sqrt(3)/18.
inline constexpr ActivationBounds kSigmoidBounds{0.25, 0.096225044864937627};
// tanh: phi'' = -2 tanh (1 - tanh^2) peaks at 4 / (3 sqrt(3)).
inline constexpr ActivationBounds kTanhBounds{1.0, 0.76980035891950105};

ActivationBounds activation_bounds(Activation a);
double activate(Activation a, double z);
double activate_derivative(Activation a, double z);

/// g(x) = m^{-beta} sum_r a_r phi(theta_r . x) with fixed output signs
/// a_r = +1 for the first half of the units and -1 for the second half.
struct NnParams {
  std::size_t m = 0;
  std::size_t dim = 0;
  std::vector<double> theta;  // m x dim, row-major
  std::vector<double> a;
  double beta = 0.5;
  Activation activation = Activation::kSigmoid;

  std::span<const double> unit(std::size_t r) const { return {theta.data() + r * dim, dim}; }
  double scale() const;  // m^{-beta}
};

struct NnConfig {
  std::size_t iterations = 100;  // T
  double step = 0.01;            // w
  double beta = 0.5;
  std::size_t hidden = 300;      // m, even
  Activation activation = Activation::kSigmoid;
  double init_std = 1.0;
  std::size_t checkpoint_stride = 0;  // 0 keeps only the initial and final params
  std::vector<std::size_t> checkpoint_at;  // extra iterations to snapshot
  bool record_calibration = true;
};

/// First half of the rows ~ N(0, init_std^2 I), second half a copy, so the
/// network is identically zero at initialization. Throws for odd m.
NnParams nn_init_symmetric(std::size_t m, std::size_t dim, double init_std, std::uint64_t seed,
                           double beta = 0.5, Activation activation = Activation::kSigmoid);

double nn_forward(const NnParams& params, std::span<const double> x);
std::vector<double> nn_forward(const NnParams& params, const Dataset& data);

/// Mean cross-entropy of the network over a batch.
double nn_loss(const NnParams& params, const Dataset& batch);

/// Exact gradient of the mean cross-entropy w.r.t. theta (m x dim):
///   (1/n) sum_i (sigma(g(x_i)) - y_i) (a_r / m^beta) phi'(theta_r . x_i) x_i.
std::vector<double> nn_param_gradient(const NnParams& params, const Dataset& batch);

struct NnCheckpoint {
  std::size_t t;
  NnParams params;
};

struct NnTrainResult {
  std::vector<TraceRow> trace;  // t = 0 .. T
  NnParams final_params;
  std::vector<NnCheckpoint> checkpoints;
  // (1/T) sum_{t<T} grad_l1_t^2, and min_{t<T} dual smooth CE; empty for T = 0.
  std::optional<double> cesaro_sq_grad_l1;
  std::optional<double> min_dual_smce;
  std::vector<std::string> warnings;
};

/// Full-batch gradient descent with constant stepsize from a symmetric
/// initialization drawn with `seed`.
NnTrainResult nn_train(const Dataset& train, const NnConfig& config, std::uint64_t seed);

std::string nn_to_json(const NnParams& params);
NnParams nn_from_json(const std::string& json);

}  // namespace smoothcal
