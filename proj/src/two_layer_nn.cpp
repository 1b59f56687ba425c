#include "smoothcal/two_layer_nn.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "smoothcal/error.hpp"
#include "smoothcal/loss.hpp"
#include "smoothcal/rng.hpp"

namespace smoothcal {

ActivationBounds activation_bounds(Activation a) {
  return a == Activation::kSigmoid ? kSigmoidBounds : kTanhBounds;
}

double activate(Activation a, double z) {
  return a == Activation::kSigmoid ? sigmoid(z) : std::tanh(z);
}

double activate_derivative(Activation a, double z) {
  if (a == Activation::kSigmoid) {
    const double s = sigmoid(z);
    return s * (1.0 - s);
  }
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

double NnParams::scale() const { return std::pow(static_cast<double>(m), -beta); }

NnParams nn_init_symmetric(std::size_t m, std::size_t dim, double init_std, std::uint64_t seed,
                           double beta, Activation activation) {
  if (m == 0 || m % 2 != 0) throw InvalidArgument("hidden unit count m must be positive and even");
  if (dim == 0) throw InvalidArgument("input dimension must be positive");
  if (!(init_std >= 0.0)) throw InvalidArgument("init_std must be non-negative");
  if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("beta must lie in [0, 1]");
  NnParams p;
  p.m = m;
  p.dim = dim;
  p.beta = beta;
  p.activation = activation;
  p.theta.resize(m * dim);
  p.a.resize(m);
  Rng rng(derive_seed(seed, "nn_init"));
  const std::size_t half = m / 2;
  for (std::size_t r = 0; r < half; ++r) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = init_std * rng.gaussian();
      p.theta[r * dim + j] = v;
      p.theta[(r + half) * dim + j] = v;
    }
    p.a[r] = 1.0;
    p.a[r + half] = -1.0;
  }
  return p;
}

double nn_forward(const NnParams& p, std::span<const double> x) {
  if (x.size() != p.dim) throw InvalidArgument("input dimension mismatch");
  // Sum the paired units (r, r + m/2) together so that identical rows cancel
  // exactly rather than through a long accumulation.
  const std::size_t half = p.m / 2;
  double g = 0.0;
  for (std::size_t r = 0; r < half; ++r) {
    double z1 = 0.0, z2 = 0.0;
    const auto u1 = p.unit(r);
    const auto u2 = p.unit(r + half);
    for (std::size_t j = 0; j < p.dim; ++j) {
      z1 += u1[j] * x[j];
      z2 += u2[j] * x[j];
    }
    g += p.a[r] * activate(p.activation, z1) + p.a[r + half] * activate(p.activation, z2);
  }
  return p.scale() * g;
}

std::vector<double> nn_forward(const NnParams& p, const Dataset& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = nn_forward(p, data.row(i));
  return out;
}

double nn_loss(const NnParams& p, const Dataset& batch) {
  const auto g = nn_forward(p, batch);
  return mean_log_loss(g, batch.labels());
}

namespace {

// Activations for every (unit, sample) pair, unit-major. Both activations
// have derivatives expressible through their value.
struct HiddenLayer {
  std::vector<double> phi;
};

double derivative_from_value(Activation a, double v) {
  return a == Activation::kSigmoid ? v * (1.0 - v) : 1.0 - v * v;
}

void hidden_layer(const NnParams& p, const Dataset& data, HiddenLayer& h) {
  const std::size_t n = data.size();
  h.phi.resize(p.m * n);
  for (std::size_t r = 0; r < p.m; ++r) {
    const auto u = p.unit(r);
    double* out = h.phi.data() + r * n;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.row(i);
      double z = 0.0;
      for (std::size_t j = 0; j < p.dim; ++j) z += u[j] * x[j];
      out[i] = activate(p.activation, z);
    }
  }
}

// Same pairing and order as nn_forward, so the results agree bit for bit.
std::vector<double> logits_from(const NnParams& p, const HiddenLayer& h, std::size_t n) {
  const std::size_t half = p.m / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double g = 0.0;
    for (std::size_t r = 0; r < half; ++r) {
      g += p.a[r] * h.phi[r * n + i] + p.a[r + half] * h.phi[(r + half) * n + i];
    }
    out[i] = p.scale() * g;
  }
  return out;
}

std::vector<double> gradient_from(const NnParams& p, const HiddenLayer& h, const Dataset& batch,
                                  std::span<const double> logits) {
  const std::size_t n = batch.size();
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = sigmoid(logits[i]) - batch.label(i);

  std::vector<double> grad(p.m * p.dim, 0.0);
  const double coef = p.scale() / static_cast<double>(n);
  for (std::size_t r = 0; r < p.m; ++r) {
    double* out = grad.data() + r * p.dim;
    for (std::size_t i = 0; i < n; ++i) {
      if (resid[i] == 0.0) continue;
      const auto x = batch.row(i);
      const double s = resid[i] * derivative_from_value(p.activation, h.phi[r * n + i]);
      for (std::size_t j = 0; j < p.dim; ++j) out[j] += s * x[j];
    }
    for (std::size_t j = 0; j < p.dim; ++j) out[j] *= coef * p.a[r];
  }
  return grad;
}

}  // namespace

std::vector<double> nn_param_gradient(const NnParams& p, const Dataset& batch) {
  if (batch.empty()) throw InvalidArgument("gradient needs a non-empty batch");
  if (batch.dim() != p.dim) throw InvalidArgument("input dimension mismatch");
  HiddenLayer h;
  hidden_layer(p, batch, h);
  const auto g = logits_from(p, h, batch.size());
  return gradient_from(p, h, batch, g);
}

NnTrainResult nn_train(const Dataset& train, const NnConfig& config, std::uint64_t seed) {
  if (train.empty()) throw InvalidArgument("training set is empty");
  if (!(config.step > 0.0) || !std::isfinite(config.step)) {
    throw InvalidArgument("stepsize w must be positive");
  }
  NnTrainResult res;
  NnParams p = nn_init_symmetric(config.hidden, train.dim(), config.init_std, seed, config.beta,
                                 config.activation);

  // Stepsize part of the admissibility conditions for the functional-gradient
  // guarantee; the margin-dependent parts need gamma and are left to the
  // bounds module.
  const auto kb = activation_bounds(config.activation);
  const double mm = static_cast<double>(config.hidden);
  const double w_max = std::min(std::pow(mm, -config.beta),
                                4.0 * std::pow(mm, 2.0 * config.beta - 1.0) / (kb.k1 * kb.k1 + kb.k2));
  if (config.step > w_max) {
    res.warnings.push_back("stepsize w = " + std::to_string(config.step) +
                           " exceeds the admissible bound " + std::to_string(w_max));
  }

  res.checkpoints.push_back({0, p});
  double sq_sum = 0.0;
  HiddenLayer hidden;
  for (std::size_t t = 0;; ++t) {
    hidden_layer(p, train, hidden);
    const auto logits = logits_from(p, hidden, train.size());
    const TraceRow row = evaluate_trace_row(t, logits, train.labels(), config.record_calibration);
    res.trace.push_back(row);
    if (t == config.iterations) break;
    sq_sum += row.grad_l1 * row.grad_l1;
    if (row.dual_smce) {
      res.min_dual_smce = res.min_dual_smce ? std::min(*res.min_dual_smce, *row.dual_smce)
                                            : *row.dual_smce;
    }
    const auto grad = gradient_from(p, hidden, train, logits);
    for (std::size_t k = 0; k < p.theta.size(); ++k) p.theta[k] -= config.step * grad[k];
    const bool on_stride =
        config.checkpoint_stride > 0 && (t + 1) % config.checkpoint_stride == 0;
    const bool requested = std::find(config.checkpoint_at.begin(), config.checkpoint_at.end(),
                                     t + 1) != config.checkpoint_at.end();
    if ((on_stride || requested) && t + 1 < config.iterations) {
      res.checkpoints.push_back({t + 1, p});
    }
  }
  if (config.iterations > 0) {
    res.cesaro_sq_grad_l1 = sq_sum / static_cast<double>(config.iterations);
    res.checkpoints.push_back({config.iterations, p});
  }
  res.final_params = std::move(p);
  return res;
}

std::string nn_to_json(const NnParams& p) {
  nlohmann::ordered_json j;
  j["learner"] = "nn";
  j["m"] = p.m;
  j["dim"] = p.dim;
  j["beta"] = p.beta;
  j["activation"] = p.activation == Activation::kSigmoid ? "sigmoid" : "tanh";
  j["a"] = p.a;
  j["theta"] = p.theta;
  return j.dump();
}

NnParams nn_from_json(const std::string& text) {
  NnParams p;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("learner") != "nn") throw InvalidArgument("not a two-layer network");
    p.m = j.at("m").get<std::size_t>();
    p.dim = j.at("dim").get<std::size_t>();
    p.beta = j.at("beta").get<double>();
    const auto act = j.at("activation").get<std::string>();
    if (act != "sigmoid" && act != "tanh") throw InvalidArgument("unknown activation " + act);
    p.activation = act == "sigmoid" ? Activation::kSigmoid : Activation::kTanh;
    p.a = j.at("a").get<std::vector<double>>();
    p.theta = j.at("theta").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed network JSON: ") + e.what());
  }
  if (p.m == 0 || p.m % 2 != 0 || p.a.size() != p.m || p.theta.size() != p.m * p.dim) {
    throw InvalidArgument("network JSON has inconsistent sizes");
  }
  return p;
}

}  // namespace smoothcal
