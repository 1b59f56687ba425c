#include "smoothcal/kernel_boost.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "smoothcal/error.hpp"
#include "smoothcal/loss.hpp"

namespace smoothcal {

double KernelSpec::operator()(std::span<const double> a, std::span<const double> b) const {
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    sq += d * d;
  }
  if (kind == KernelKind::kGaussian) return std::exp(-sq / (2.0 * bandwidth * bandwidth));
  return std::exp(-std::sqrt(sq) / bandwidth);
}

KernelMatrix kernel_matrix(const Dataset& data, const KernelSpec& kernel) {
  if (data.empty()) throw InvalidArgument("kernel matrix needs at least one point");
  if (!(kernel.bandwidth > 0.0)) throw InvalidArgument("kernel bandwidth must be positive");
  KernelMatrix K{data.size(), std::vector<double>(data.size() * data.size())};
  for (std::size_t i = 0; i < K.n; ++i) {
    K.values[i * K.n + i] = 1.0;
    for (std::size_t j = i + 1; j < K.n; ++j) {
      const double v = kernel(data.row(i), data.row(j));
      K.values[i * K.n + j] = v;
      K.values[j * K.n + i] = v;
    }
  }
  return K;
}

double rkhs_grad_norm(const KernelMatrix& K, std::span<const double> grad) {
  if (grad.size() != K.n) throw InvalidArgument("gradient length does not match kernel matrix");
  double q = 0.0;
  for (std::size_t i = 0; i < K.n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < K.n; ++j) row += K(i, j) * grad[j];
    q += grad[i] * row;
  }
  if (q < -1e-12) {
    throw InternalError("kernel quadratic form is negative (" + std::to_string(q) + ")");
  }
  return std::sqrt(std::max(q, 0.0)) / static_cast<double>(K.n);
}

std::vector<double> KernelModel::averaged_alpha(std::size_t T) const {
  const std::size_t n = alpha.size();
  std::vector<double> avg(n, 0.0);
  if (T == 0) return avg;
  for (std::size_t t = 0; t < T; ++t) {
    const auto a = alpha_at(t);
    for (std::size_t i = 0; i < n; ++i) avg[i] += a[i];
  }
  for (double& v : avg) v /= static_cast<double>(T);
  return avg;
}

KernelModel kb_train(const Dataset& train, const KernelBoostConfig& config,
                     std::string* warning) {
  if (train.empty()) throw InvalidArgument("training set is empty");
  if (!(config.step > 0.0) || !std::isfinite(config.step)) {
    throw InvalidArgument("stepsize w must be positive");
  }
  if (config.step >= 4.0 / KernelSpec::kSupBound && warning) {
    *warning = "stepsize w = " + std::to_string(config.step) +
               " is not below 4/Lambda; monotone descent is not guaranteed";
  }

  const std::size_t n = train.size();
  const KernelMatrix K = kernel_matrix(train, config.kernel);

  KernelModel m;
  m.kernel = config.kernel;
  m.dim = train.dim();
  m.support.assign(train.features().begin(), train.features().end());
  m.alpha.assign(n, 0.0);
  m.iterations = config.iterations;
  m.alpha_history.reserve((config.iterations + 1) * n);
  m.alpha_history.insert(m.alpha_history.end(), m.alpha.begin(), m.alpha.end());

  std::vector<double> logits(n, 0.0);
  std::vector<double> grad(n);
  const double rate = config.step / static_cast<double>(n);
  for (std::size_t t = 0;; ++t) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = sigmoid(logits[i]) - train.label(i);
    TraceRow row = evaluate_trace_row(t, logits, train.labels(), config.record_calibration);
    row.hnorm = rkhs_grad_norm(K, grad);
    m.trace.push_back(row);
    if (t == config.iterations) break;

    for (std::size_t i = 0; i < n; ++i) m.alpha[i] -= rate * grad[i];
    for (std::size_t i = 0; i < n; ++i) {
      double delta = 0.0;
      for (std::size_t j = 0; j < n; ++j) delta += K(i, j) * grad[j];
      logits[i] -= rate * delta;
    }
    m.alpha_history.insert(m.alpha_history.end(), m.alpha.begin(), m.alpha.end());
  }
  m.alpha_average = m.averaged_alpha(config.iterations);
  return m;
}

namespace {

void require_history(const KernelModel& m) {
  if (m.alpha_history.size() != (m.iterations + 1) * m.alpha.size()) {
    throw InvalidArgument("model carries no iteration history; only full-length queries work");
  }
}

double expand(const KernelModel& m, std::span<const double> coef, std::span<const double> x) {
  double g = 0.0;
  for (std::size_t i = 0; i < coef.size(); ++i) {
    if (coef[i] == 0.0) continue;
    g += coef[i] * m.kernel({m.support.data() + i * m.dim, m.dim}, x);
  }
  return g;
}

}  // namespace

double kb_predict_logit(const KernelModel& model, std::span<const double> x, PredictMode mode,
                        std::optional<std::size_t> iterations) {
  if (x.size() != model.dim) throw InvalidArgument("input dimension mismatch");
  const std::size_t T = iterations.value_or(model.iterations);
  if (T > model.iterations) throw InvalidArgument("requested more iterations than trained");
  if (T == model.iterations) {
    return expand(model, mode == PredictMode::kLast ? model.alpha : model.alpha_average, x);
  }
  require_history(model);
  if (mode == PredictMode::kLast) return expand(model, model.alpha_at(T), x);
  return expand(model, model.averaged_alpha(T), x);
}

std::vector<double> kb_predict_logits(const KernelModel& model, const Dataset& data,
                                      PredictMode mode, std::optional<std::size_t> iterations) {
  const std::size_t T = iterations.value_or(model.iterations);
  if (T > model.iterations) throw InvalidArgument("requested more iterations than trained");
  std::vector<double> coef;
  if (T == model.iterations) {
    coef = mode == PredictMode::kLast ? model.alpha : model.alpha_average;
  } else if (mode == PredictMode::kLast) {
    require_history(model);
    const auto a = model.alpha_at(T);
    coef.assign(a.begin(), a.end());
  } else {
    require_history(model);
    coef = model.averaged_alpha(T);
  }
  if (data.dim() != model.dim) throw InvalidArgument("input dimension mismatch");
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = expand(model, coef, data.row(i));
  }
  return out;
}

std::string kb_to_json(const KernelModel& m) {
  nlohmann::ordered_json j;
  j["learner"] = "kernel";
  j["kernel"] = {{"kind", m.kernel.kind == KernelKind::kGaussian ? "gaussian" : "laplace"},
                 {"bandwidth", m.kernel.bandwidth}};
  j["dim"] = m.dim;
  j["iterations"] = m.iterations;
  j["support"] = m.support;
  j["alpha"] = m.alpha;
  j["alpha_average"] = m.alpha_average;
  return j.dump();
}

KernelModel kb_from_json(const std::string& text) {
  KernelModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("learner") != "kernel") throw InvalidArgument("not a kernel model");
    const auto kind = j.at("kernel").at("kind").get<std::string>();
    if (kind != "gaussian" && kind != "laplace") throw InvalidArgument("unknown kernel " + kind);
    m.kernel.kind = kind == "gaussian" ? KernelKind::kGaussian : KernelKind::kLaplace;
    m.kernel.bandwidth = j.at("kernel").at("bandwidth").get<double>();
    m.dim = j.at("dim").get<std::size_t>();
    m.iterations = j.at("iterations").get<std::size_t>();
    m.support = j.at("support").get<std::vector<double>>();
    m.alpha = j.at("alpha").get<std::vector<double>>();
    m.alpha_average = j.at("alpha_average").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed kernel model JSON: ") + e.what());
  }
  if (m.dim == 0 || m.support.size() != m.alpha.size() * m.dim ||
      m.alpha_average.size() != m.alpha.size()) {
    throw InvalidArgument("kernel model JSON has inconsistent array sizes");
  }
  // History is not serialized; a loaded model only answers full-length queries.
  return m;
}

std::string kb_trace_csv(const KernelModel& model) {
  std::string out = "t,log_loss,hnorm,grad_l1,dual_smce\n";
  char buf[160];
  for (const auto& r : model.trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,", r.t, r.log_loss, r.hnorm, r.grad_l1);
    out += buf;
    if (r.dual_smce) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.dual_smce);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace smoothcal
