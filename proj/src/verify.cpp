#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "smoothcal/bounds.hpp"
#include "smoothcal/experiment.hpp"
#include "smoothcal/loss.hpp"
#include "smoothcal/rng.hpp"

namespace smoothcal {

namespace {

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::uint64_t instance_seed(std::uint64_t seed, const std::string& suite, std::size_t i) {
  return derive_seed(seed, suite + "/" + std::to_string(i));
}

PredictionSet random_predictions(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = rng.uniform();
    y[i] = rng.uniform() < v[i] ? 1 : 0;
  }
  return {std::move(v), std::move(y)};
}

// Outcome of one instance: empty detail = pass.
struct Outcome {
  bool skipped = false;
  std::string detail;
  double stat = 0.0;
};

// |smooth_ce - grid oracle| <= 0.01 on a random set.
Outcome oracle_instance(std::uint64_t s, std::size_t i) {
  static constexpr std::size_t kSizes[] = {1, 2, 3, 4, 5, 6, 7, 50, 200};
  Rng rng(s);
  const auto preds = random_predictions(rng, kSizes[i % std::size(kSizes)]);
  const double exact = smooth_ce(preds);
  const double grid = smooth_ce_grid_oracle(preds, 0.01);
  Outcome o;
  o.stat = std::abs(exact - grid);
  if (o.stat > 0.01) o.detail = fmt("exact %.17g vs grid oracle %.17g", exact, grid);
  return o;
}

// Metric sandwich, dual dominance, gradient dominance and replacement
// stability on one random logit set.
Outcome inequality_instance(std::uint64_t s) {
  Rng rng(s);
  const std::size_t n = 1 + rng.below(60);
  const double spread = 0.5 + 4.0 * rng.uniform();
  std::vector<double> g(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = spread * rng.gaussian();
    y[i] = rng.uniform() < sigmoid(g[i] + rng.gaussian()) ? 1 : 0;
  }
  const LogitSet ls(g, y);
  const auto preds = ls.to_predictions();
  double mean_r = 0.0, mean_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - preds.probs()[i];
    mean_r += r;
    mean_abs += std::abs(r);
  }
  mean_r /= static_cast<double>(n);
  mean_abs /= static_cast<double>(n);
  const double sm = smooth_ce(preds);
  const double dual = dual_smooth_ce(ls);
  const double l1 = l1_grad_norm(ls);

  Outcome o;
  if (sm < std::abs(mean_r) - 1e-12 || sm > mean_abs + 1e-12) {
    o.detail = fmt("smooth CE %.17g outside [|mean residual|, mean |residual|] upper %.17g", sm,
                   mean_abs);
  } else if (sm > dual + 1e-9) {
    o.detail = fmt("smooth CE %.17g exceeds dual smooth CE %.17g", sm, dual);
  } else if (dual > l1 + 1e-9) {
    o.detail = fmt("dual smooth CE %.17g exceeds gradient L1 norm %.17g", dual, l1);
  } else {
    std::vector<double> v2(preds.probs().begin(), preds.probs().end());
    std::vector<int> y2(y);
    const std::size_t k = rng.below(n);
    v2[k] = rng.uniform();
    y2[k] = rng.uniform() < 0.5 ? 1 : 0;
    const double sm2 = smooth_ce(PredictionSet(v2, y2));
    o.stat = std::abs(sm2 - sm);
    if (o.stat > 2.0 / static_cast<double>(n) + 1e-12) {
      o.detail = fmt("one-sample replacement moved smooth CE by %.17g (n = %.0f)", o.stat,
                     static_cast<double>(n));
    }
  }
  return o;
}

// Averaged GBT on stump-separable data stays under the training bound.
Outcome gbt_bound_instance(std::uint64_t s) {
  static constexpr double kSteps[] = {0.05, 0.1, 0.5, 1.0};
  static constexpr std::size_t kIters[] = {2, 8, 32, 128};
  Rng rng(s);
  const double w = kSteps[rng.below(4)];
  const std::size_t T = kIters[rng.below(4)];
  const auto train = gen_threshold_separable(2 * (2 + rng.below(20)), derive_seed(s, "data"));
  GbtConfig cfg;
  cfg.iterations = T;
  cfg.step = w;
  cfg.depth = 1;
  cfg.leaf_clip = 1.0;
  cfg.record_calibration = false;
  const auto model = gbt_train(train, cfg);
  const auto g = gbt_predict_logits(model, train, PredictMode::kAverage);
  const double measured =
      dual_smooth_ce(LogitSet(g, {train.labels().begin(), train.labels().end()}));
  BoundInputs in;
  in.w = w;
  in.T = static_cast<double>(T);
  const double bound = gbt_training_bound(in);
  Outcome o;
  o.stat = measured - bound;
  if (measured > bound + 1e-9) o.detail = fmt("averaged dual smooth CE %.17g above bound %.17g", measured, bound);
  return o;
}

std::string check_trace(const std::vector<TraceRow>& trace) {
  for (std::size_t t = 1; t < trace.size(); ++t) {
    if (trace[t].log_loss > trace[t - 1].log_loss + 1e-12) {
      return fmt("loss increased to %.17g from %.17g", trace[t].log_loss, trace[t - 1].log_loss);
    }
  }
  for (const auto& r : trace) {
    if (r.dual_smce && *r.dual_smce > r.grad_l1 + 1e-9) {
      return fmt("dual smooth CE %.17g exceeds gradient L1 norm %.17g", *r.dual_smce, r.grad_l1);
    }
    if (r.smce && r.dual_smce && *r.smce > *r.dual_smce + 1e-9) {
      return fmt("smooth CE %.17g exceeds dual smooth CE %.17g", *r.smce, *r.dual_smce);
    }
  }
  return {};
}

Outcome descent_instance(std::uint64_t s, std::size_t i) {
  static constexpr double kKernelSteps[] = {0.5, 1.0, 3.9, 8.0};
  Rng rng(s);
  const auto train = gen_gaussian_toy(2 * (2 + rng.below(20)), derive_seed(s, "data"));
  Outcome o;
  if (i % 2 == 0) {
    GbtConfig cfg;
    cfg.iterations = 10 + rng.below(30);
    cfg.step = 0.05 + rng.uniform();
    cfg.depth = 1 + static_cast<int>(rng.below(3));
    cfg.leaf_clip = 1.0 + 3.0 * rng.uniform();
    o.detail = check_trace(gbt_train(train, cfg).trace);
    return o;
  }
  KernelBoostConfig cfg;
  cfg.step = kKernelSteps[(i / 2) % std::size(kKernelSteps)];
  if (cfg.step >= 4.0 / KernelSpec::kSupBound) {
    o.skipped = true;
    return o;
  }
  cfg.kernel.kind = rng.below(2) == 0 ? KernelKind::kGaussian : KernelKind::kLaplace;
  cfg.kernel.bandwidth = 0.3 + 2.0 * rng.uniform();
  cfg.iterations = 10 + rng.below(40);
  const auto model = kb_train(train, cfg);
  o.detail = check_trace(model.trace);
  if (o.detail.empty()) {
    double sq = 0.0;
    for (std::size_t t = 0; t < cfg.iterations; ++t) sq += model.trace[t].hnorm * model.trace[t].hnorm;
    const double T = static_cast<double>(cfg.iterations);
    const double bound = 2.0 * std::numbers::ln2 / (cfg.step * T);
    o.stat = sq / T - bound;
    if (sq / T > bound + 1e-9) o.detail = fmt("Cesaro mean %.17g above %.17g", sq / T, bound);
  }
  return o;
}

Outcome gradient_instance(std::uint64_t s) {
  Outcome o;
  o.stat = nn_gradient_check(s);
  if (o.stat >= 1e-5) {
    o.detail = fmt("max relative error %.3g vs finite differences (limit %.0e)", o.stat, 1e-5);
    return o;
  }
  // Symmetric initialisation is exactly the zero function.
  Rng rng(derive_seed(s, "init"));
  const std::size_t m = 2 * (1 + rng.below(4));
  const std::size_t d = 1 + rng.below(3);
  const auto p = nn_init_symmetric(m, d, 1.0, s, rng.uniform());
  std::vector<double> x(d * 5);
  for (auto& v : x) v = rng.gaussian(0.0, 3.0);
  const Dataset batch(d, x, {0, 1, 1, 0, 1});
  const double loss = nn_loss(p, batch);
  for (const double g : nn_forward(p, batch)) {
    if (g != 0.0) o.detail = fmt("symmetric init gave logit %.17g (%.0f)", g, 0.0);
  }
  if (std::abs(loss - std::numbers::ln2) > 1e-12) {
    o.detail = fmt("symmetric init loss %.17g, expected %.17g", loss, std::numbers::ln2);
  }
  return o;
}

}  // namespace

double nn_gradient_check(std::uint64_t seed, double h) {
  Rng rng(seed);
  const std::size_t m = 2 * (1 + rng.below(4));
  const std::size_t d = 1 + rng.below(3);
  const std::size_t n = 1 + rng.below(5);
  NnParams p;
  p.m = m;
  p.dim = d;
  p.beta = rng.uniform();
  p.activation = rng.below(2) == 0 ? Activation::kSigmoid : Activation::kTanh;
  p.theta.resize(m * d);
  for (auto& v : p.theta) v = rng.gaussian();
  p.a.resize(m);
  for (std::size_t r = 0; r < m; ++r) p.a[r] = r < m / 2 ? 1.0 : -1.0;
  std::vector<double> x(n * d);
  std::vector<int> y(n);
  for (auto& v : x) v = rng.gaussian();
  for (auto& v : y) v = rng.below(2) == 0 ? 0 : 1;
  const Dataset batch(d, x, y);

  const auto grad = nn_param_gradient(p, batch);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.theta.size(); ++k) {
    NnParams plus = p, minus = p;
    plus.theta[k] += h;
    minus.theta[k] -= h;
    const double fd = (nn_loss(plus, batch) - nn_loss(minus, batch)) / (2.0 * h);
    worst = std::max(worst, std::abs(grad[k] - fd) / (std::abs(grad[k]) + 1e-8));
  }
  return worst;
}

VerificationReport run_verification(const std::string& suite, std::uint64_t seed,
                                    std::size_t count) {
  if (suite != "oracle" && suite != "descent" && suite != "bounds" && suite != "gradients") {
    throw InvalidArgument("unknown suite '" + suite +
                          "' (expected oracle, descent, bounds or gradients)");
  }
  VerificationReport rep;
  rep.suite = suite;
  rep.seed = seed;
  rep.count = count;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t s = instance_seed(seed, suite, i);
    Outcome o;
    if (suite == "oracle") {
      o = oracle_instance(s, i);
    } else if (suite == "bounds") {
      o = i % 5 == 4 ? gbt_bound_instance(s) : inequality_instance(s);
    } else if (suite == "descent") {
      o = descent_instance(s, i);
    } else {
      o = gradient_instance(s);
    }
    rep.worst = std::max(rep.worst, o.stat);
    if (o.skipped) {
      ++rep.skipped;
    } else if (o.detail.empty()) {
      ++rep.passed;
    } else {
      ++rep.failed;
      rep.failures.push_back({i, s, o.detail});
    }
  }
  if (suite == "descent" && rep.skipped > 0) {
    rep.notes.push_back("kernel instances with w >= 4/Lambda are exempt and counted as skipped");
  }
  return rep;
}

std::string to_json(const VerificationReport& r) {
  nlohmann::ordered_json j;
  j["suite"] = r.suite;
  j["seed"] = r.seed;
  j["count"] = r.count;
  j["passed"] = r.passed;
  j["failed"] = r.failed;
  j["skipped"] = r.skipped;
  j["worst"] = r.worst;
  j["ok"] = r.ok();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& f : r.failures) {
    arr.push_back({{"instance", f.instance}, {"seed", f.seed}, {"detail", f.detail}});
  }
  j["failures"] = arr;
  j["notes"] = r.notes;
  return j.dump(2) + "\n";
}

}  // namespace smoothcal
