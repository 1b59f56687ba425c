#include "smoothcal/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "smoothcal/error.hpp"

namespace smoothcal {

std::vector<double> functional_gradient(const LogitSet& logits) {
  return functional_gradient(logits.logits(), logits.labels());
}

// ---------------------------------------------------------------------------
// Regression tree
// ---------------------------------------------------------------------------

double RegressionTree::predict(std::span<const double> x) const {
  int k = 0;
  while (nodes[k].feature >= 0) {
    const auto& nd = nodes[k];
    k = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[k].value;
}

int RegressionTree::depth() const {
  // nodes are appended parent-before-child
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].feature < 0) continue;
    level[nodes[k].left] = level[nodes[k].right] = level[k] + 1;
    deepest = std::max(deepest, level[k] + 1);
  }
  return deepest;
}

std::size_t RegressionTree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

namespace {

struct TreeBuilder {
  std::span<const double> x;
  std::size_t dim;
  std::span<const double> t;
  int max_depth;
  double clip;
  RegressionTree tree;

  double at(std::size_t i, std::size_t j) const { return x[i * dim + j]; }

  int grow(std::vector<std::size_t>& idx, int level) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();

    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i : idx) {
      sum += t[i];
      sumsq += t[i] * t[i];
    }
    const double cnt = static_cast<double>(idx.size());
    const double mean = sum / cnt;

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = 1e-12 * std::max(1.0, sumsq);  // strict-improvement floor
    std::size_t best_left = 0;

    if (level < max_depth && idx.size() >= 2) {
      std::vector<std::size_t> order(idx);
      for (std::size_t f = 0; f < dim; ++f) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return at(a, f) < at(b, f); });
        double left_sum = 0.0;
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
          left_sum += t[order[k]];
          const double lo = at(order[k], f);
          const double hi = at(order[k + 1], f);
          if (!(lo < hi)) continue;
          const double nl = static_cast<double>(k + 1);
          const double nr = cnt - nl;
          const double right_sum = sum - left_sum;
          const double gain =
              left_sum * left_sum / nl + right_sum * right_sum / nr - sum * sum / cnt;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            double mid = lo + (hi - lo) / 2.0;
            if (!(mid < hi)) mid = lo;
            best_threshold = mid;
            best_left = k + 1;
          }
        }
      }
    }

    if (best_feature < 0) {
      tree.nodes[id].value = std::clamp(mean, -clip, clip);
      return id;
    }

    std::vector<std::size_t> left, right;
    left.reserve(best_left);
    right.reserve(idx.size() - best_left);
    for (std::size_t i : idx) {
      (at(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left : right)
          .push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    tree.nodes[id].feature = best_feature;
    tree.nodes[id].threshold = best_threshold;
    const int l = grow(left, level + 1);
    const int r = grow(right, level + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }
};

}  // namespace

RegressionTree fit_tree(std::span<const double> features, std::size_t dim,
                        std::span<const double> targets, int max_depth, double clip) {
  if (targets.empty()) throw InvalidArgument("fit_tree needs at least one sample");
  if (dim == 0 || features.size() != targets.size() * dim) {
    throw InvalidArgument("feature buffer does not match targets x dim");
  }
  if (max_depth < 1) throw InvalidArgument("tree depth must be >= 1");
  if (!(clip > 0.0)) throw InvalidArgument("leaf clip must be positive");
  TreeBuilder b{features, dim, targets, max_depth, clip, {}};
  std::vector<std::size_t> idx(targets.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  b.grow(idx, 0);
  return std::move(b.tree);
}

// ---------------------------------------------------------------------------
// Boosting
// ---------------------------------------------------------------------------

TraceRow evaluate_trace_row(std::size_t t, std::span<const double> logits,
                            std::span<const int> labels, bool calibration) {
  TraceRow row;
  row.t = t;
  row.log_loss = mean_log_loss(logits, labels);
  double l1 = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) l1 += std::abs(sigmoid(logits[i]) - labels[i]);
  row.grad_l1 = l1 / static_cast<double>(logits.size());
  if (calibration) {
    LogitSet ls(std::vector<double>(logits.begin(), logits.end()),
                std::vector<int>(labels.begin(), labels.end()));
    row.dual_smce = dual_smooth_ce(ls);
    row.smce = smooth_ce(ls.to_predictions());
  }
  return row;
}

GbtModel gbt_train(const Dataset& train, const GbtConfig& config) {
  if (train.empty()) throw InvalidArgument("training set is empty");
  if (!(config.step > 0.0) || !std::isfinite(config.step)) {
    throw InvalidArgument("stepsize w must be positive");
  }
  if (config.depth < 1) throw InvalidArgument("tree depth must be >= 1");
  if (!(config.leaf_clip >= 1.0)) throw InvalidArgument("leaf clip B must be >= 1");

  GbtModel model;
  model.dim = train.dim();
  model.step = config.step;
  model.leaf_clip = config.leaf_clip;
  model.depth = config.depth;

  const std::size_t n = train.size();
  std::vector<double> logits(n, 0.0);
  std::vector<double> targets(n);
  const double scale = 1.0 / (GbtConfig::kSmoothness * config.step);
  for (std::size_t t = 0;; ++t) {
    model.trace.push_back(evaluate_trace_row(t, logits, train.labels(), config.record_calibration));
    if (t == config.iterations) break;
    for (std::size_t i = 0; i < n; ++i) {
      targets[i] = (sigmoid(logits[i]) - train.label(i)) * scale;
    }
    auto tree = fit_tree(train.features(), train.dim(), targets, config.depth, config.leaf_clip);
    for (std::size_t i = 0; i < n; ++i) logits[i] -= config.step * tree.predict(train.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

namespace {

std::size_t resolve_iterations(const GbtModel& m, std::optional<std::size_t> it) {
  const std::size_t T = it.value_or(m.iterations());
  if (T > m.iterations()) {
    throw InvalidArgument("model has " + std::to_string(m.iterations()) +
                          " iterations, requested " + std::to_string(T));
  }
  return T;
}

}  // namespace

double gbt_predict_logit(const GbtModel& model, std::span<const double> x, PredictMode mode,
                         std::optional<std::size_t> iterations) {
  if (x.size() != model.dim) throw InvalidArgument("input dimension mismatch");
  const std::size_t T = resolve_iterations(model, iterations);
  if (T == 0) return 0.0;
  // g^(t) = -w sum_{s<t} psi_s, so the average over t < T weights psi_s by
  // (T-1-s)/T.
  double g = 0.0;
  for (std::size_t s = 0; s < T; ++s) {
    const double weight =
        mode == PredictMode::kLast ? 1.0 : static_cast<double>(T - 1 - s) / static_cast<double>(T);
    if (weight != 0.0) g -= model.step * weight * model.trees[s].predict(x);
  }
  return g;
}

std::vector<double> gbt_predict_logits(const GbtModel& model, const Dataset& data,
                                       PredictMode mode, std::optional<std::size_t> iterations) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = gbt_predict_logit(model, data.row(i), mode, iterations);
  }
  return out;
}

std::string gbt_to_json(const GbtModel& model) {
  nlohmann::ordered_json j;
  j["learner"] = "gbt";
  j["dim"] = model.dim;
  j["step"] = model.step;
  j["leaf_clip"] = model.leaf_clip;
  j["depth"] = model.depth;
  j["g0"] = 0.0;
  auto& trees = j["trees"] = nlohmann::ordered_json::array();
  for (const auto& tr : model.trees) {
    nlohmann::ordered_json t;
    for (const auto& nd : tr.nodes) {
      t["feature"].push_back(nd.feature);
      t["threshold"].push_back(nd.threshold);
      t["left"].push_back(nd.left);
      t["right"].push_back(nd.right);
      t["value"].push_back(nd.value);
    }
    trees.push_back(std::move(t));
  }
  return j.dump();
}

GbtModel gbt_from_json(const std::string& text) {
  GbtModel m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("learner") != "gbt") throw InvalidArgument("not a gbt model");
    m.dim = j.at("dim").get<std::size_t>();
    m.step = j.at("step").get<double>();
    m.leaf_clip = j.at("leaf_clip").get<double>();
    m.depth = j.at("depth").get<int>();
    for (const auto& t : j.at("trees")) {
      RegressionTree tr;
      const auto& f = t.at("feature");
      for (std::size_t k = 0; k < f.size(); ++k) {
        tr.nodes.push_back({f[k].get<int>(), t.at("threshold")[k].get<double>(),
                            t.at("left")[k].get<int>(), t.at("right")[k].get<int>(),
                            t.at("value")[k].get<double>()});
      }
      m.trees.push_back(std::move(tr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed gbt model JSON: ") + e.what());
  }
  return m;
}

std::string gbt_trace_csv(const GbtModel& model) {
  std::string out = "t,log_loss,grad_l1,dual_smce,smce\n";
  char buf[160];
  for (const auto& r : model.trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,", r.t, r.log_loss, r.grad_l1);
    out += buf;
    if (r.dual_smce) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.dual_smce);
      out += buf;
    }
    out += ',';
    if (r.smce) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.smce);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace smoothcal
