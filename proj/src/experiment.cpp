#include "smoothcal/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "smoothcal/bounds.hpp"
#include "smoothcal/loss.hpp"
#include "smoothcal/rng.hpp"

namespace smoothcal {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

// A JSON object under a field path; every key must be consumed.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "expected an object");
  }
  ~Obj() = default;

  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) {
    seen_.push_back(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(child(key), "must be finite");
    return d;
  }
  double positive(const std::string& key, double fallback) {
    const double d = number(key, fallback);
    if (!(d > 0.0)) throw ConfigError(child(key), "must be positive");
    return d;
  }
  std::size_t count(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(child(key), "expected a non-negative integer");
    }
    return v.get<std::size_t>();
  }
  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(child(key), "expected true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(child(key), "expected a string");
    return v.get<std::string>();
  }
  std::string required_text(const std::string& key) {
    if (!has(key)) throw ConfigError(child(key), "missing required field");
    return text(key, "");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        throw ConfigError(child(it.key()), "unknown field");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

DatasetSpec parse_dataset(Obj o, const std::string& base_dir) {
  DatasetSpec d;
  const auto kind = o.required_text("kind");
  if (kind == "toy-gaussian") {
    d.kind = DatasetSpec::Kind::kGaussianToy;
  } else if (kind == "toy-mirrored") {
    d.kind = DatasetSpec::Kind::kMirroredToy;
    d.sigma = o.number("sigma", d.sigma);
    d.tau = o.number("tau", d.tau);
    if (d.sigma < 0.0) throw ConfigError(o.child("sigma"), "must be non-negative");
    if (d.tau < 0.0) throw ConfigError(o.child("tau"), "must be non-negative");
  } else if (kind == "stump-separable") {
    d.kind = DatasetSpec::Kind::kThresholdSeparable;
  } else if (kind == "csv") {
    d.kind = DatasetSpec::Kind::kCsv;
    d.path = o.required_text("path");
    if (!base_dir.empty() && std::filesystem::path(d.path).is_relative()) {
      d.path = (std::filesystem::path(base_dir) / d.path).string();
    }
    if (o.has("label_column")) {
      const auto& v = o.raw("label_column");
      if (v.is_string()) {
        d.label_column = v.get<std::string>();
      } else if (v.is_number_integer() && v.get<long long>() >= 0) {
        d.label_column = v.get<std::size_t>();
      } else {
        throw ConfigError(o.child("label_column"), "expected a column name or 0-based index");
      }
    }
    d.positive_label = o.text("positive_label", d.positive_label);
    d.standardize = o.flag("standardize", d.standardize);
  } else {
    throw ConfigError(o.child("kind"), "unknown dataset kind '" + kind + "'");
  }
  o.finish();
  return d;
}

GbtConfig parse_gbt(Obj o) {
  GbtConfig c;
  c.iterations = o.count("iterations", c.iterations);
  c.step = o.positive("step", c.step);
  c.depth = static_cast<int>(o.count("depth", static_cast<std::size_t>(c.depth)));
  if (c.depth < 1) throw ConfigError(o.child("depth"), "must be >= 1");
  c.leaf_clip = o.number("leaf_clip", c.leaf_clip);
  if (!(c.leaf_clip >= 1.0)) throw ConfigError(o.child("leaf_clip"), "must be >= 1");
  o.finish();
  return c;
}

KernelBoostConfig parse_kernel(Obj o) {
  KernelBoostConfig c;
  c.iterations = o.count("iterations", c.iterations);
  c.step = o.positive("step", c.step);
  const auto kind = o.text("kernel", "gaussian");
  if (kind == "gaussian") {
    c.kernel.kind = KernelKind::kGaussian;
  } else if (kind == "laplace") {
    c.kernel.kind = KernelKind::kLaplace;
  } else {
    throw ConfigError(o.child("kernel"), "expected 'gaussian' or 'laplace'");
  }
  c.kernel.bandwidth = o.positive("bandwidth", c.kernel.bandwidth);
  o.finish();
  return c;
}

Activation parse_activation(Obj& o, const std::string& key) {
  const auto a = o.text(key, "sigmoid");
  if (a == "sigmoid") return Activation::kSigmoid;
  if (a == "tanh") return Activation::kTanh;
  throw ConfigError(o.child(key), "expected 'sigmoid' or 'tanh'");
}

NnConfig parse_nn(Obj o) {
  NnConfig c;
  c.iterations = o.count("iterations", c.iterations);
  c.step = o.positive("step", c.step);
  c.beta = o.number("beta", c.beta);
  if (c.beta < 0.0 || c.beta > 1.0) throw ConfigError(o.child("beta"), "must lie in [0, 1]");
  c.hidden = o.count("hidden", c.hidden);
  if (c.hidden == 0 || c.hidden % 2 != 0) {
    throw ConfigError(o.child("hidden"), "must be positive and even");
  }
  c.activation = parse_activation(o, "activation");
  c.init_std = o.number("init_std", c.init_std);
  if (c.init_std < 0.0) throw ConfigError(o.child("init_std"), "must be non-negative");
  o.finish();
  return c;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
}

const char* learner_name(Learner l) {
  switch (l) {
    case Learner::kGbt: return "gbt";
    case Learner::kKernel: return "kernel";
    case Learner::kNn: return "nn";
  }
  return "";
}

const char* kMetricNames[kNumMetrics] = {"smooth_ce", "dual_smooth_ce", "binned_ece",
                                         "interval_ce", "mmce", "mean_abs_residual",
                                         "log_loss", "accuracy"};

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& base_dir) {
  const json root = parse_json(text);
  Obj o(root, "");
  ExperimentConfig c;
  c.name = o.text("name", c.name);

  const auto learner = o.required_text("learner");
  if (learner == "gbt") {
    c.learner = Learner::kGbt;
  } else if (learner == "kernel") {
    c.learner = Learner::kKernel;
  } else if (learner == "nn") {
    c.learner = Learner::kNn;
  } else {
    throw ConfigError("learner", "expected 'gbt', 'kernel' or 'nn'");
  }

  if (o.has("dataset")) c.dataset = parse_dataset(Obj(o.raw("dataset"), "dataset"), base_dir);

  c.n_train = o.count("n_train", c.n_train);
  if (o.has("n_test")) c.n_test = o.count("n_test", 0);

  if (!o.has("sweep")) throw ConfigError("sweep", "missing required field");
  {
    Obj s(o.raw("sweep"), "sweep");
    const auto axis = s.required_text("axis");
    if (axis == "T") {
      c.axis = SweepAxis::kIterations;
    } else if (axis == "n") {
      c.axis = SweepAxis::kSamples;
    } else {
      throw ConfigError("sweep.axis", "expected 'T' or 'n'");
    }
    if (!s.has("values")) throw ConfigError("sweep.values", "missing required field");
    const auto& vals = s.raw("values");
    if (!vals.is_array() || vals.empty()) {
      throw ConfigError("sweep.values", "expected a non-empty array");
    }
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const auto& v = vals[k];
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("sweep.values[" + std::to_string(k) + "]",
                          "expected a non-negative integer");
      }
      c.grid.push_back(v.get<std::size_t>());
    }
    for (std::size_t k = 1; k < c.grid.size(); ++k) {
      if (c.grid[k] <= c.grid[k - 1]) {
        throw ConfigError("sweep.values[" + std::to_string(k) + "]", "values must increase");
      }
    }
    if (s.has("t_schedule")) {
      const auto sched = s.text("t_schedule", "");
      if (sched != "sqrt_n") throw ConfigError("sweep.t_schedule", "only 'sqrt_n' is supported");
      if (c.axis != SweepAxis::kSamples) {
        throw ConfigError("sweep.t_schedule", "requires the n axis");
      }
      c.sqrt_n_coefficient = s.positive("c", 1.0);
    } else if (s.has("c")) {
      throw ConfigError("sweep.c", "only valid with t_schedule 'sqrt_n'");
    }
    s.finish();
  }
  if (c.axis == SweepAxis::kSamples) {
    for (std::size_t k = 0; k < c.grid.size(); ++k) {
      if (c.grid[k] == 0) {
        throw ConfigError("sweep.values[" + std::to_string(k) + "]", "sample sizes must be >= 1");
      }
    }
  } else if (c.n_train == 0) {
    throw ConfigError("n_train", "must be >= 1");
  }

  const char* section = learner_name(c.learner);
  for (const char* other : {"gbt", "kernel", "nn"}) {
    if (std::string(other) != section && o.has(other)) {
      throw ConfigError(other, std::string("section does not match learner '") + section + "'");
    }
  }
  if (o.has(section)) {
    const auto& sec = o.raw(section);
    switch (c.learner) {
      case Learner::kGbt: c.gbt = parse_gbt(Obj(sec, section)); break;
      case Learner::kKernel: c.kernel = parse_kernel(Obj(sec, section)); break;
      case Learner::kNn: c.nn = parse_nn(Obj(sec, section)); break;
    }
  }
  c.gbt.record_calibration = false;
  c.kernel.record_calibration = false;
  c.nn.record_calibration = false;

  const auto pred = o.text("predictor", "last");
  if (pred == "last") {
    c.predictor = PredictMode::kLast;
  } else if (pred == "average") {
    c.predictor = PredictMode::kAverage;
    if (c.learner == Learner::kNn) {
      throw ConfigError("predictor", "the network learner only supports 'last'");
    }
  } else {
    throw ConfigError("predictor", "expected 'last' or 'average'");
  }

  c.repeats = o.count("repeats", c.repeats);
  if (c.repeats < 1) throw ConfigError("repeats", "must be >= 1");
  c.seed_offset = o.count("seed_offset", 0);
  c.num_bins = o.count("num_bins", c.num_bins);
  if (c.num_bins < 1) throw ConfigError("num_bins", "must be >= 1");
  c.mmce_bandwidth = o.positive("mmce_bandwidth", c.mmce_bandwidth);
  c.output_dir = o.text("output_dir", "");
  o.finish();
  return c;
}

LearnerSpec parse_learner_spec(const std::string& text) {
  json root = parse_json(text);
  if (!root.is_object()) throw ConfigError("$", "expected an object");
  if (!root.contains("learner") || !root["learner"].is_string()) {
    throw ConfigError("learner", "missing required field");
  }
  const auto learner = root["learner"].get<std::string>();
  bool calibration = true;
  if (root.contains("record_calibration")) {
    if (!root["record_calibration"].is_boolean()) {
      throw ConfigError("record_calibration", "expected true or false");
    }
    calibration = root["record_calibration"].get<bool>();
  }
  root.erase("learner");
  root.erase("record_calibration");
  LearnerSpec spec;
  if (learner == "gbt") {
    spec.learner = Learner::kGbt;
    spec.gbt = parse_gbt(Obj(root, ""));
  } else if (learner == "kernel") {
    spec.learner = Learner::kKernel;
    spec.kernel = parse_kernel(Obj(root, ""));
  } else if (learner == "nn") {
    spec.learner = Learner::kNn;
    spec.nn = parse_nn(Obj(root, ""));
  } else {
    throw ConfigError("learner", "expected 'gbt', 'kernel' or 'nn'");
  }
  spec.gbt.record_calibration = spec.kernel.record_calibration = spec.nn.record_calibration =
      calibration;
  return spec;
}

std::size_t iterations_for(const ExperimentConfig& cfg, std::size_t grid_value) {
  if (cfg.axis == SweepAxis::kIterations) return grid_value;
  if (cfg.sqrt_n_coefficient) {
    const double t = std::round(*cfg.sqrt_n_coefficient * std::sqrt(static_cast<double>(grid_value)));
    return std::max<std::size_t>(1, static_cast<std::size_t>(t));
  }
  switch (cfg.learner) {
    case Learner::kGbt: return cfg.gbt.iterations;
    case Learner::kKernel: return cfg.kernel.iterations;
    case Learner::kNn: return cfg.nn.iterations;
  }
  return 0;
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("SMOOTHCAL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman needs equal-length inputs");
  const std::size_t n = x.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

namespace {

struct SplitData {
  Dataset train;
  Dataset test;
};

Dataset generate(const DatasetSpec& d, std::size_t n, std::uint64_t seed) {
  switch (d.kind) {
    case DatasetSpec::Kind::kGaussianToy: return gen_gaussian_toy(n, seed);
    case DatasetSpec::Kind::kMirroredToy: return gen_mirrored_toy(n, d.sigma, d.tau, seed);
    case DatasetSpec::Kind::kThresholdSeparable: return gen_threshold_separable(n, seed);
    case DatasetSpec::Kind::kCsv: break;
  }
  throw InternalError("generate called for a file dataset");
}

SplitData make_split(const ExperimentConfig& cfg, const Dataset* pool, std::size_t n_train,
                     std::size_t n_test, std::uint64_t seed) {
  if (cfg.dataset.kind != DatasetSpec::Kind::kCsv) {
    return {generate(cfg.dataset, n_train, derive_seed(seed, "train")),
            generate(cfg.dataset, n_test, derive_seed(seed, "test"))};
  }
  auto [tr, te] = split(*pool, {n_train, n_test, derive_seed(seed, "split")});
  if (!cfg.dataset.standardize) return {std::move(tr), std::move(te)};
  auto s = standardize(tr, te);
  return {std::move(s.train), std::move(s.test)};
}

MetricVector to_vector(const MetricReport& r) {
  return {r.smooth_ce, r.dual_smooth_ce.value_or(0.0), r.binned_ece, r.interval_ce,
          r.mmce,      r.mean_abs_residual,            r.log_loss,   r.accuracy};
}

MetricVector evaluate(const ExperimentConfig& cfg, std::vector<double> logits,
                      std::span<const int> labels) {
  LogitSet ls(std::move(logits), std::vector<int>(labels.begin(), labels.end()));
  return to_vector(metric_report(ls, cfg.num_bins, cfg.mmce_bandwidth));
}

struct Job {
  std::size_t first_cell = 0;  // index into grid
  std::size_t last_cell = 0;   // exclusive
  std::uint64_t seed = 0;
  std::size_t repeat = 0;
};

struct JobOutput {
  std::vector<CellRow> rows;  // pairs of (train, test) rows per grid cell
  std::vector<std::string> warnings;
};

void push_cell(JobOutput& out, const ExperimentConfig& cfg, std::size_t axis_value,
               std::size_t T, std::uint64_t seed, const SplitData& data,
               std::vector<double> train_logits, std::vector<double> test_logits) {
  CellRow tr, te;
  tr.axis_value = te.axis_value = axis_value;
  tr.n_train = te.n_train = data.train.size();
  tr.n_test = te.n_test = data.test.size();
  tr.iterations = te.iterations = T;
  tr.seed = te.seed = seed;
  te.test = true;
  tr.metrics = evaluate(cfg, std::move(train_logits), data.train.labels());
  if (!data.test.empty()) {
    te.metrics = evaluate(cfg, std::move(test_logits), data.test.labels());
  } else {
    te.metrics.fill(std::nan(""));
  }
  for (std::size_t k = 0; k < kNumMetrics; ++k) {
    tr.gaps[k] = te.gaps[k] = std::abs(tr.metrics[k] - te.metrics[k]);
  }
  out.rows.push_back(tr);
  out.rows.push_back(te);
}

std::vector<double> logits_or_empty(const Dataset& d, auto&& f) {
  if (d.empty()) return {};
  return f(d);
}

JobOutput run_job(const ExperimentConfig& cfg, const Dataset* pool, const Job& job) {
  JobOutput out;
  const bool t_axis = cfg.axis == SweepAxis::kIterations;
  auto test_size = [&](std::size_t n_train) -> std::size_t {
    if (cfg.n_test) return *cfg.n_test;
    if (cfg.dataset.kind != DatasetSpec::Kind::kCsv) return n_train;
    const std::size_t used = t_axis ? cfg.n_train : cfg.grid.back();
    return pool->size() > used ? pool->size() - used : 0;
  };

  if (t_axis) {
    // One model trained to the largest T; every grid value is a prefix.
    const std::size_t n = cfg.n_train;
    const auto data = make_split(cfg, pool, n, test_size(n), job.seed);
    const std::size_t T_max = cfg.grid[job.last_cell - 1];
    switch (cfg.learner) {
      case Learner::kGbt: {
        auto gc = cfg.gbt;
        gc.iterations = T_max;
        const auto model = gbt_train(data.train, gc);
        for (std::size_t k = job.first_cell; k < job.last_cell; ++k) {
          const std::size_t T = cfg.grid[k];
          auto f = [&](const Dataset& d) { return gbt_predict_logits(model, d, cfg.predictor, T); };
          push_cell(out, cfg, T, T, job.seed, data, f(data.train), logits_or_empty(data.test, f));
        }
        break;
      }
      case Learner::kKernel: {
        auto kc = cfg.kernel;
        kc.iterations = T_max;
        std::string warning;
        const auto model = kb_train(data.train, kc, &warning);
        if (!warning.empty()) out.warnings.push_back(warning);
        for (std::size_t k = job.first_cell; k < job.last_cell; ++k) {
          const std::size_t T = cfg.grid[k];
          auto f = [&](const Dataset& d) { return kb_predict_logits(model, d, cfg.predictor, T); };
          push_cell(out, cfg, T, T, job.seed, data, f(data.train), logits_or_empty(data.test, f));
        }
        break;
      }
      case Learner::kNn: {
        auto nc = cfg.nn;
        nc.iterations = T_max;
        nc.checkpoint_at = cfg.grid;
        const auto res = nn_train(data.train, nc, derive_seed(job.seed, "init"));
        out.warnings.insert(out.warnings.end(), res.warnings.begin(), res.warnings.end());
        for (std::size_t k = job.first_cell; k < job.last_cell; ++k) {
          const std::size_t T = cfg.grid[k];
          const auto it = std::find_if(res.checkpoints.begin(), res.checkpoints.end(),
                                       [T](const NnCheckpoint& c) { return c.t == T; });
          if (it == res.checkpoints.end()) throw InternalError("missing network checkpoint");
          auto f = [&](const Dataset& d) { return nn_forward(it->params, d); };
          push_cell(out, cfg, T, T, job.seed, data, f(data.train), logits_or_empty(data.test, f));
        }
        break;
      }
    }
    return out;
  }

  const std::size_t n = cfg.grid[job.first_cell];
  const std::size_t T = iterations_for(cfg, n);
  const auto data = make_split(cfg, pool, n, test_size(n), job.seed);
  switch (cfg.learner) {
    case Learner::kGbt: {
      auto gc = cfg.gbt;
      gc.iterations = T;
      const auto model = gbt_train(data.train, gc);
      auto f = [&](const Dataset& d) { return gbt_predict_logits(model, d, cfg.predictor); };
      push_cell(out, cfg, n, T, job.seed, data, f(data.train), logits_or_empty(data.test, f));
      break;
    }
    case Learner::kKernel: {
      auto kc = cfg.kernel;
      kc.iterations = T;
      std::string warning;
      const auto model = kb_train(data.train, kc, &warning);
      if (!warning.empty()) out.warnings.push_back(warning);
      auto f = [&](const Dataset& d) { return kb_predict_logits(model, d, cfg.predictor); };
      push_cell(out, cfg, n, T, job.seed, data, f(data.train), logits_or_empty(data.test, f));
      break;
    }
    case Learner::kNn: {
      auto nc = cfg.nn;
      nc.iterations = T;
      const auto res = nn_train(data.train, nc, derive_seed(job.seed, "init"));
      out.warnings.insert(out.warnings.end(), res.warnings.begin(), res.warnings.end());
      auto f = [&](const Dataset& d) { return nn_forward(res.final_params, d); };
      push_cell(out, cfg, n, T, job.seed, data, f(data.train), logits_or_empty(data.test, f));
      break;
    }
  }
  return out;
}

void summarize(SweepResult& r, const ExperimentConfig& cfg) {
  const std::size_t per_cell = cfg.repeats;
  for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
    for (int split = 0; split < 2; ++split) {
      SummaryRow s;
      s.test = split == 1;
      std::vector<const CellRow*> rows;
      for (const auto& c : r.cells) {
        if (c.axis_value == cfg.grid[k] && c.test == s.test) rows.push_back(&c);
      }
      if (rows.size() != per_cell) throw InternalError("sweep produced an incomplete cell");
      s.axis_value = cfg.grid[k];
      s.n_train = rows.front()->n_train;
      s.iterations = rows.front()->iterations;
      s.count = rows.size();
      const double cnt = static_cast<double>(rows.size());
      for (std::size_t m = 0; m < kNumMetrics; ++m) {
        double sum = 0.0, gsum = 0.0;
        for (const auto* c : rows) {
          sum += c->metrics[m];
          gsum += c->gaps[m];
        }
        s.mean[m] = sum / cnt;
        s.gap_mean[m] = gsum / cnt;
        double ss = 0.0, gss = 0.0;
        for (const auto* c : rows) {
          ss += (c->metrics[m] - s.mean[m]) * (c->metrics[m] - s.mean[m]);
          gss += (c->gaps[m] - s.gap_mean[m]) * (c->gaps[m] - s.gap_mean[m]);
        }
        s.stddev[m] = rows.size() > 1 ? std::sqrt(ss / (cnt - 1.0)) : 0.0;
        s.gap_stddev[m] = rows.size() > 1 ? std::sqrt(gss / (cnt - 1.0)) : 0.0;
      }
      r.summary.push_back(s);
    }
  }

  auto trend = [&](bool test, std::size_t metric) {
    std::vector<double> x, y;
    for (const auto& s : r.summary) {
      if (s.test != test) continue;
      x.push_back(static_cast<double>(s.axis_value));
      y.push_back(s.mean[metric]);
    }
    return spearman(x, y);
  };
  r.trends.spearman_train_smooth_ce = trend(false, 0);
  r.trends.spearman_test_smooth_ce = trend(true, 0);
  r.trends.spearman_train_log_loss = trend(false, 6);
  r.trends.spearman_test_log_loss = trend(true, 6);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg, unsigned threads) {
  if (cfg.grid.empty()) throw ConfigError("sweep.values", "expected a non-empty array");
  if (cfg.repeats < 1) throw ConfigError("repeats", "must be >= 1");

  Dataset pool;
  if (cfg.dataset.kind == DatasetSpec::Kind::kCsv) {
    pool = load_csv(cfg.dataset.path, cfg.dataset.label_column, cfg.dataset.positive_label);
    const std::size_t n_max = cfg.axis == SweepAxis::kSamples ? cfg.grid.back() : cfg.n_train;
    const std::size_t need = n_max + cfg.n_test.value_or(0);
    if (need > pool.size()) {
      throw ConfigError(cfg.axis == SweepAxis::kSamples ? "sweep.values" : "n_train",
                        "needs " + std::to_string(need) + " rows but the file has " +
                            std::to_string(pool.size()));
    }
  }

  std::vector<Job> jobs;
  if (cfg.axis == SweepAxis::kIterations) {
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      jobs.push_back({0, cfg.grid.size(), cfg.seed_offset + r, r});
    }
  } else {
    for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        jobs.push_back({k, k + 1, cfg.seed_offset + r, r});
      }
    }
  }

  if (threads == 0) threads = default_thread_count();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));

  std::vector<JobOutput> outputs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        outputs[j] = run_job(cfg, &pool, jobs[j]);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (unsigned t = 0; t < threads; ++t) pool_threads.emplace_back(worker);
    for (auto& t : pool_threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Assemble grid-major, then seed, then train/test.
  SweepResult r;
  for (std::size_t k = 0; k < cfg.grid.size(); ++k) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      if (k < jobs[j].first_cell || k >= jobs[j].last_cell) continue;
      const std::size_t off = 2 * (k - jobs[j].first_cell);
      r.cells.push_back(outputs[j].rows[off]);
      r.cells.push_back(outputs[j].rows[off + 1]);
    }
  }
  for (const auto& o : outputs) {
    for (const auto& w : o.warnings) {
      if (std::find(r.warnings.begin(), r.warnings.end(), w) == r.warnings.end()) {
        r.warnings.push_back(w);
      }
    }
  }
  summarize(r, cfg);
  return r;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

namespace {

const char* axis_name(const ExperimentConfig& cfg) {
  return cfg.axis == SweepAxis::kIterations ? "T" : "n";
}

}  // namespace

std::string cells_csv(const SweepResult& r, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "axis,axis_value,n_train,n_test,T,seed,split";
  for (const char* m : kMetricNames) os << ',' << m;
  for (const char* m : kMetricNames) os << ",gap_" << m;
  os << '\n';
  for (const auto& c : r.cells) {
    os << axis_name(cfg) << ',' << c.axis_value << ',' << c.n_train << ',' << c.n_test << ','
       << c.iterations << ',' << c.seed << ',' << (c.test ? "test" : "train");
    for (double v : c.metrics) os << ',' << num(v);
    for (double v : c.gaps) os << ',' << num(v);
    os << '\n';
  }
  return os.str();
}

std::string summary_csv(const SweepResult& r, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "axis,axis_value,n_train,T,split,count";
  for (const char* m : kMetricNames) os << ',' << m << "_mean," << m << "_std";
  for (const char* m : kMetricNames) os << ",gap_" << m << "_mean,gap_" << m << "_std";
  os << '\n';
  for (const auto& s : r.summary) {
    os << axis_name(cfg) << ',' << s.axis_value << ',' << s.n_train << ',' << s.iterations << ','
       << (s.test ? "test" : "train") << ',' << s.count;
    for (std::size_t m = 0; m < kNumMetrics; ++m) os << ',' << num(s.mean[m]) << ',' << num(s.stddev[m]);
    for (std::size_t m = 0; m < kNumMetrics; ++m) {
      os << ',' << num(s.gap_mean[m]) << ',' << num(s.gap_stddev[m]);
    }
    os << '\n';
  }
  return os.str();
}

std::string trends_json(const SweepResult& r, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  j["learner"] = learner_name(cfg.learner);
  j["axis"] = axis_name(cfg);
  j["grid"] = cfg.grid;
  j["repeats"] = cfg.repeats;
  j["spearman_train_smooth_ce"] = r.trends.spearman_train_smooth_ce;
  j["spearman_test_smooth_ce"] = r.trends.spearman_test_smooth_ce;
  j["spearman_train_log_loss"] = r.trends.spearman_train_log_loss;
  j["spearman_test_log_loss"] = r.trends.spearman_test_log_loss;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

void write_sweep_outputs(const SweepResult& r, const ExperimentConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  auto write = [&](const char* name, const std::string& body) {
    const auto path = fs::path(dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << body;
    if (!f) throw IoError("failed writing " + path.string());
  };
  write("cells.csv", cells_csv(r, cfg));
  write("summary.csv", summary_csv(r, cfg));
  write("trends.json", trends_json(r, cfg));
}

// ---------------------------------------------------------------------------
// Bounds report
// ---------------------------------------------------------------------------

namespace {

struct MeasureSpec {
  DatasetSpec dataset;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  int depth = 1;
  KernelSpec kernel;
  Activation activation = Activation::kSigmoid;
  double init_std = 1.0;
};

}  // namespace

std::string bounds_report(const std::string& text) {
  const json root = parse_json(text);
  Obj o(root, "");

  BoundInputs in;
  std::optional<Activation> act;
  if (o.has("inputs")) {
    Obj i(o.raw("inputs"), "inputs");
    in.gamma = i.positive("gamma", in.gamma);
    in.B = i.number("B", in.B);
    if (!(in.B >= 1.0)) throw ConfigError("inputs.B", "must be >= 1");
    in.w = i.positive("w", in.w);
    in.T = i.positive("T", in.T);
    in.L0 = i.positive("L0", in.L0);
    in.Lambda = i.positive("Lambda", in.Lambda);
    in.m = i.positive("m", in.m);
    in.beta = i.number("beta", in.beta);
    if (in.beta < 0.0 || in.beta > 1.0) throw ConfigError("inputs.beta", "must lie in [0, 1]");
    if (i.has("activation")) {
      act = parse_activation(i, "activation");
      const auto kb = activation_bounds(*act);
      in.K1 = kb.k1;
      in.K2 = kb.k2;
    }
    in.K1 = i.positive("K1", in.K1);
    in.K2 = i.positive("K2", in.K2);
    i.finish();
  }

  std::vector<std::string> names{"gbt", "kernel", "nn"};
  if (o.has("bounds")) {
    const auto& b = o.raw("bounds");
    if (!b.is_array()) throw ConfigError("bounds", "expected an array of names");
    names.clear();
    for (std::size_t k = 0; k < b.size(); ++k) {
      const std::string path = "bounds[" + std::to_string(k) + "]";
      if (!b[k].is_string()) throw ConfigError(path, "expected a string");
      const auto s = b[k].get<std::string>();
      if (s != "gbt" && s != "kernel" && s != "nn") {
        throw ConfigError(path, "unknown bound '" + s + "'");
      }
      names.push_back(s);
    }
  }
  const bool user_certified = o.flag("gamma_certified", false);

  std::optional<MeasureSpec> measure;
  if (o.has("measure")) {
    Obj m(o.raw("measure"), "measure");
    MeasureSpec ms;
    if (!m.has("dataset")) throw ConfigError("measure.dataset", "missing required field");
    ms.dataset = parse_dataset(Obj(m.raw("dataset"), "measure.dataset"), "");
    if (ms.dataset.kind == DatasetSpec::Kind::kCsv) {
      throw ConfigError("measure.dataset.kind", "file datasets are not supported here");
    }
    ms.n = m.count("n", ms.n);
    if (ms.n < 1) throw ConfigError("measure.n", "must be >= 1");
    ms.seed = m.count("seed", 0);
    ms.depth = static_cast<int>(m.count("depth", 1));
    if (ms.depth < 1) throw ConfigError("measure.depth", "must be >= 1");
    const auto kernel = m.text("kernel", "gaussian");
    if (kernel == "gaussian") {
      ms.kernel.kind = KernelKind::kGaussian;
    } else if (kernel == "laplace") {
      ms.kernel.kind = KernelKind::kLaplace;
    } else {
      throw ConfigError("measure.kernel", "expected 'gaussian' or 'laplace'");
    }
    ms.kernel.bandwidth = m.positive("bandwidth", 1.0);
    ms.init_std = m.number("init_std", 1.0);
    ms.activation = act.value_or(Activation::kSigmoid);
    m.finish();
    measure = ms;
  }
  o.finish();

  nlohmann::ordered_json inputs;
  inputs["gamma"] = in.gamma;
  inputs["B"] = in.B;
  inputs["w"] = in.w;
  inputs["T"] = in.T;
  inputs["L0"] = in.L0;
  inputs["Lambda"] = in.Lambda;
  inputs["m"] = in.m;
  inputs["beta"] = in.beta;
  inputs["K1"] = in.K1;
  inputs["K2"] = in.K2;

  const auto whole = [](double v, const char* path) {
    if (v != std::floor(v) || v < 1.0) throw ConfigError(path, "must be a positive integer");
    return static_cast<std::size_t>(v);
  };

  std::optional<Dataset> train;
  if (measure) train = generate(measure->dataset, measure->n, derive_seed(measure->seed, "train"));

  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  for (const auto& name : names) {
    nlohmann::ordered_json e;
    std::vector<std::string> warnings;
    double bound = 0.0;
    std::optional<double> measured;
    bool certified = user_certified;
    if (name == "gbt") {
      e["bound_name"] = "gbt_averaged_dual_smooth_ce";
      bound = gbt_training_bound(in);
      if (train) {
        GbtConfig gc;
        gc.iterations = whole(in.T, "inputs.T");
        gc.step = in.w;
        gc.leaf_clip = in.B;
        gc.depth = measure->depth;
        gc.record_calibration = false;
        const auto model = gbt_train(*train, gc);
        const auto g = gbt_predict_logits(model, *train, PredictMode::kAverage);
        measured = dual_smooth_ce(LogitSet(g, {train->labels().begin(), train->labels().end()}));
        // A separating stump certifies gamma = 1, and greedy fitting is exact
        // for depth-1 trees.
        const auto sm = verify_stump_margin(*train);
        if (sm.holds && measure->depth == 1 && in.gamma <= 1.0) certified = true;
      }
      const auto sched = suggest_gbt_schedule(in);
      e["suggested_schedule"] = {{"non_normative", true},
                                 {"c", sched.c},
                                 {"step", sched.step},
                                 {"bound_at_step", sched.bound_at_step}};
    } else if (name == "kernel") {
      e["bound_name"] = "kernel_averaged_dual_smooth_ce";
      std::string warning;
      bound = kernel_training_bound(in, &warning);
      if (!warning.empty()) warnings.push_back(warning);
      if (train) {
        KernelBoostConfig kc;
        kc.kernel = measure->kernel;
        kc.step = in.w;
        kc.iterations = whole(in.T, "inputs.T");
        kc.record_calibration = false;
        std::string w2;
        const auto model = kb_train(*train, kc, &w2);
        const auto g = kb_predict_logits(model, *train, PredictMode::kAverage);
        measured = dual_smooth_ce(LogitSet(g, {train->labels().begin(), train->labels().end()}));
      }
    } else {
      e["bound_name"] = "nn_min_dual_smooth_ce";
      bound = nn_training_bound(in);
      const auto aw = nn_admissibility_warnings(in, train ? train->size() : 0);
      warnings.insert(warnings.end(), aw.begin(), aw.end());
      if (train) {
        NnConfig nc;
        nc.iterations = whole(in.T, "inputs.T");
        nc.step = in.w;
        nc.beta = in.beta;
        nc.hidden = whole(in.m, "inputs.m");
        if (nc.hidden % 2 != 0) throw ConfigError("inputs.m", "must be even");
        nc.activation = measure->activation;
        nc.init_std = measure->init_std;
        nc.record_calibration = true;
        const auto res = nn_train(*train, nc, derive_seed(measure->seed, "init"));
        measured = res.min_dual_smce;
      }
    }
    e["inputs"] = inputs;
    e["bound_value"] = bound;
    if (measured) {
      e["measured_value"] = *measured;
    } else {
      e["measured_value"] = nullptr;
    }
    if (measured && certified) {
      e["dominated"] = *measured <= bound + 1e-9;
    } else {
      e["dominated"] = "uncertified";
    }
    e["warnings"] = warnings;
    report.push_back(e);
  }
  return report.dump(2) + "\n";
}

}  // namespace smoothcal
