#include "smoothcal/smoothcal.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "smoothcal/bounds.hpp"
#include "smoothcal/dataset.hpp"
#include "smoothcal/error.hpp"
#include "smoothcal/experiment.hpp"
#include "smoothcal/gbt.hpp"
#include "smoothcal/kernel_boost.hpp"
#include "smoothcal/metrics.hpp"
#include "smoothcal/two_layer_nn.hpp"

using namespace smoothcal;

struct smoothcal_dataset {
  Dataset data;
};

struct smoothcal_model {
  std::variant<GbtModel, KernelModel, NnTrainResult> model;
};

namespace {

thread_local std::string g_last_error;
thread_local std::size_t g_last_line = 0;

smoothcal_status fail(smoothcal_status s, const std::string& msg, std::size_t line = 0) {
  g_last_error = msg;
  g_last_line = line;
  return s;
}

template <class F>
smoothcal_status guarded(F&& f) {
  g_last_error.clear();
  g_last_line = 0;
  try {
    f();
    return SMOOTHCAL_OK;
  } catch (const LoadError& e) {
    return fail(SMOOTHCAL_LOAD_ERROR, e.what(), e.row());
  } catch (const InvalidArgument& e) {
    return fail(SMOOTHCAL_INVALID_ARGUMENT, e.what());
  } catch (const SizeError& e) {
    return fail(SMOOTHCAL_SIZE_ERROR, e.what());
  } catch (const IoError& e) {
    return fail(SMOOTHCAL_IO_ERROR, e.what());
  } catch (const std::bad_alloc&) {
    return fail(SMOOTHCAL_SIZE_ERROR, "out of memory");
  } catch (const std::exception& e) {
    return fail(SMOOTHCAL_INTERNAL_ERROR, e.what());
  } catch (...) {
    return fail(SMOOTHCAL_INTERNAL_ERROR, "unknown failure");
  }
}

void need(const void* p, const char* name) {
  if (!p) throw InvalidArgument(std::string(name) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

PredictionSet preds(const double* v, const int* y, size_t n) {
  need(v, "probs");
  need(y, "labels");
  return {std::vector<double>(v, v + n), std::vector<int>(y, y + n)};
}

LogitSet logit_set(const double* v, const int* y, size_t n) {
  need(v, "logits");
  need(y, "labels");
  return {std::vector<double>(v, v + n), std::vector<int>(y, y + n)};
}

smoothcal_metric_report to_c(const MetricReport& r) {
  smoothcal_metric_report c{};
  c.smooth_ce = r.smooth_ce;
  c.has_dual_smooth_ce = r.dual_smooth_ce.has_value() ? 1 : 0;
  c.dual_smooth_ce = r.dual_smooth_ce.value_or(0.0);
  c.binned_ece = r.binned_ece;
  c.interval_ce = r.interval_ce;
  c.mmce = r.mmce;
  c.mean_abs_residual = r.mean_abs_residual;
  c.log_loss = r.log_loss;
  c.accuracy = r.accuracy;
  return c;
}

MetricReport from_c(const smoothcal_metric_report& c) {
  MetricReport r;
  r.smooth_ce = c.smooth_ce;
  if (c.has_dual_smooth_ce) r.dual_smooth_ce = c.dual_smooth_ce;
  r.binned_ece = c.binned_ece;
  r.interval_ce = c.interval_ce;
  r.mmce = c.mmce;
  r.mean_abs_residual = c.mean_abs_residual;
  r.log_loss = c.log_loss;
  r.accuracy = c.accuracy;
  return r;
}

smoothcal_dataset* wrap(Dataset d) { return new smoothcal_dataset{std::move(d)}; }

std::string read_file(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open '") + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

extern "C" {

const char* smoothcal_version(void) { return "0.1.0"; }
const char* smoothcal_last_error(void) { return g_last_error.c_str(); }
size_t smoothcal_last_error_line(void) { return g_last_line; }
void smoothcal_free_string(char* s) { std::free(s); }

smoothcal_status smoothcal_smooth_ce(const double* probs, const int* labels, size_t n,
                                     double* out) {
  return guarded([&] {
    need(out, "out");
    *out = smooth_ce(preds(probs, labels, n));
  });
}

smoothcal_status smoothcal_dual_smooth_ce(const double* logits, const int* labels, size_t n,
                                          double* out) {
  return guarded([&] {
    need(out, "out");
    *out = dual_smooth_ce(logit_set(logits, labels, n));
  });
}

smoothcal_status smoothcal_smooth_ce_grid_oracle(const double* probs, const int* labels, size_t n,
                                                 double step, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = smooth_ce_grid_oracle(preds(probs, labels, n), step);
  });
}

smoothcal_status smoothcal_binned_ece(const double* probs, const int* labels, size_t n,
                                      size_t num_bins, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = binned_ece(preds(probs, labels, n), num_bins);
  });
}

smoothcal_status smoothcal_interval_ce(const double* probs, const int* labels, size_t n,
                                       double* out) {
  return guarded([&] {
    need(out, "out");
    *out = interval_ce(preds(probs, labels, n));
  });
}

smoothcal_status smoothcal_mmce(const double* probs, const int* labels, size_t n,
                                double bandwidth, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = mmce(preds(probs, labels, n), bandwidth);
  });
}

smoothcal_status smoothcal_l1_grad_norm(const double* logits, const int* labels, size_t n,
                                        double* out) {
  return guarded([&] {
    need(out, "out");
    *out = l1_grad_norm(logit_set(logits, labels, n));
  });
}

smoothcal_status smoothcal_metric_report_compute(const double* values, const int* labels, size_t n,
                                                 int logit_mode, size_t num_bins,
                                                 double mmce_bandwidth,
                                                 smoothcal_metric_report* out) {
  return guarded([&] {
    need(out, "out");
    *out = to_c(logit_mode ? metric_report(logit_set(values, labels, n), num_bins, mmce_bandwidth)
                           : metric_report(preds(values, labels, n), num_bins, mmce_bandwidth));
  });
}

smoothcal_status smoothcal_metric_report_json(const smoothcal_metric_report* r, char** json_out) {
  return guarded([&] {
    need(r, "report");
    need(json_out, "json_out");
    *json_out = dup(to_json(from_c(*r)));
  });
}

smoothcal_status smoothcal_metric_report_csv_row(const smoothcal_metric_report* r,
                                                 char** row_out) {
  return guarded([&] {
    need(r, "report");
    need(row_out, "row_out");
    *row_out = dup(to_csv_row(from_c(*r)));
  });
}

const char* smoothcal_metric_report_columns(void) { return kMetricReportColumns; }

smoothcal_status smoothcal_metrics_from_csv(const char* path, int logit_mode,
                                            smoothcal_metric_report* out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto cols = read_value_label_csv(path, logit_mode != 0);
    *out = to_c(logit_mode ? metric_report(LogitSet(std::move(cols.values), std::move(cols.labels)))
                           : metric_report(PredictionSet(std::move(cols.values),
                                                         std::move(cols.labels))));
  });
}

smoothcal_status smoothcal_dataset_gaussian_toy(size_t n, uint64_t seed, smoothcal_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = wrap(gen_gaussian_toy(n, seed));
  });
}

smoothcal_status smoothcal_dataset_mirrored_toy(size_t n, double sigma, double tau, uint64_t seed,
                                                smoothcal_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = wrap(gen_mirrored_toy(n, sigma, tau, seed));
  });
}

smoothcal_status smoothcal_dataset_threshold_separable(size_t n, uint64_t seed,
                                                       smoothcal_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = wrap(gen_threshold_separable(n, seed));
  });
}

smoothcal_status smoothcal_dataset_load_csv(const char* path, const char* label_name,
                                            size_t label_index, const char* positive_label,
                                            smoothcal_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(positive_label, "positive_label");
    need(out, "out");
    ColumnRef col = label_name ? ColumnRef(std::string(label_name)) : ColumnRef(label_index);
    *out = wrap(load_csv(path, col, positive_label));
  });
}

smoothcal_status smoothcal_dataset_from_arrays(const double* features, const int* labels, size_t n,
                                               size_t dim, smoothcal_dataset** out) {
  return guarded([&] {
    need(features, "features");
    need(labels, "labels");
    need(out, "out");
    *out = wrap(Dataset(dim, std::vector<double>(features, features + n * dim),
                        std::vector<int>(labels, labels + n)));
  });
}

smoothcal_status smoothcal_dataset_shape(const smoothcal_dataset* d, size_t* n, size_t* dim) {
  return guarded([&] {
    need(d, "dataset");
    if (n) *n = d->data.size();
    if (dim) *dim = d->data.dim();
  });
}

smoothcal_status smoothcal_dataset_labels(const smoothcal_dataset* d, int* labels) {
  return guarded([&] {
    need(d, "dataset");
    need(labels, "labels");
    std::copy(d->data.labels().begin(), d->data.labels().end(), labels);
  });
}

smoothcal_status smoothcal_dataset_split(const smoothcal_dataset* d, size_t n_train, size_t n_test,
                                         uint64_t seed, smoothcal_dataset** train,
                                         smoothcal_dataset** test) {
  return guarded([&] {
    need(d, "dataset");
    need(train, "train");
    need(test, "test");
    auto [tr, te] = split(d->data, {n_train, n_test, seed});
    auto a = std::make_unique<smoothcal_dataset>(smoothcal_dataset{std::move(tr)});
    auto b = std::make_unique<smoothcal_dataset>(smoothcal_dataset{std::move(te)});
    *train = a.release();
    *test = b.release();
  });
}

void smoothcal_dataset_free(smoothcal_dataset* d) { delete d; }

smoothcal_status smoothcal_train(const smoothcal_dataset* train, const char* config_json,
                                 uint64_t seed, smoothcal_model** out) {
  return guarded([&] {
    need(train, "train");
    need(config_json, "config_json");
    need(out, "out");
    const auto spec = parse_learner_spec(config_json);
    auto m = std::make_unique<smoothcal_model>();
    switch (spec.learner) {
      case Learner::kGbt: m->model = gbt_train(train->data, spec.gbt); break;
      case Learner::kKernel: m->model = kb_train(train->data, spec.kernel); break;
      case Learner::kNn: m->model = nn_train(train->data, spec.nn, seed); break;
    }
    *out = m.release();
  });
}

smoothcal_status smoothcal_model_predict(const smoothcal_model* m, const smoothcal_dataset* data,
                                         int average, double* logits_out) {
  return guarded([&] {
    need(m, "model");
    need(data, "data");
    need(logits_out, "logits_out");
    const auto mode = average ? PredictMode::kAverage : PredictMode::kLast;
    std::vector<double> g;
    if (const auto* gm = std::get_if<GbtModel>(&m->model)) {
      g = gbt_predict_logits(*gm, data->data, mode);
    } else if (const auto* km = std::get_if<KernelModel>(&m->model)) {
      g = kb_predict_logits(*km, data->data, mode);
    } else {
      if (average) throw InvalidArgument("the network learner has no averaged predictor");
      g = nn_forward(std::get<NnTrainResult>(m->model).final_params, data->data);
    }
    std::copy(g.begin(), g.end(), logits_out);
  });
}

smoothcal_status smoothcal_model_to_json(const smoothcal_model* m, char** json_out) {
  return guarded([&] {
    need(m, "model");
    need(json_out, "json_out");
    if (const auto* gm = std::get_if<GbtModel>(&m->model)) {
      *json_out = dup(gbt_to_json(*gm));
    } else if (const auto* km = std::get_if<KernelModel>(&m->model)) {
      *json_out = dup(kb_to_json(*km));
    } else {
      *json_out = dup(nn_to_json(std::get<NnTrainResult>(m->model).final_params));
    }
  });
}

smoothcal_status smoothcal_model_trace_csv(const smoothcal_model* m, char** csv_out) {
  return guarded([&] {
    need(m, "model");
    need(csv_out, "csv_out");
    if (const auto* gm = std::get_if<GbtModel>(&m->model)) {
      *csv_out = dup(gbt_trace_csv(*gm));
    } else if (const auto* km = std::get_if<KernelModel>(&m->model)) {
      *csv_out = dup(kb_trace_csv(*km));
    } else {
      GbtModel shim;
      shim.trace = std::get<NnTrainResult>(m->model).trace;
      *csv_out = dup(gbt_trace_csv(shim));
    }
  });
}

void smoothcal_model_free(smoothcal_model* m) { delete m; }

smoothcal_status smoothcal_sweep(const char* config_path, const char* output_dir, unsigned threads,
                                 char** trends_json_out) {
  return guarded([&] {
    need(config_path, "config_path");
    const auto base = std::filesystem::path(config_path).parent_path().string();
    const auto cfg = parse_experiment_config(read_file(config_path), base);
    std::string dir = output_dir ? output_dir : cfg.output_dir;
    if (dir.empty()) dir = "results/" + cfg.name;
    const auto result = run_sweep(cfg, threads);
    write_sweep_outputs(result, cfg, dir);
    if (trends_json_out) *trends_json_out = dup(trends_json(result, cfg));
  });
}

smoothcal_status smoothcal_verify(const char* suite, uint64_t seed, size_t count, int* ok_out,
                                  char** report_json_out) {
  return guarded([&] {
    need(suite, "suite");
    const auto rep = run_verification(suite, seed, count);
    if (ok_out) *ok_out = rep.ok() ? 1 : 0;
    if (report_json_out) *report_json_out = dup(to_json(rep));
  });
}

smoothcal_status smoothcal_bounds_report(const char* inputs_json, char** report_json_out) {
  return guarded([&] {
    need(inputs_json, "inputs_json");
    need(report_json_out, "report_json_out");
    *report_json_out = dup(bounds_report(inputs_json));
  });
}

}  // extern "C"
