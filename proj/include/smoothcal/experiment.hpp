#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smoothcal/dataset.hpp"
#include "smoothcal/error.hpp"
#include "smoothcal/gbt.hpp"
#include "smoothcal/kernel_boost.hpp"
#include "smoothcal/metrics.hpp"
#include "smoothcal/two_layer_nn.hpp"

namespace smoothcal {

/// Config validation failure; the message starts with the JSON field path.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : InvalidArgument(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

enum class Learner { kGbt, kKernel, kNn };

struct DatasetSpec {
  enum class Kind { kGaussianToy, kMirroredToy, kThresholdSeparable, kCsv };
  Kind kind = Kind::kGaussianToy;
  double sigma = 0.05;  // mirrored toy
  double tau = 0.01;    // mirrored toy
  // csv
  std::string path;
  ColumnRef label_column = std::string("label");
  std::string positive_label = "1";
  bool standardize = true;
};

enum class SweepAxis { kIterations, kSamples };

struct ExperimentConfig {
  std::string name = "sweep";
  Learner learner = Learner::kGbt;
  DatasetSpec dataset;
  std::size_t n_train = 200;
  std::optional<std::size_t> n_test;  // defaults: n_train for generators, rest for CSV
  SweepAxis axis = SweepAxis::kIterations;
  std::vector<std::size_t> grid;
  // n-axis only: T = max(1, round(c * sqrt(n))) when set.
  std::optional<double> sqrt_n_coefficient;
  GbtConfig gbt;
  KernelBoostConfig kernel;
  NnConfig nn;
  PredictMode predictor = PredictMode::kLast;
  std::size_t repeats = 10;
  std::uint64_t seed_offset = 0;
  std::size_t num_bins = 10;
  double mmce_bandwidth = 1.0;
  std::string output_dir;
};

/// Parses and validates a JSON config (see docs/formats.md). Relative CSV
/// paths are resolved against `base_dir` when it is non-empty.
ExperimentConfig parse_experiment_config(const std::string& json,
                                         const std::string& base_dir = "");

/// Stand-alone learner settings: {"learner": ..., "record_calibration": bool,
/// ...learner-section fields}.
struct LearnerSpec {
  Learner learner = Learner::kGbt;
  GbtConfig gbt;
  KernelBoostConfig kernel;
  NnConfig nn;
};
LearnerSpec parse_learner_spec(const std::string& json);

/// Iteration count a learner uses for a given grid value.
std::size_t iterations_for(const ExperimentConfig& cfg, std::size_t grid_value);

inline constexpr std::size_t kNumMetrics = 8;
using MetricVector = std::array<double, kNumMetrics>;  // kMetricReportColumns order

struct CellRow {
  std::size_t axis_value = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  bool test = false;
  MetricVector metrics{};
  MetricVector gaps{};  // |train - test|, identical on the paired rows
};

struct SummaryRow {
  std::size_t axis_value = 0;
  std::size_t n_train = 0;
  std::size_t iterations = 0;
  bool test = false;
  std::size_t count = 0;
  MetricVector mean{};
  MetricVector stddev{};  // sample standard deviation (0 for one repeat)
  MetricVector gap_mean{};
  MetricVector gap_stddev{};
};

struct SweepTrends {
  double spearman_train_smooth_ce = 0.0;
  double spearman_test_smooth_ce = 0.0;
  double spearman_train_log_loss = 0.0;
  double spearman_test_log_loss = 0.0;
};

struct SweepResult {
  std::vector<CellRow> cells;       // grid-major, then seed, then train/test
  std::vector<SummaryRow> summary;  // grid-major, then train/test
  SweepTrends trends;
  std::vector<std::string> warnings;
};

/// Runs every (grid value, seed) cell. Cells run on up to `threads` workers
/// (0 = SMOOTHCAL_THREADS or hardware concurrency); results do not depend on
/// the thread count.
SweepResult run_sweep(const ExperimentConfig& cfg, unsigned threads = 0);

std::string cells_csv(const SweepResult& r, const ExperimentConfig& cfg);
std::string summary_csv(const SweepResult& r, const ExperimentConfig& cfg);
std::string trends_json(const SweepResult& r, const ExperimentConfig& cfg);

/// Writes cells.csv, summary.csv and trends.json into `dir` (created if
/// missing).
void write_sweep_outputs(const SweepResult& r, const ExperimentConfig& cfg,
                         const std::string& dir);

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Worker count from SMOOTHCAL_THREADS, else hardware concurrency (>= 1).
unsigned default_thread_count();

// ---------------------------------------------------------------------------
// Verification suites
// ---------------------------------------------------------------------------

struct VerificationFailure {
  std::size_t instance = 0;
  std::uint64_t seed = 0;
  std::string detail;
};

struct VerificationReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  double worst = 0.0;  // largest observed error statistic for the suite
  std::vector<VerificationFailure> failures;
  std::vector<std::string> notes;

  bool ok() const noexcept { return failed == 0; }
};

/// Suites: "oracle", "descent", "bounds", "gradients". Each instance derives
/// its own seed from (seed, instance) and failures list that seed.
VerificationReport run_verification(const std::string& suite, std::uint64_t seed,
                                    std::size_t count);
std::string to_json(const VerificationReport& r);

/// Relative finite-difference error of the network gradient on one random
/// instance: max_k |analytic - central| / (|analytic| + 1e-8).
double nn_gradient_check(std::uint64_t seed, double h = 1e-5);

// ---------------------------------------------------------------------------
// Bounds report
// ---------------------------------------------------------------------------

/// Evaluates the requested training bounds for an inputs document and, when
/// a "measure" block is present, trains the matching learner and compares.
/// Returns a JSON array of {bound_name, inputs, bound_value, measured_value,
/// dominated, warnings}.
std::string bounds_report(const std::string& inputs_json);

}  // namespace smoothcal
