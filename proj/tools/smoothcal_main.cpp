// smoothcal command-line front end. Everything goes through the C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "smoothcal/smoothcal.h"

namespace {

constexpr int kExitError = 2;
constexpr int kExitCheckFailed = 1;

int report_error(const std::string& context) {
  std::cerr << "smoothcal: " << context;
  const char* msg = smoothcal_last_error();
  if (msg && *msg) std::cerr << ": " << msg;
  std::cerr << '\n';
  return kExitError;
}

// Takes ownership of a library string.
std::string take(char* s) {
  std::string out = s ? s : "";
  smoothcal_free_string(s);
  return out;
}

int run_metrics(const std::string& input, const std::string& mode, bool csv) {
  const std::string path = input == "-" ? "/dev/stdin" : input;
  smoothcal_metric_report r{};
  if (smoothcal_metrics_from_csv(path.c_str(), mode == "logit", &r) != SMOOTHCAL_OK) {
    return report_error(input);
  }
  char* text = nullptr;
  const auto st = csv ? smoothcal_metric_report_csv_row(&r, &text)
                      : smoothcal_metric_report_json(&r, &text);
  if (st != SMOOTHCAL_OK) return report_error("formatting report");
  if (csv) std::cout << smoothcal_metric_report_columns() << '\n';
  std::cout << take(text) << '\n';
  return 0;
}

int run_sweep(const std::string& config, const std::string& out_dir, unsigned threads) {
  char* trends = nullptr;
  if (smoothcal_sweep(config.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), threads,
                      &trends) != SMOOTHCAL_OK) {
    return report_error(config);
  }
  std::cout << take(trends);
  return 0;
}

int run_verify(const std::string& suite, std::uint64_t seed, std::size_t count) {
  int ok = 0;
  char* report = nullptr;
  if (smoothcal_verify(suite.c_str(), seed, count, &ok, &report) != SMOOTHCAL_OK) {
    return report_error("verify");
  }
  std::cout << take(report);
  if (!ok) {
    std::cerr << "smoothcal: suite '" << suite << "' had failures\n";
    return kExitCheckFailed;
  }
  return 0;
}

int run_bounds(const std::string& inputs) {
  std::string text = inputs;
  const auto first = inputs.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || inputs[first] != '{') {
    std::ifstream in(inputs, std::ios::binary);
    if (!in) {
      std::cerr << "smoothcal: cannot open '" << inputs << "'\n";
      return kExitError;
    }
    std::ostringstream os;
    os << in.rdbuf();
    text = os.str();
  }
  char* report = nullptr;
  if (smoothcal_bounds_report(text.c_str(), &report) != SMOOTHCAL_OK) {
    return report_error("bounds");
  }
  std::cout << take(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smooth calibration error metrics, learners and experiment sweeps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(smoothcal_version()));

  std::string metrics_input, mode = "prob";
  bool csv = false;
  auto* metrics = app.add_subcommand("metrics", "Calibration metrics for a value,label CSV");
  metrics->add_option("input", metrics_input, "CSV file, or - for stdin")->required();
  metrics->add_option("--mode", mode, "prob or logit")
      ->check(CLI::IsMember({"prob", "logit"}))
      ->capture_default_str();
  metrics->add_flag("--csv", csv, "Print a CSV header and row instead of JSON");

  std::string config, out_dir;
  unsigned threads = 0;
  auto* sweep = app.add_subcommand("sweep", "Run a declarative experiment sweep");
  sweep->add_option("--config", config, "Sweep config (JSON)")->required();
  sweep->add_option("--out", out_dir, "Output directory (overrides the config)");
  sweep->add_option("--threads", threads, "Worker threads (0: SMOOTHCAL_THREADS or all cores)");

  std::string suite;
  std::uint64_t seed = 0;
  std::size_t count = 100;
  auto* verify = app.add_subcommand("verify", "Run a randomized verification suite");
  verify->add_option("--suite", suite, "oracle, descent, bounds or gradients")->required();
  verify->add_option("--count", count, "Number of instances")->capture_default_str();
  verify->add_option("--seed", seed, "Base seed")->capture_default_str();

  std::string inputs;
  auto* bounds = app.add_subcommand("bounds", "Evaluate training bounds and compare to runs");
  bounds->add_option("--inputs", inputs, "JSON file or inline JSON document")->required();

  CLI11_PARSE(app, argc, argv);

  if (*metrics) return run_metrics(metrics_input, mode, csv);
  if (*sweep) return run_sweep(config, out_dir, threads);
  if (*verify) return run_verify(suite, seed, count);
  if (*bounds) return run_bounds(inputs);
  return kExitError;
}
