#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smoothcal/error.hpp"
#include "smoothcal/experiment.hpp"

using namespace smoothcal;
using doctest::Approx;

namespace {

std::string config_error_path(const std::string& json) {
  try {
    parse_experiment_config(json);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

const char* kSmallGbt = R"({
  "name": "small",
  "learner": "gbt",
  "dataset": {"kind": "toy-gaussian"},
  "n_train": 40,
  "sweep": {"axis": "T", "values": [1, 3, 6]},
  "gbt": {"step": 0.5, "depth": 2},
  "repeats": 3
})";

std::vector<std::vector<std::string>> read_rows(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("spearman") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == Approx(-1.0));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}) == 0.0);
  // Ties take their average rank: ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
  CHECK(spearman({1, 2, 3, 4}, {1, 2, 2, 3}) == Approx(0.9486832980505138));
  CHECK(spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}) == Approx(0.8));
}

TEST_CASE("config parsing") {
  const auto cfg = parse_experiment_config(kSmallGbt);
  CHECK(cfg.name == "small");
  CHECK(cfg.learner == Learner::kGbt);
  CHECK(cfg.grid == std::vector<std::size_t>{1, 3, 6});
  CHECK(cfg.gbt.step == 0.5);
  CHECK(cfg.gbt.depth == 2);
  CHECK(cfg.repeats == 3);
  CHECK(cfg.num_bins == 10);
  CHECK(cfg.mmce_bandwidth == 1.0);

  const auto n = parse_experiment_config(R"({"learner": "gbt",
    "sweep": {"axis": "n", "values": [50, 200], "t_schedule": "sqrt_n", "c": 1.5}})");
  CHECK(n.axis == SweepAxis::kSamples);
  CHECK(iterations_for(n, 50) == 11);   // round(1.5 * 7.07)
  CHECK(iterations_for(n, 200) == 21);  // round(1.5 * 14.14)
  CHECK(iterations_for(cfg, 6) == 6);
}

TEST_CASE("config errors name the offending field") {
  CHECK(config_error_path(R"({"sweep": {"axis": "T", "values": [1]}})") == "learner");
  CHECK(config_error_path(R"({"learner": "svm", "sweep": {"axis": "T", "values": [1]}})") ==
        "learner");
  CHECK(config_error_path(R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1, 0]}})") ==
        "sweep.values[1]");
  CHECK(config_error_path(R"({"learner": "gbt", "sweep": {"axis": "T", "values": [3, 2]}})") ==
        "sweep.values[1]");
  CHECK(config_error_path(R"({"learner": "gbt", "sweep": {"axis": "x", "values": [1]}})") ==
        "sweep.axis");
  CHECK(config_error_path(
            R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1]}, "gbt": {"step": -1}})") ==
        "gbt.step");
  CHECK(config_error_path(
            R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1]}, "repeats": 0})") ==
        "repeats");
  CHECK(config_error_path(
            R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1]}, "colour": 1})") ==
        "colour");
  CHECK(config_error_path(
            R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1]}, "nn": {}})") == "nn");
  CHECK(config_error_path(R"({"learner": "nn", "sweep": {"axis": "T", "values": [1]},
    "predictor": "average"})") == "predictor");
  CHECK(config_error_path(R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1]},
    "dataset": {"kind": "toy-mirrored", "sigma": -1}})") == "dataset.sigma");
  CHECK(config_error_path(R"({"learner": "gbt", "sweep": {"axis": "T", "values": [1],
    "t_schedule": "sqrt_n"}})") == "sweep.t_schedule");
  CHECK_THROWS_AS(parse_experiment_config("{not json"), InvalidArgument);
}

TEST_CASE("sweep shape, summary and determinism") {
  const auto cfg = parse_experiment_config(kSmallGbt);
  const auto r = run_sweep(cfg, 1);
  REQUIRE(r.cells.size() == 3 * 3 * 2);
  REQUIRE(r.summary.size() == 3 * 2);
  CHECK(r.cells[0].axis_value == 1);
  CHECK(r.cells[0].seed == 0);
  CHECK_FALSE(r.cells[0].test);
  CHECK(r.cells[1].test);
  CHECK(r.cells[2].seed == 1);
  for (std::size_t k = 0; k < kNumMetrics; ++k) CHECK(r.cells[0].gaps[k] == r.cells[1].gaps[k]);

  for (const auto& s : r.summary) {
    CHECK(s.count == 3);
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
      double sum = 0.0;
      for (const auto& c : r.cells) {
        if (c.axis_value == s.axis_value && c.test == s.test) sum += c.metrics[k];
      }
      CHECK(std::abs(s.mean[k] - sum / 3.0) <= 1e-12);
    }
  }

  const auto again = run_sweep(cfg, 3);
  CHECK(cells_csv(again, cfg) == cells_csv(r, cfg));
  CHECK(summary_csv(again, cfg) == summary_csv(r, cfg));
  CHECK(trends_json(again, cfg) == trends_json(r, cfg));

  const auto rows = read_rows(cells_csv(r, cfg));
  REQUIRE(rows.size() == 1 + r.cells.size());
  CHECK(rows[0][0] == "axis");
  CHECK(rows[0][7] == "smooth_ce");
  CHECK(rows[1][0] == "T");
  CHECK(rows[1][6] == "train");
  CHECK(rows[2][6] == "test");
  for (const auto& row : rows) CHECK(row.size() == rows[0].size());
  const auto summary_rows = read_rows(summary_csv(r, cfg));
  CHECK(summary_rows.size() == 1 + r.summary.size());
}

TEST_CASE("prefix evaluation matches separate training runs") {
  // A T-axis sweep trains once to T_max and reads prefixes; a single-value
  // sweep trains exactly to that T. Both must agree.
  const auto full = run_sweep(parse_experiment_config(kSmallGbt), 1);
  const auto single = run_sweep(parse_experiment_config(R"({
    "learner": "gbt", "dataset": {"kind": "toy-gaussian"}, "n_train": 40,
    "sweep": {"axis": "T", "values": [3]}, "gbt": {"step": 0.5, "depth": 2}, "repeats": 3})"),
                                1);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t split = 0; split < 2; ++split) {
      const auto& a = full.cells[6 + 2 * s + split];
      const auto& b = single.cells[2 * s + split];
      CHECK(a.axis_value == 3);
      for (std::size_t k = 0; k < kNumMetrics; ++k) CHECK(a.metrics[k] == b.metrics[k]);
    }
  }
}

TEST_CASE("n axis, other learners and CSV data") {
  const auto n = parse_experiment_config(R"({"learner": "kernel",
    "dataset": {"kind": "toy-mirrored"},
    "sweep": {"axis": "n", "values": [10, 20], "t_schedule": "sqrt_n", "c": 2},
    "kernel": {"step": 1}, "predictor": "average", "repeats": 2})");
  const auto r = run_sweep(n, 2);
  REQUIRE(r.cells.size() == 8);
  CHECK(r.cells[0].n_train == 10);
  CHECK(r.cells[0].iterations == 6);
  CHECK(r.cells[4].n_test == 20);

  const auto nn = parse_experiment_config(R"({"learner": "nn",
    "n_train": 20, "sweep": {"axis": "T", "values": [0, 5]},
    "nn": {"hidden": 8, "step": 0.1, "beta": 0}, "repeats": 1})");
  const auto rn = run_sweep(nn, 1);
  REQUIRE(rn.cells.size() == 4);
  CHECK(rn.cells[0].metrics[6] == Approx(std::log(2.0)).epsilon(1e-14));

  const auto dir = std::filesystem::temp_directory_path() / "smoothcal_test_experiment";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "data.csv");
    out << "a,b,y\n";
    for (int i = 0; i < 30; ++i) out << i << ',' << (i * 7) % 5 << ',' << (i % 3 == 0 ? "p" : "q") << '\n';
  }
  const auto csv = parse_experiment_config(R"({"learner": "gbt",
    "dataset": {"kind": "csv", "path": "data.csv", "label_column": "y", "positive_label": "p"},
    "n_train": 20, "sweep": {"axis": "T", "values": [2]}, "repeats": 2})",
                                           dir.string());
  const auto rc = run_sweep(csv, 1);
  REQUIRE(rc.cells.size() == 4);
  CHECK(rc.cells[1].n_test == 10);

  write_sweep_outputs(rc, csv, (dir / "out").string());
  CHECK(std::filesystem::exists(dir / "out" / "cells.csv"));
  CHECK(std::filesystem::exists(dir / "out" / "summary.csv"));
  CHECK(std::filesystem::exists(dir / "out" / "trends.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("verification suites") {
  for (const char* suite : {"oracle", "bounds", "descent", "gradients"}) {
    const auto r = run_verification(suite, 1, 8);
    CHECK_MESSAGE(r.ok(), to_json(r));
    CHECK(r.passed + r.failed + r.skipped == 8);
  }
  CHECK_THROWS_AS(run_verification("nope", 0, 1), InvalidArgument);
}

TEST_CASE("bounds report") {
  const auto out = bounds_report(R"({"inputs": {"w": 0.1, "T": 100},
    "bounds": ["gbt", "kernel"],
    "measure": {"dataset": {"kind": "stump-separable"}, "n": 40, "seed": 1}})");
  CHECK(out.find("gbt_averaged_dual_smooth_ce") != std::string::npos);
  CHECK(out.find("kernel_averaged_dual_smooth_ce") != std::string::npos);
  CHECK(out.find("\"dominated\": true") != std::string::npos);
  CHECK(out.find("uncertified") != std::string::npos);
  CHECK_THROWS_AS(bounds_report(R"({"inputs": {"w": -1}, "bounds": ["gbt"]})"), InvalidArgument);
}
