#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "smoothcal/error.hpp"
#include "smoothcal/loss.hpp"
#include "smoothcal/metrics.hpp"

using namespace smoothcal;

namespace {

PredictionSet random_preds(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = u(gen);
    y[i] = u(gen) < v[i] ? 1 : 0;
  }
  return PredictionSet(v, y);
}

LogitSet random_logits(std::mt19937_64& gen, std::size_t n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = g(gen);
    y[i] = u(gen) < sigmoid(x[i]) ? 1 : 0;
  }
  return LogitSet(x, y);
}

// O(n^2) evaluation of the MMCE quadratic form.
double mmce_brute(const PredictionSet& p, double bw) {
  double q = 0.0;
  const auto v = p.probs();
  const auto y = p.labels();
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      q += (y[i] - v[i]) * std::exp(-std::abs(v[i] - v[j]) / bw) * (y[j] - v[j]);
  const double n = static_cast<double>(p.size());
  return std::sqrt(std::max(0.0, q / (n * n)));
}

// Enumerates all 2^(n-1) consecutive groupings of the sorted points.
double interval_ce_brute(const PredictionSet& p) {
  const std::size_t n = p.size();
  std::vector<std::pair<double, int>> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(p.probs()[i], p.labels()[i]);
  std::sort(pts.begin(), pts.end());
  double best = 1e300;
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    double total = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool cut = k + 1 == n || (mask >> k) & 1u;
      if (!cut) continue;
      double r = 0.0;
      for (std::size_t q = start; q <= k; ++q) r += pts[q].first - pts[q].second;
      // Equal values cannot straddle a cut; such groupings are not intervals.
      if (k + 1 < n && pts[k].first == pts[k + 1].first) { total = 1e300; break; }
      total += std::abs(r) + (pts[k].first - pts[start].first) * static_cast<double>(k + 1 - start);
      start = k + 1;
    }
    best = std::min(best, total / static_cast<double>(n));
  }
  return best;
}

double mean_residual(const PredictionSet& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p.labels()[i] - p.probs()[i];
  return s / static_cast<double>(p.size());
}

double mean_abs_residual(const PredictionSet& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.labels()[i] - p.probs()[i]);
  return s / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("types reject invalid input") {
  CHECK_THROWS_AS(PredictionSet({}, {}), InvalidArgument);
  CHECK_THROWS_AS(PredictionSet({0.5, 0.2}, {1}), InvalidArgument);
  CHECK_THROWS_AS(PredictionSet({1.5}, {1}), InvalidArgument);
  CHECK_THROWS_AS(PredictionSet({0.5}, {2}), InvalidArgument);
  CHECK_THROWS_AS(LogitSet({NAN}, {1}), InvalidArgument);
}

TEST_CASE("build_chain_problem") {
  SUBCASE("sorts anchors and scales residuals") {
    auto b = build_chain_problem(PredictionSet({0.8, 0.2}, {0, 1}));
    CHECK(b.permutation == std::vector<std::size_t>{1, 0});
    CHECK(b.problem.c[0] == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(b.problem.c[1] == doctest::Approx(-0.4).epsilon(1e-15));
    REQUIRE(b.problem.d.size() == 1);
    CHECK(b.problem.d[0] == doctest::Approx(0.6).epsilon(1e-15));
  }
  SUBCASE("ties give a zero gap") {
    auto b = build_chain_problem(PredictionSet({0.5, 0.5}, {1, 0}));
    CHECK(b.problem.d[0] == 0.0);
  }
  SUBCASE("logit gaps use the quarter scale") {
    auto b = build_chain_problem(LogitSet({-2.0, 2.0}, {1, 0}), 0.25);
    CHECK(b.problem.d[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK_THROWS_AS(build_chain_problem(PredictionSet({0.1}, {1}), 0.0), InvalidArgument);
}

TEST_CASE("solve_chain_lp closed forms") {
  SUBCASE("two points") {
    auto s = solve_chain_lp({{0.4, -0.4}, {0.6}});
    CHECK(s.value == doctest::Approx(0.24).epsilon(1e-12));
    // Any omega with omega0 - omega1 = 0.6 is optimal.
    CHECK(s.omega[0] - s.omega[1] == doctest::Approx(0.6));
    CHECK(std::abs(s.omega[0]) <= 1.0);
    CHECK(std::abs(s.omega[1]) <= 1.0);
  }
  SUBCASE("single variable") {
    auto s = solve_chain_lp({{0.35}, {}});
    CHECK(s.value == doctest::Approx(0.35).epsilon(1e-15));
    CHECK(s.omega[0] == 1.0);
  }
  SUBCASE("zero gap forces cancellation") {
    auto s = solve_chain_lp({{0.25, -0.25}, {0.0}});
    CHECK(std::abs(s.value) < 1e-15);
    CHECK(s.omega[0] == s.omega[1]);
  }
  SUBCASE("negative single coefficient picks -1") {
    auto s = solve_chain_lp({{-0.2}, {}});
    CHECK(s.value == doctest::Approx(0.2));
    CHECK(s.omega[0] == -1.0);
  }
  CHECK_THROWS_AS(solve_chain_lp({{}, {}}), InvalidArgument);
  CHECK_THROWS_AS(solve_chain_lp({{0.1, 0.2}, {-0.1}}), InvalidArgument);
}

TEST_CASE("smooth_ce spot values") {
  CHECK(smooth_ce(PredictionSet({0.0, 1.0, 1.0}, {0, 1, 1})) == 0.0);
  CHECK(smooth_ce(PredictionSet({0.3}, {1})) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(std::abs(smooth_ce(PredictionSet({0.2, 0.8}, {1, 0})) - 0.24) <= 1e-9);
}

TEST_CASE("smooth_ce matches frozen HiGHS solutions of the full pairwise LP") {
  struct Case {
    std::vector<double> v;
    std::vector<int> y;
    double value;
  };
  // Values produced by scipy.optimize.linprog(method="highs") over all
  // n(n-1) pairwise constraints.
  const std::vector<Case> cases = {
      {{0.1286, 0.4993, 0.6015, 0.0287, 0.1479}, {0, 1, 1, 0, 0}, 0.141430060000000},
      {{0.369, 0.5114, 0.6628, 0.2753, 0.138, 0.788}, {0, 0, 0, 0, 0, 1}, 0.295173733333333},
      {{0.5537, 0.4836, 0.3533, 0.5916, 0.2353, 0.8022, 0.8673, 0.1288},
       {1, 1, 1, 0, 0, 1, 1, 0},
       0.134186021250000},
      {{0.9014, 0.2171, 0.0331, 0.2008, 0.3457, 0.4689, 0.9061, 0.6974, 0.3393, 0.0169, 0.1598,
        0.9964},
       {1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 1, 1},
       0.150454178333333},
  };
  for (const auto& c : cases) {
    CHECK(smooth_ce(PredictionSet(c.v, c.y)) == doctest::Approx(c.value).epsilon(1e-12));
  }
}

TEST_CASE("dual_smooth_ce") {
  SUBCASE("spot values") {
    CHECK(dual_smooth_ce(LogitSet({0.0}, {1})) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(dual_smooth_ce(LogitSet({-2.0, 2.0}, {1, 0})) ==
          doctest::Approx(0.440398538988941).epsilon(1e-12));
    CHECK(dual_smooth_ce(LogitSet({40.0, -40.0}, {1, 0})) <= 1e-9);
  }
  SUBCASE("frozen HiGHS solutions") {
    CHECK(dual_smooth_ce(LogitSet({-1.317, -0.055, 1.029, -2.629}, {0, 0, 1, 0})) ==
          doctest::Approx(0.143234206529560).epsilon(1e-12));
    CHECK(dual_smooth_ce(LogitSet({3.259, 1.816, -0.534, 1.896, 3.779, 5.374, -4.721},
                                  {1, 1, 1, 0, 0, 1, 1})) ==
          doctest::Approx(0.340640828803413).epsilon(1e-12));
  }
  SUBCASE("equal logits reduce to |mean residual|") {
    LogitSet l({0.7, 0.7, 0.7, 0.7, 0.7}, {1, 0, 1, 1, 0});
    const double r = std::abs(mean_residual(l.to_predictions()));
    CHECK(dual_smooth_ce(l) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("returned modifier is feasible for every pairwise constraint and attains the value") {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rep % 40;
    auto p = random_preds(gen, n);
    auto b = build_chain_problem(p);
    auto s = solve_chain_lp(b.problem);
    double obj = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(s.omega[k]) <= 1.0 + 1e-12);
      obj += b.problem.c[k] * s.omega[k];
    }
    CHECK(obj == doctest::Approx(s.value).epsilon(1e-10));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t c = 0; c < n; ++c) {
        const double gap = std::abs(p.probs()[b.permutation[a]] - p.probs()[b.permutation[c]]);
        CHECK(std::abs(s.omega[a] - s.omega[c]) <= gap + 1e-12);
      }
  }
}

TEST_CASE("grid oracle") {
  CHECK(std::abs(smooth_ce_grid_oracle(PredictionSet({0.2, 0.8}, {1, 0}), 0.01) - 0.24) <= 0.01);
  CHECK(smooth_ce_grid_oracle(PredictionSet({0.5}, {1}), 0.01) == doctest::Approx(0.5));
  CHECK_THROWS_AS(smooth_ce_grid_oracle(PredictionSet({0.5}, {1}), 0.0), InvalidArgument);
  CHECK_THROWS_AS(smooth_ce_grid_oracle(PredictionSet(std::vector<double>(5000, 0.5),
                                                      std::vector<int>(5000, 1)),
                                        0.01),
                  SizeError);

  std::mt19937_64 gen(17);
  const std::size_t sizes[] = {1, 2, 3, 4, 5, 6, 7, 50, 200};
  for (int rep = 0; rep < 200; ++rep) {
    auto p = random_preds(gen, sizes[rep % 9]);
    CHECK(std::abs(smooth_ce(p) - smooth_ce_grid_oracle(p, 0.01)) <= 0.01);
  }
}

TEST_CASE("binned_ece") {
  PredictionSet p({0.05, 0.15, 0.95}, {0, 1, 1});
  CHECK(binned_ece(p, 10) == doctest::Approx(0.95 / 3.0).epsilon(1e-12));
  CHECK(binned_ece(PredictionSet({0.0, 1.0}, {0, 1}), 10) == 0.0);
  CHECK(binned_ece(p, 1) == doctest::Approx(std::abs(mean_residual(p))).epsilon(1e-12));
  // v = 1.0 lands in the last bin
  CHECK(binned_ece(PredictionSet({1.0}, {0}), 4) == 1.0);
  CHECK_THROWS_AS(binned_ece(p, 0), InvalidArgument);
}

TEST_CASE("interval_ce") {
  CHECK(interval_ce(PredictionSet({0.0, 1.0}, {0, 1})) == 0.0);
  CHECK(interval_ce(PredictionSet({0.3}, {1})) == doctest::Approx(0.7));
  CHECK(interval_ce(PredictionSet({0.2, 0.8}, {1, 0})) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(interval_ce(PredictionSet({0.1, 0.35, 0.4, 0.62, 0.9, 0.95}, {0, 1, 0, 1, 1, 0})) ==
        doctest::Approx(0.29666666666666663).epsilon(1e-12));

  std::mt19937_64 gen(5);
  for (int rep = 0; rep < 100; ++rep) {
    auto p = random_preds(gen, 1 + rep % 10);
    CHECK(interval_ce(p) == doctest::Approx(interval_ce_brute(p)).epsilon(1e-12));
    CHECK(interval_ce(p) <= binned_ece(p, 10) + binned_width_term(p, 10) + 1e-12);
  }
}

TEST_CASE("mmce") {
  CHECK(mmce(PredictionSet({0.5}, {1}), 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mmce(PredictionSet({0.5, 0.5}, {1, 0}), 1.0) == 0.0);
  CHECK(mmce(PredictionSet({0.0, 1.0}, {0, 1}), 1.0) == 0.0);
  CHECK_THROWS_AS(mmce(PredictionSet({0.5}, {1}), 0.0), InvalidArgument);
  std::mt19937_64 gen(9);
  for (int rep = 0; rep < 30; ++rep) {
    auto p = random_preds(gen, 1 + rep * 7);
    for (double bw : {0.1, 1.0, 3.0})
      CHECK(mmce(p, bw) == doctest::Approx(mmce_brute(p, bw)).epsilon(1e-10));
  }
}

TEST_CASE("metric_report") {
  auto r = metric_report(PredictionSet({0.0, 1.0, 1.0, 0.0}, {0, 1, 1, 0}));
  CHECK(r.smooth_ce == 0.0);
  CHECK(r.binned_ece == 0.0);
  CHECK(r.interval_ce == 0.0);
  CHECK(r.mmce == 0.0);
  CHECK(r.accuracy == 1.0);
  CHECK(std::isfinite(r.log_loss));
  CHECK_FALSE(r.dual_smooth_ce.has_value());

  auto two = metric_report(PredictionSet({0.2, 0.8}, {1, 0}));
  CHECK(two.smooth_ce == doctest::Approx(0.24));
  CHECK(two.binned_ece == doctest::Approx(0.8));
  CHECK(two.accuracy == 0.0);

  auto lr = metric_report(LogitSet({-2.0, 2.0}, {1, 0}));
  REQUIRE(lr.dual_smooth_ce.has_value());
  CHECK(*lr.dual_smooth_ce == doctest::Approx(0.440398538988941));
  CHECK(lr.log_loss == doctest::Approx(softplus(2.0)));

  CHECK(to_csv_row(two).find(",,") != std::string::npos);
  CHECK(to_json(two).find("\"dual_smooth_ce\":null") != std::string::npos);
}

TEST_CASE("properties over random instances") {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 1 + rep % 60;
    auto l = random_logits(gen, n, 0.5 + rep % 5);
    auto p = l.to_predictions();
    const double sm = smooth_ce(p);
    // sandwich
    CHECK(std::abs(mean_residual(p)) <= sm + 1e-12);
    CHECK(sm <= mean_abs_residual(p) + 1e-12);
    // dual dominance and gradient bound
    const double dual = dual_smooth_ce(l);
    CHECK(sm <= dual + 1e-9);
    CHECK(dual <= mean_abs_residual(p) + 1e-9);

    // permutation invariance
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<double> v2(n);
    std::vector<int> y2(n);
    for (std::size_t i = 0; i < n; ++i) {
      v2[i] = p.probs()[order[i]];
      y2[i] = p.labels()[order[i]];
    }
    PredictionSet q(v2, y2);
    CHECK(smooth_ce(q) == doctest::Approx(sm).epsilon(1e-12));
    CHECK(interval_ce(q) == doctest::Approx(interval_ce(p)).epsilon(1e-12));
    CHECK(mmce(q, 1.0) == doctest::Approx(mmce(p, 1.0)).epsilon(1e-10));
    CHECK(binned_ece(q, 10) == doctest::Approx(binned_ece(p, 10)).epsilon(1e-12));

    // one-sample replacement moves the value by at most 2/n
    v2[0] = u(gen);
    y2[0] = u(gen) < 0.5;
    CHECK(std::abs(smooth_ce(PredictionSet(v2, y2)) - sm) <= 2.0 / n + 1e-12);
  }
}

TEST_CASE("duplicated values behave like the collapsed weighted instance") {
  // Collapsing k copies of value v into one point with residual sum R gives
  // objective R*w/n; the chain must see a single free variable per value.
  PredictionSet dup({0.3, 0.3, 0.3, 0.7}, {1, 1, 0, 0});
  // residual sum at 0.3 is 1.1, at 0.7 is -0.7; gap 0.4
  auto s = solve_chain_lp({{1.1 / 4.0, -0.7 / 4.0}, {0.4}});
  CHECK(smooth_ce(dup) == doctest::Approx(s.value).epsilon(1e-12));
}
