#include "smoothcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "smoothcal/error.hpp"
#include "smoothcal/loss.hpp"

namespace smoothcal {

namespace {

void check_labels(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw InvalidArgument("labels must be 0 or 1");
}

}  // namespace

PredictionSet::PredictionSet(std::vector<double> probs, std::vector<int> labels)
    : probs_(std::move(probs)), labels_(std::move(labels)) {
  if (probs_.empty()) throw InvalidArgument("prediction set must be non-empty");
  if (probs_.size() != labels_.size()) {
    throw InvalidArgument("probabilities and labels differ in length");
  }
  for (double v : probs_)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("probabilities must lie in [0,1]");
  check_labels(labels_);
}

LogitSet::LogitSet(std::vector<double> logits, std::vector<int> labels)
    : logits_(std::move(logits)), labels_(std::move(labels)) {
  if (logits_.empty()) throw InvalidArgument("logit set must be non-empty");
  if (logits_.size() != labels_.size()) {
    throw InvalidArgument("logits and labels differ in length");
  }
  for (double g : logits_)
    if (!std::isfinite(g)) throw InvalidArgument("logits must be finite");
  check_labels(labels_);
}

PredictionSet LogitSet::to_predictions() const {
  std::vector<double> p(logits_.size());
  std::transform(logits_.begin(), logits_.end(), p.begin(), sigmoid);
  return PredictionSet(std::move(p), labels_);
}

// ---------------------------------------------------------------------------
// Chain LP
// ---------------------------------------------------------------------------

namespace {

ChainBuild build_chain(std::span<const double> anchors, std::span<const double> probs,
                       std::span<const int> labels, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("lipschitz scale must be positive");
  }
  const std::size_t n = anchors.size();
  ChainBuild out;
  out.permutation.resize(n);
  std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
  std::stable_sort(out.permutation.begin(), out.permutation.end(),
                   [&](std::size_t a, std::size_t b) { return anchors[a] < anchors[b]; });
  out.problem.c.resize(n);
  out.problem.d.resize(n - 1);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = out.permutation[k];
    out.problem.c[k] = (labels[i] - probs[i]) * inv_n;
    if (k + 1 < n) {
      const std::size_t j = out.permutation[k + 1];
      out.problem.d[k] = scale * (anchors[j] - anchors[i]);
    }
  }
  return out;
}

// Concave piecewise-linear function on [-1, 1]: value at -1 plus segments of
// non-increasing slope whose lengths sum to 2.
struct Segment {
  double slope;
  double length;
};

class ConcavePwl {
 public:
  explicit ConcavePwl(double slope) : left_value_(-slope), segs_{{slope, 2.0}} {}

  void add_linear(double c) {
    left_value_ -= c;
    for (auto& s : segs_) s.slope += c;
  }

  // f(x) <- max_{|x'-x| <= d} f(x') restricted back to [-1, 1]: the rising
  // part moves left by d, a plateau of width 2d opens at the peak, the falling
  // part moves right by d, then d is cut from each end.
  void widen(double d) {
    if (d <= 0.0) return;
    auto peak = std::find_if(segs_.begin(), segs_.end(),
                             [](const Segment& s) { return s.slope <= 0.0; });
    segs_.insert(peak, Segment{0.0, 2.0 * d});
    trim_front(d);
    trim_back(d);
  }

  // Leftmost maximiser and the maximum.
  std::pair<double, double> argmax() const {
    double x = -1.0;
    double v = left_value_;
    for (const auto& s : segs_) {
      if (s.slope <= 0.0) break;
      x += s.length;
      v += s.slope * s.length;
    }
    return {std::min(x, 1.0), v};
  }

 private:
  void trim_front(double d) {
    std::size_t k = 0;
    while (d > 0.0 && k < segs_.size()) {
      Segment& s = segs_[k];
      const double cut = std::min(d, s.length);
      left_value_ += s.slope * cut;
      s.length -= cut;
      d -= cut;
      if (s.length <= 0.0) ++k;
    }
    segs_.erase(segs_.begin(), segs_.begin() + static_cast<std::ptrdiff_t>(k));
  }

  void trim_back(double d) {
    while (d > 0.0 && !segs_.empty()) {
      Segment& s = segs_.back();
      const double cut = std::min(d, s.length);
      s.length -= cut;
      d -= cut;
      if (s.length <= 0.0) segs_.pop_back();
    }
  }

  double left_value_;
  std::vector<Segment> segs_;
};

}  // namespace

ChainBuild build_chain_problem(const PredictionSet& preds, double lipschitz_scale) {
  return build_chain(preds.probs(), preds.probs(), preds.labels(), lipschitz_scale);
}

ChainBuild build_chain_problem(const LogitSet& logits, double lipschitz_scale) {
  const auto p = logits.to_predictions();
  return build_chain(logits.logits(), p.probs(), logits.labels(), lipschitz_scale);
}

ChainSolution solve_chain_lp(const ChainLpProblem& p) {
  const std::size_t n = p.c.size();
  if (n == 0) throw InvalidArgument("chain problem must have at least one variable");
  if (p.d.size() + 1 != n) throw InvalidArgument("chain problem needs n-1 gap budgets");
  for (double d : p.d)
    if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidArgument("gap budgets must be >= 0");

  std::vector<double> peak(n);
  ConcavePwl f(p.c[0]);
  peak[0] = f.argmax().first;
  for (std::size_t k = 1; k < n; ++k) {
    f.widen(p.d[k - 1]);
    f.add_linear(p.c[k]);
    peak[k] = f.argmax().first;
  }

  ChainSolution sol;
  sol.value = f.argmax().second;
  sol.omega.resize(n);
  // Stage k's value function is concave, so its best point within the window
  // around the successor's choice is the clamp of its peak.
  sol.omega[n - 1] = peak[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) {
    const double lo = std::max(-1.0, sol.omega[k + 1] - p.d[k]);
    const double hi = std::min(1.0, sol.omega[k + 1] + p.d[k]);
    sol.omega[k] = std::clamp(peak[k], lo, hi);
  }
  return sol;
}

double smooth_ce(const PredictionSet& preds) {
  const double v = solve_chain_lp(build_chain_problem(preds, 1.0).problem).value;
  return std::max(v, 0.0);
}

double dual_smooth_ce(const LogitSet& logits) {
  const double v = solve_chain_lp(build_chain_problem(logits, 0.25).problem).value;
  return std::max(v, 0.0);
}

double smooth_ce_grid_oracle(const PredictionSet& preds, double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 0.5)) {
    throw InvalidArgument("grid step must lie in (0, 0.5]");
  }
  const std::size_t n = preds.size();
  const auto levels = static_cast<std::size_t>(std::floor(2.0 / grid_step + 1e-9)) + 1;
  const double work = static_cast<double>(n) * static_cast<double>(levels) * levels;
  if (work > kMaxOracleWork) {
    throw SizeError("grid oracle refused: n * levels^2 = " + std::to_string(work) +
                    " exceeds " + std::to_string(kMaxOracleWork));
  }

  // Sorted (prob, residual) pairs, built independently of build_chain_problem.
  std::vector<std::pair<double, double>> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {preds.probs()[i], preds.labels()[i] - preds.probs()[i]};
  }
  std::sort(pts.begin(), pts.end());

  std::vector<double> grid(levels);
  for (std::size_t j = 0; j < levels; ++j) grid[j] = -1.0 + grid_step * static_cast<double>(j);

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> value(levels), next(levels);
  for (std::size_t j = 0; j < levels; ++j) value[j] = pts[0].second * inv_n * grid[j];
  for (std::size_t k = 1; k < n; ++k) {
    const double gap = pts[k].first - pts[k - 1].first;
    const auto radius = static_cast<std::size_t>(
        std::min<double>(std::floor((gap + grid_step / 2.0) / grid_step + 1e-9), levels));
    const double coef = pts[k].second * inv_n;
    for (std::size_t j = 0; j < levels; ++j) {
      const std::size_t lo = j >= radius ? j - radius : 0;
      const std::size_t hi = std::min(levels - 1, j + radius);
      double best = value[lo];
      for (std::size_t q = lo + 1; q <= hi; ++q) best = std::max(best, value[q]);
      next[j] = best + coef * grid[j];
    }
    value.swap(next);
  }
  return *std::max_element(value.begin(), value.end());
}

// ---------------------------------------------------------------------------
// Binned / interval / kernel metrics
// ---------------------------------------------------------------------------

namespace {

std::size_t bin_of(double v, std::size_t bins) {
  const auto b = static_cast<std::size_t>(std::floor(v * static_cast<double>(bins)));
  return std::min(b, bins - 1);  // last bin is right-closed
}

}  // namespace

double binned_ece(const PredictionSet& preds, std::size_t num_bins) {
  if (num_bins == 0) throw InvalidArgument("num_bins must be >= 1");
  std::vector<double> sums(num_bins, 0.0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double v = preds.probs()[i];
    sums[bin_of(v, num_bins)] += v - preds.labels()[i];
  }
  double total = 0.0;
  for (double s : sums) total += std::abs(s);
  return total / static_cast<double>(preds.size());
}

double binned_width_term(const PredictionSet& preds, std::size_t num_bins) {
  if (num_bins == 0) throw InvalidArgument("num_bins must be >= 1");
  std::vector<std::size_t> counts(num_bins, 0);
  for (double v : preds.probs()) ++counts[bin_of(v, num_bins)];
  double total = 0.0;
  const double width = 1.0 / static_cast<double>(num_bins);
  for (std::size_t c : counts) total += width * static_cast<double>(c);
  return total / static_cast<double>(preds.size());
}

double interval_ce(const PredictionSet& preds) {
  const std::size_t n = preds.size();
  std::vector<std::pair<double, double>> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {preds.probs()[i], preds.probs()[i] - preds.labels()[i]};
  }
  std::sort(pts.begin(), pts.end());

  // Collapse duplicates: unique value, residual sum, count.
  std::vector<double> value;
  std::vector<double> resid_prefix{0.0};
  std::vector<double> count_prefix{0.0};
  for (const auto& [v, r] : pts) {
    if (value.empty() || v != value.back()) {
      value.push_back(v);
      resid_prefix.push_back(resid_prefix.back());
      count_prefix.push_back(count_prefix.back());
    }
    resid_prefix.back() += r;
    count_prefix.back() += 1.0;
  }

  // best[b] = optimum over groupings of the first b unique values; the group
  // [a, b) costs |residual sum| + span * members, all divided by n.
  const std::size_t u = value.size();
  std::vector<double> best(u + 1, 0.0);
  for (std::size_t b = 1; b <= u; ++b) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < b; ++a) {
      const double cost = std::abs(resid_prefix[b] - resid_prefix[a]) +
                          (value[b - 1] - value[a]) * (count_prefix[b] - count_prefix[a]);
      m = std::min(m, best[a] + cost);
    }
    best[b] = m;
  }
  return best[u] / static_cast<double>(n);
}

double mmce(const PredictionSet& preds, double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidArgument("MMCE bandwidth must be positive");
  }
  const std::size_t n = preds.size();
  std::vector<std::pair<double, double>> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = {preds.probs()[i], preds.labels()[i] - preds.probs()[i]};
  }
  std::sort(pts.begin(), pts.end());
  // For the Laplace kernel on sorted points the cross terms obey
  //   S_i = sum_{j<i} r_j k(v_i, v_j) = k(v_i, v_{i-1}) (S_{i-1} + r_{i-1}),
  // so the full quadratic form is sum r_i^2 + 2 sum r_i S_i.
  double quad = 0.0;
  double carry = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      carry = std::exp(-(pts[i].first - pts[i - 1].first) / bandwidth) *
              (carry + pts[i - 1].second);
    }
    quad += pts[i].second * (pts[i].second + 2.0 * carry);
  }
  quad /= static_cast<double>(n) * static_cast<double>(n);
  if (quad < -1e-12) {
    throw InternalError("MMCE quadratic form is negative (" + std::to_string(quad) +
                        "); kernel PSD violated");
  }
  return std::sqrt(std::max(quad, 0.0));
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

namespace {

MetricReport probability_fields(const PredictionSet& preds, std::size_t num_bins,
                                double bandwidth) {
  MetricReport r;
  r.smooth_ce = smooth_ce(preds);
  r.binned_ece = binned_ece(preds, num_bins);
  r.interval_ce = interval_ce(preds);
  r.mmce = mmce(preds, bandwidth);
  double abs_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double v = preds.probs()[i];
    const int y = preds.labels()[i];
    abs_sum += std::abs(y - v);
    correct += (v >= 0.5 ? 1 : 0) == y;
  }
  const double n = static_cast<double>(preds.size());
  r.mean_abs_residual = abs_sum / n;
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

}  // namespace

MetricReport metric_report(const PredictionSet& preds, std::size_t num_bins,
                           double bandwidth) {
  MetricReport r = probability_fields(preds, num_bins, bandwidth);
  double loss = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double v = std::clamp(preds.probs()[i], kProbClamp, 1.0 - kProbClamp);
    loss -= preds.labels()[i] == 1 ? std::log(v) : std::log1p(-v);
  }
  r.log_loss = loss / static_cast<double>(preds.size());
  return r;
}

MetricReport metric_report(const LogitSet& logits, std::size_t num_bins, double bandwidth) {
  MetricReport r = probability_fields(logits.to_predictions(), num_bins, bandwidth);
  r.dual_smooth_ce = dual_smooth_ce(logits);
  r.log_loss = mean_log_loss(logits.logits(), logits.labels());
  return r;
}

std::string to_csv_row(const MetricReport& r) {
  char buf[512];
  char dual[32] = "";
  if (r.dual_smooth_ce) std::snprintf(dual, sizeof dual, "%.17g", *r.dual_smooth_ce);
  std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.smooth_ce,
                dual, r.binned_ece, r.interval_ce, r.mmce, r.mean_abs_residual, r.log_loss,
                r.accuracy);
  return buf;
}

std::string to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["smooth_ce"] = r.smooth_ce;
  j["dual_smooth_ce"] = r.dual_smooth_ce ? nlohmann::ordered_json(*r.dual_smooth_ce) : nullptr;
  j["binned_ece"] = r.binned_ece;
  j["interval_ce"] = r.interval_ce;
  j["mmce"] = r.mmce;
  j["mean_abs_residual"] = r.mean_abs_residual;
  j["log_loss"] = r.log_loss;
  j["accuracy"] = r.accuracy;
  return j.dump();
}

}  // namespace smoothcal
