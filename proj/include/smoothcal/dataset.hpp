#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace smoothcal {

/// A labelled collection of feature vectors of a common dimension.
///
/// Features are stored row-major in a single buffer. The class validates its
/// invariants on construction (finite features, binary labels, consistent
/// dimension) and is immutable afterwards.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t dim, std::vector<double> features, std::vector<int> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return labels_.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  double at(std::size_t i, std::size_t j) const { return features_[i * dim_ + j]; }
  int label(std::size_t i) const { return labels_[i]; }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const int> labels() const noexcept { return labels_; }

  /// Rows picked by index, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

struct SplitSpec {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
};

struct FeatureScaling {
  std::vector<double> mean;
  std::vector<double> stddev;  // 0 for constant features (left unscaled)
};

struct Standardized {
  Dataset train;
  Dataset test;
  FeatureScaling scaling;
};

/// Two axis-aligned Gaussian classes, exactly n/2 samples each.
/// Class 0 ~ N((-1.3, -1), diag((1.2*1.3)^2, 1.2^2)),
/// class 1 ~ N((1, 1.3),   diag(1.2^2, (1.2*1.3)^2)).
/// Samples are interleaved 0,1,0,1,... .
Dataset gen_gaussian_toy(std::size_t n, std::uint64_t seed);

/// Mirrored toy: for base vectors Z_i ~ N(0, sigma^2 I_2),
///   class 0: Z_i + (0.1, 0.1) + eps,   class 1: -Z_i - (0.1, 0.1) + eps',
/// with eps, eps' ~ N(0, tau^2 I_2). Sample 2i is class 0 and 2i+1 its mirror.
/// sigma = tau = 0 is accepted and produces noiseless mirrors.
Dataset gen_mirrored_toy(std::size_t n, double sigma, double tau, std::uint64_t seed);
inline Dataset gen_mirrored_toy(std::size_t n, std::uint64_t seed) {
  return gen_mirrored_toy(n, 0.05, 0.01, seed);
}

/// Selects the label column of a CSV either by header name or 0-based index.
using ColumnRef = std::variant<std::string, std::size_t>;

/// Loads a headed, comma-separated file. The label column maps
/// positive_label -> 1 and every other value -> 0; all other columns must be
/// numeric. Throws LoadError naming the offending row/column.
Dataset load_csv(const std::string& path, const ColumnRef& label_column,
                 const std::string& positive_label);
Dataset parse_csv(std::istream& in, const ColumnRef& label_column,
                  const std::string& positive_label);

/// Writes columns f0..f{d-1},label.
void write_csv(std::ostream& out, const Dataset& data);

/// Seeded shuffle, then the first n_train indices form train and the next
/// n_test form test.
std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec);

/// Z-scores both sets with statistics computed on train only.
Standardized standardize(const Dataset& train, const Dataset& test);

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace smoothcal

namespace smoothcal {

/// 2-D set separable by the sign of the first coordinate: class 1 has
/// x0 in [0.05, 1], class 0 has x0 in [-1, -0.05], x1 ~ U[-1, 1]; classes
/// alternate 0,1,0,1,... Used to certify the stump margin.
Dataset gen_threshold_separable(std::size_t n, std::uint64_t seed);

}  // namespace smoothcal

namespace smoothcal {

struct ValueLabelColumns {
  std::vector<double> values;
  std::vector<int> labels;
};

/// Two-column value,label file with an optional header row. Probabilities
/// must lie in [0, 1] unless `logits` is set; labels must be 0 or 1. Errors
/// carry the 1-based line number.
ValueLabelColumns parse_value_label_csv(std::istream& in, bool logits);
ValueLabelColumns read_value_label_csv(const std::string& path, bool logits);

}  // namespace smoothcal
