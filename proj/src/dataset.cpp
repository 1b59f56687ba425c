#include "smoothcal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "smoothcal/error.hpp"
#include "smoothcal/rng.hpp"

namespace smoothcal {

Dataset::Dataset(std::size_t dim, std::vector<double> features, std::vector<int> labels)
    : dim_(dim), features_(std::move(features)), labels_(std::move(labels)) {
  if (dim_ == 0) throw InvalidArgument("dataset dimension must be positive");
  if (features_.size() != labels_.size() * dim_) {
    throw InvalidArgument("feature buffer size does not match labels x dim");
  }
  for (std::size_t k = 0; k < features_.size(); ++k) {
    if (!std::isfinite(features_[k])) {
      throw InvalidArgument("non-finite feature at sample " + std::to_string(k / dim_));
    }
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) {
      throw InvalidArgument("label at sample " + std::to_string(i) + " is not 0/1");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<double> f;
  std::vector<int> y;
  f.reserve(indices.size() * dim_);
  y.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("subset index out of range");
    auto r = row(i);
    f.insert(f.end(), r.begin(), r.end());
    y.push_back(labels_[i]);
  }
  return Dataset(dim_, std::move(f), std::move(y));
}

namespace {

void require_even(std::size_t n) {
  if (n == 0 || n % 2 != 0) {
    throw InvalidArgument("sample count must be a positive even integer, got " +
                          std::to_string(n));
  }
}

}  // namespace

Dataset gen_gaussian_toy(std::size_t n, std::uint64_t seed) {
  require_even(n);
  constexpr double kMean[2][2] = {{-1.3, -1.0}, {1.0, 1.3}};
  constexpr double kStd[2][2] = {{1.2 * 1.3, 1.2}, {1.2, 1.2 * 1.3}};

  Rng rng(derive_seed(seed, "gaussian_toy"));
  std::vector<double> f(n * 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    y[i] = c;
    f[2 * i] = rng.gaussian(kMean[c][0], kStd[c][0]);
    f[2 * i + 1] = rng.gaussian(kMean[c][1], kStd[c][1]);
  }
  return Dataset(2, std::move(f), std::move(y));
}

Dataset gen_mirrored_toy(std::size_t n, double sigma, double tau, std::uint64_t seed) {
  require_even(n);
  if (!(sigma >= 0.0) || !(tau >= 0.0) || !std::isfinite(sigma) || !std::isfinite(tau)) {
    throw InvalidArgument("mirrored toy noise scales must be finite and non-negative");
  }
  Rng base(derive_seed(seed, "mirrored_toy/base"));
  Rng noise(derive_seed(seed, "mirrored_toy/noise"));
  std::vector<double> f(n * 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double z0 = sigma * base.gaussian();
    const double z1 = sigma * base.gaussian();
    double* x0 = &f[4 * i];
    double* x1 = &f[4 * i + 2];
    x0[0] = z0 + 0.1 + tau * noise.gaussian();
    x0[1] = z1 + 0.1 + tau * noise.gaussian();
    x1[0] = -z0 - 0.1 + tau * noise.gaussian();
    x1[1] = -z1 - 0.1 + tau * noise.gaussian();
    y[2 * i] = 0;
    y[2 * i + 1] = 1;
  }
  return Dataset(2, std::move(f), std::move(y));
}

namespace {

// RFC 4180 record reader: quoted fields, doubled quotes, CRLF or LF endings.
// Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  while (in.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get(ch);
      break;
    } else if (ch == '\n') {
      break;
    } else {
      field.push_back(ch);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool is_blank(const std::vector<std::string>& rec) {
  return rec.size() == 1 && trim(rec[0]).empty();
}

}  // namespace

Dataset parse_csv(std::istream& in, const ColumnRef& label_column,
                  const std::string& positive_label) {
  std::vector<std::string> header;
  // Skip a UTF-8 byte order mark.
  if (in.peek() == 0xEF) {
    char bom[3];
    in.read(bom, 3);
  }
  if (!read_record(in, header) || is_blank(header)) {
    throw LoadError("empty CSV file (a header row is required)", 0, 0);
  }

  std::size_t label_idx = 0;
  if (const auto* name = std::get_if<std::string>(&label_column)) {
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return trim(h) == *name; });
    if (it == header.end()) throw LoadError("missing label column '" + *name + "'", 1, 0);
    label_idx = static_cast<std::size_t>(it - header.begin());
  } else {
    label_idx = std::get<std::size_t>(label_column);
    if (label_idx >= header.size()) {
      throw LoadError("label column index " + std::to_string(label_idx) +
                          " out of range for " + std::to_string(header.size()) + " columns",
                      1, 0);
    }
  }
  const std::size_t ncols = header.size();
  if (ncols < 2) throw LoadError("CSV needs at least one feature column and a label", 1, 0);
  const std::size_t dim = ncols - 1;

  std::vector<double> features;
  std::vector<int> labels;
  std::vector<std::string> rec;
  std::size_t row = 1;
  while (read_record(in, rec)) {
    ++row;
    if (is_blank(rec)) continue;
    if (rec.size() != ncols) {
      throw LoadError("row " + std::to_string(row) + " has " + std::to_string(rec.size()) +
                          " fields, expected " + std::to_string(ncols),
                      row, 0);
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      if (c == label_idx) {
        labels.push_back(trim(rec[c]) == positive_label ? 1 : 0);
        continue;
      }
      double v;
      if (!parse_double(rec[c], v)) {
        throw LoadError("non-numeric value '" + rec[c] + "' at row " + std::to_string(row) +
                            ", column " + std::to_string(c + 1) + " (" +
                            std::string(trim(header[c])) + ")",
                        row, c + 1);
      }
      features.push_back(v);
    }
  }
  if (labels.empty()) throw LoadError("CSV file has a header but no data rows", 0, 0);
  return Dataset(dim, std::move(features), std::move(labels));
}

Dataset load_csv(const std::string& path, const ColumnRef& label_column,
                 const std::string& positive_label) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_csv(in, label_column, positive_label);
}

void write_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << data.label(i) << '\n';
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "shuffle"));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::pair<Dataset, Dataset> split(const Dataset& data, const SplitSpec& spec) {
  if (spec.n_train == 0 || spec.n_test == 0) {
    throw InvalidArgument("split sizes must be positive");
  }
  if (spec.n_train + spec.n_test > data.size()) {
    throw InvalidArgument("split requests " + std::to_string(spec.n_train + spec.n_test) +
                          " samples from a dataset of " + std::to_string(data.size()));
  }
  const auto idx = shuffled_indices(data.size(), spec.seed);
  std::span<const std::size_t> all(idx);
  return {data.subset(all.subspan(0, spec.n_train)),
          data.subset(all.subspan(spec.n_train, spec.n_test))};
}

Standardized standardize(const Dataset& train, const Dataset& test) {
  if (train.empty()) throw InvalidArgument("cannot standardize with an empty train set");
  if (!test.empty() && test.dim() != train.dim()) {
    throw InvalidArgument("train/test dimension mismatch");
  }
  const std::size_t d = train.dim();
  const double n = static_cast<double>(train.size());
  FeatureScaling s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += train.at(i, j);
  for (double& m : s.mean) m /= n;
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = train.at(i, j) - s.mean[j];
      s.stddev[j] += c * c;
    }
  // Population std; relative threshold so rounding noise on a constant
  // column does not get amplified.
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(s.stddev[j] / n);
    s.stddev[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 0.0;
  }

  auto apply = [&](const Dataset& ds) {
    if (ds.empty()) return ds;
    std::vector<double> f(ds.features().begin(), ds.features().end());
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double& v = f[i * d + j];
        v -= s.mean[j];
        if (s.stddev[j] > 0.0) v /= s.stddev[j];
      }
    return Dataset(d, std::move(f), std::vector<int>(ds.labels().begin(), ds.labels().end()));
  };
  return {apply(train), apply(test), s};
}

}  // namespace smoothcal

namespace smoothcal {

Dataset gen_threshold_separable(std::size_t n, std::uint64_t seed) {
  require_even(n);
  Rng rng(derive_seed(seed, "threshold_separable"));
  std::vector<double> f(n * 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    const double mag = 0.05 + 0.95 * rng.uniform();
    f[2 * i] = c == 1 ? mag : -mag;
    f[2 * i + 1] = 2.0 * rng.uniform() - 1.0;
    y[i] = c;
  }
  return Dataset(2, std::move(f), std::move(y));
}

}  // namespace smoothcal

namespace smoothcal {

ValueLabelColumns parse_value_label_csv(std::istream& in, bool logits) {
  if (in.peek() == 0xEF) {
    char bom[3];
    in.read(bom, 3);
  }
  ValueLabelColumns out;
  std::vector<std::string> rec;
  std::size_t line = 0;
  while (read_record(in, rec)) {
    ++line;
    if (is_blank(rec)) continue;
    if (rec.size() != 2) {
      throw LoadError("line " + std::to_string(line) + ": expected 2 fields (value,label), got " +
                          std::to_string(rec.size()),
                      line, 0);
    }
    double v, y;
    if (!parse_double(rec[0], v)) {
      // A non-numeric first row is a header.
      if (out.values.empty() && line == 1) continue;
      throw LoadError("line " + std::to_string(line) + ": value '" + rec[0] + "' is not a finite number",
                      line, 1);
    }
    if (!logits && (v < 0.0 || v > 1.0)) {
      throw LoadError("line " + std::to_string(line) + ": probability " + std::string(trim(rec[0])) +
                          " outside [0, 1]",
                      line, 1);
    }
    if (!parse_double(rec[1], y) || (y != 0.0 && y != 1.0)) {
      throw LoadError("line " + std::to_string(line) + ": label '" + rec[1] + "' is not 0 or 1",
                      line, 2);
    }
    out.values.push_back(v);
    out.labels.push_back(static_cast<int>(y));
  }
  if (out.values.empty()) throw LoadError("input has no data rows", 0, 0);
  return out;
}

ValueLabelColumns read_value_label_csv(const std::string& path, bool logits) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_value_label_csv(in, logits);
}

}  // namespace smoothcal
