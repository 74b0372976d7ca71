#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "slr/design_matrix.hpp"
#include "slr/errors.hpp"

namespace slr {

/// Features plus raw and canonical (+-1) labels.
struct Dataset {
  DesignMatrix X;
  Vector labels;        // as read
  Vector b;             // -1 / +1
  bool standardized = false;
  std::vector<Index> zero_variance_columns;
};

/// Smaller raw label -> -1, larger -> +1. Exactly two distinct values required.
inline Vector canonicalize_labels(const Vector& raw) {
  std::set<double> distinct(raw.data(), raw.data() + raw.size());
  if (distinct.size() != 2) {
    throw InvalidArgument("labels must take exactly two distinct values, found " + std::to_string(distinct.size()));
  }
  const double low = *distinct.begin();
  Vector b(raw.size());
  for (Index i = 0; i < raw.size(); ++i) b[i] = raw[i] == low ? -1.0 : 1.0;
  return b;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view tok, std::size_t line, const char* what) {
  // from_chars rejects a leading '+', which LIBSVM labels routinely carry
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(value)) {
    throw ParseError(line, std::string("malformed ") + what + " '" + std::string(tok) + "'");
  }
  return value;
}

inline long long parse_index(std::string_view tok, std::size_t line) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "malformed index '" + std::string(tok) + "'");
  }
  return value;
}

inline std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Read "<label> <index>:<value> ..." lines (1-based ascending indices).
///
/// Blank lines are skipped and everything after '#' is ignored. The column
/// count is the largest index seen unless `n_override` is given.
inline Dataset parse_libsvm(std::istream& in, std::optional<Index> n_override = std::nullopt) {
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> labels;
  long long max_index = 0;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const Index row = static_cast<Index>(labels.size());
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      const std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      return line.substr(start, pos - start);
    };
    labels.push_back(detail::parse_double(next_token(), line_no, "label"));
    long long prev = 0;
    for (std::string_view tok = next_token(); !tok.empty(); tok = next_token()) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) throw ParseError(line_no, "expected index:value, got '" + std::string(tok) + "'");
      const long long idx = detail::parse_index(tok.substr(0, colon), line_no);
      if (idx < 1) throw ParseError(line_no, "index must be >= 1");
      if (idx <= prev) throw ParseError(line_no, "indices must be strictly ascending");
      prev = idx;
      const double value = detail::parse_double(tok.substr(colon + 1), line_no, "value");
      trip.emplace_back(row, static_cast<Index>(idx - 1), value);
      max_index = std::max(max_index, idx);
    }
  }
  if (labels.empty()) throw ParseError(0, "no samples");
  Index n = static_cast<Index>(max_index);
  if (n_override) {
    if (*n_override < n) throw ParseError(0, "feature index exceeds the declared column count");
    n = *n_override;
  }
  SparseRowMatrix x(static_cast<Index>(labels.size()), n);
  x.setFromTriplets(trip.begin(), trip.end());

  Dataset ds;
  ds.X = DesignMatrix(std::move(x));
  ds.labels = Eigen::Map<const Vector>(labels.data(), static_cast<Index>(labels.size()));
  ds.b = canonicalize_labels(ds.labels);
  return ds;
}

/// Write in LIBSVM format. Values use the shortest round-trip representation,
/// so parse_libsvm(write_libsvm(X)) reproduces X bit for bit.
inline void write_libsvm(std::ostream& out, const DesignMatrix& x, const Vector& labels) {
  if (x.rows() != labels.size()) throw ShapeError("write_libsvm: labels length != rows");
  auto write_label = [&](Index i) { out << detail::format_double(labels[i]); };
  if (x.is_sparse()) {
    const auto& s = x.sparse();
    for (Index i = 0; i < s.outerSize(); ++i) {
      write_label(i);
      for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
        if (it.value() != 0.0) out << ' ' << (it.col() + 1) << ':' << detail::format_double(it.value());
      }
      out << '\n';
    }
  } else {
    const auto& d = x.dense();
    for (Index i = 0; i < d.rows(); ++i) {
      write_label(i);
      for (Index j = 0; j < d.cols(); ++j) {
        if (d(i, j) != 0.0) out << ' ' << (j + 1) << ':' << detail::format_double(d(i, j));
      }
      out << '\n';
    }
  }
}

struct StandardizedMatrix {
  DesignMatrix X;                          // dense
  std::vector<Index> zero_variance_columns;
};

/// Center every column and scale it to unit population variance (divisor m).
/// Constant columns end up identically zero and are reported.
inline StandardizedMatrix standardize_columns(const DesignMatrix& x) {
  const Index m = x.rows();
  if (m < 2) throw InvalidArgument("standardize_columns: need at least two samples");
  DenseMatrix d = x.to_dense();
  StandardizedMatrix out;
  for (Index j = 0; j < d.cols(); ++j) {
    auto col = d.col(j);
    col.array() -= col.mean();
    const double var = col.squaredNorm() / static_cast<double>(m);
    if (var > 0.0 && std::sqrt(var) > 1e-14 * (1.0 + col.cwiseAbs().maxCoeff())) {
      col /= std::sqrt(var);
    } else {
      col.setZero();
      out.zero_variance_columns.push_back(j);
    }
  }
  out.X = DesignMatrix(std::move(d));
  return out;
}

inline Dataset standardize(Dataset ds) {
  StandardizedMatrix s = standardize_columns(ds.X);
  ds.X = std::move(s.X);
  ds.zero_variance_columns = std::move(s.zero_variance_columns);
  ds.standardized = true;
  return ds;
}

/// Counter-based generator: every draw is a pure function of (seed, counter).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x243f6a8885a308d3ULL)) {}

  std::uint64_t bits(std::uint64_t counter) const { return mix(key_ + counter * 0x9e3779b97f4a7c15ULL); }

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal from two uniforms (Box-Muller, cosine branch).
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

/// Synthetic two-class data: ceil(m/2) positive rows with N(1,1) features,
/// floor(m/2) negative rows with N(-1,1), each entry then zeroed with probability 0.7.
inline Dataset synth_gen(Index m, Index n, std::uint64_t seed, double zero_fraction = 0.7) {
  if (m < 2 || n < 1) throw InvalidArgument("synth_gen: need m >= 2 and n >= 1");
  const CounterRng rng(seed);
  const Index positives = (m + 1) / 2;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(static_cast<double>(m) * static_cast<double>(n) * (1.0 - zero_fraction) * 1.05));
  Vector labels(m);
  for (Index i = 0; i < m; ++i) {
    const double mean = i < positives ? 1.0 : -1.0;
    labels[i] = mean;
    for (Index j = 0; j < n; ++j) {
      const auto cell = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(j);
      // counters 4c, 4c+1 feed the normal, 4c+2 the sparsity mask
      if (rng.uniform(4 * cell + 2) < zero_fraction) continue;
      const double value = mean + rng.normal(2 * cell);
      if (value != 0.0) trip.emplace_back(i, j, value);
    }
  }
  SparseRowMatrix x(m, n);
  x.setFromTriplets(trip.begin(), trip.end());
  Dataset ds;
  ds.X = DesignMatrix(std::move(x));
  ds.labels = labels;
  ds.b = labels;
  return ds;
}

/// Sidecar describing a dataset file.
inline nlohmann::json dataset_metadata(const Dataset& ds) {
  return {
      {"m", ds.X.rows()},
      {"n", ds.X.cols()},
      {"nnz", ds.X.nnz()},
      {"density", ds.X.density()},
      {"standardized", ds.standardized},
      {"variance_divisor", "population"},
      {"zero_variance_columns", ds.zero_variance_columns.size()},
  };
}

}  // namespace slr
