#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "slr/data_io.hpp"

namespace {

using slr::Dataset;
using slr::DenseMatrix;
using slr::Index;
using slr::Vector;

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return slr::parse_libsvm(in);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const slr::ParseError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no parse error for: " << text;
  return 0;
}

TEST(ParseLibsvm, Example) {
  const Dataset ds = parse("+1 1:0.5 3:2\n-1 2:1\n");
  EXPECT_EQ(ds.X.rows(), 2);
  EXPECT_EQ(ds.X.cols(), 3);
  EXPECT_EQ(ds.X.nnz(), 3);
  EXPECT_EQ(ds.b, (Vector{{1.0, -1.0}}));
  EXPECT_EQ(ds.X.to_dense(), (DenseMatrix{{0.5, 0.0, 2.0}, {0.0, 1.0, 0.0}}));
}

TEST(ParseLibsvm, CommentsBlankLinesAndOverride) {
  std::istringstream in("# header\n\n1 2:3 # trailing\n\t0  1:1e-3\n");
  const Dataset ds = slr::parse_libsvm(in, Index{6});
  EXPECT_EQ(ds.X.rows(), 2);
  EXPECT_EQ(ds.X.cols(), 6);
  EXPECT_EQ(ds.b, (Vector{{1.0, -1.0}}));
  EXPECT_DOUBLE_EQ(ds.X.to_dense()(1, 0), 1e-3);
}

TEST(ParseLibsvm, EmptyInputHasNoSamples) {
  try {
    parse("\n# nothing\n");
    FAIL();
  } catch (const slr::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no samples"), std::string::npos);
  }
}

TEST(ParseLibsvm, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("1 1:1\n-1 3:1 2:1\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\n\n-1 0:4\n"), 3u);
  EXPECT_EQ(error_line("x 1:1\n"), 1u);
  EXPECT_EQ(error_line("1 1:1\n-1 1:abc\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\n-1 2\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\n-1 2:2 2:3\n"), 2u);
  EXPECT_EQ(error_line("1 1:1\n-1 2:nan\n"), 2u);
}

TEST(ParseLibsvm, RoundTripIsBitExact) {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd(0.0, 1e3);
  std::uniform_real_distribution<double> ud;
  slr::SparseRowMatrix x(15, 40);
  std::vector<Eigen::Triplet<double>> trip;
  for (Index i = 0; i < 15; ++i) {
    for (Index j = 0; j < 40; ++j) {
      if (ud(rng) < 0.2) trip.emplace_back(i, j, nd(rng) * std::pow(10.0, static_cast<double>(j % 9) - 4.0));
    }
  }
  trip.emplace_back(0, 39, 5e-324);
  trip.emplace_back(1, 38, 1.7976931348623157e308);
  x.setFromTriplets(trip.begin(), trip.end());
  Vector labels(15);
  for (Index i = 0; i < 15; ++i) labels[i] = i % 3 == 0 ? 7.0 : 2.0;

  const slr::DesignMatrix original(x);
  std::stringstream buf;
  slr::write_libsvm(buf, original, labels);
  const Dataset back = slr::parse_libsvm(buf, Index{40});
  EXPECT_EQ(back.X.to_dense(), original.to_dense());
  EXPECT_EQ(back.labels, labels);
}

TEST(CanonicalizeLabels, SmallerMapsToMinusOne) {
  EXPECT_EQ(slr::canonicalize_labels(Vector{{0.0, 1.0, 1.0}}), (Vector{{-1.0, 1.0, 1.0}}));
  EXPECT_EQ(slr::canonicalize_labels(Vector{{-1.0, 1.0}}), (Vector{{-1.0, 1.0}}));
  EXPECT_EQ(slr::canonicalize_labels(Vector{{7.0, 2.0}}), (Vector{{1.0, -1.0}}));
  EXPECT_THROW(slr::canonicalize_labels(Vector{{1.0, 1.0}}), slr::InvalidArgument);
  EXPECT_THROW(slr::canonicalize_labels(Vector{{1.0, 2.0, 3.0}}), slr::InvalidArgument);
}

TEST(Standardize, Examples) {
  const DenseMatrix x{{1.0, 4.0}, {-1.0, 4.0}};
  const auto s = slr::standardize_columns(slr::DesignMatrix(x));
  EXPECT_EQ(s.X.to_dense().col(0), (Vector{{1.0, -1.0}}));
  EXPECT_EQ(s.X.to_dense().col(1), Vector::Zero(2));
  EXPECT_EQ(s.zero_variance_columns, std::vector<Index>{1});
  EXPECT_THROW(slr::standardize_columns(slr::DesignMatrix(DenseMatrix{{1.0}})), slr::InvalidArgument);
}

TEST(Standardize, MomentsOfRandomColumns) {
  std::mt19937 rng(8);
  std::normal_distribution<double> nd(3.0, 5.0);
  DenseMatrix x(37, 6);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
  const DenseMatrix z = slr::standardize_columns(slr::DesignMatrix(x)).X.to_dense();
  for (Index j = 0; j < z.cols(); ++j) {
    const double mean = z.col(j).mean();
    EXPECT_LE(std::abs(mean), 1e-12);
    EXPECT_LE(std::abs(z.col(j).squaredNorm() / 37.0 - 1.0), 1e-10);
  }
}

TEST(SynthGen, DensityBalanceAndMoments) {
  const Dataset ds = slr::synth_gen(200, 5000, 1);
  EXPECT_NEAR(ds.X.density(), 0.30, 0.02);
  const Index pos = (ds.b.array() > 0.0).count();
  EXPECT_EQ(pos, 100);
  EXPECT_LE(std::abs(pos - (200 - pos)), 1);

  double sum = 0.0;
  double sq = 0.0;
  double count = 0.0;
  const auto& s = ds.X.sparse();
  for (Index i = 0; i < s.outerSize(); ++i) {
    if (ds.b[i] < 0.0) continue;
    for (slr::SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
      sum += it.value();
      sq += it.value() * it.value();
      count += 1.0;
    }
  }
  const double mean = sum / count;
  const double se = std::sqrt((sq / count - mean * mean) / count);
  EXPECT_LE(std::abs(mean - 1.0), 3.0 * se);
}

TEST(SynthGen, OddRowCountAndDeterminism) {
  const Dataset a = slr::synth_gen(7, 30, 42);
  EXPECT_EQ((a.b.array() > 0.0).count(), 4);
  const Dataset b = slr::synth_gen(7, 30, 42);
  EXPECT_EQ(a.X.to_dense(), b.X.to_dense());
  EXPECT_EQ(a.labels, b.labels);
  const Dataset c = slr::synth_gen(7, 30, 43);
  EXPECT_NE(a.X.to_dense(), c.X.to_dense());
  EXPECT_THROW(slr::synth_gen(1, 3, 0), slr::InvalidArgument);
}

TEST(Metadata, Fields) {
  const Dataset ds = slr::standardize(slr::synth_gen(10, 20, 5));
  const auto meta = slr::dataset_metadata(ds);
  EXPECT_EQ(meta["m"], 10);
  EXPECT_EQ(meta["n"], 20);
  EXPECT_EQ(meta["standardized"], true);
  EXPECT_EQ(meta["variance_divisor"], "population");
}

}  // namespace
