#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "sfe/data_model.hpp"

namespace sfe {
namespace {

Dataset single_column(std::initializer_list<double> col, std::initializer_list<double> y) {
  Matrix x(static_cast<Index>(col.size()), 1);
  Index i = 0;
  for (double v : col) x(i++, 0) = v;
  Vector yv(static_cast<Index>(y.size()));
  i = 0;
  for (double v : y) yv[i++] = v;
  return Dataset::infer({"x"}, std::move(x), std::move(yv));
}

TEST(DataModel, NormalizeEndpointsAndMidpoint) {
  const auto nd = unity_normalize(single_column({0, 5, 10}, {0, 1, 2}));
  EXPECT_EQ(nd.xn(0, 0), -1.0);
  EXPECT_EQ(nd.xn(1, 0), 0.0);
  EXPECT_EQ(nd.xn(2, 0), 1.0);
}

TEST(DataModel, ConstantColumnMapsToZero) {
  const auto nd = unity_normalize(single_column({3, 3, 3}, {0, 1, 2}));
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(nd.xn(i, 0), 0.0);
}

TEST(DataModel, HandEvaluatedColumn) {
  const auto nd = unity_normalize(single_column({2, 4, 10}, {0, 8, 4}));
  EXPECT_DOUBLE_EQ(nd.xn(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(nd.xn(1, 0), -0.5);
  EXPECT_DOUBLE_EQ(nd.xn(2, 0), 1.0);
  EXPECT_EQ(nd.yn[0], 0.0);
  EXPECT_EQ(nd.yn[1], 1.0);
  EXPECT_EQ(nd.yn[2], 0.5);
}

TEST(DataModel, MissingCodeMapsToZero) {
  Matrix x(4, 1);
  x << 1, 99, 3, 5;
  Vector y(4);
  y << 0, 1, 2, 3;
  const auto d = Dataset::infer({"x"}, x, y, 99.0);
  const auto nd = unity_normalize(d);
  EXPECT_EQ(nd.xn(0, 0), -1.0);
  EXPECT_EQ(nd.xn(1, 0), 0.0);
  EXPECT_EQ(nd.xn(2, 0), 0.0);
  EXPECT_EQ(nd.xn(3, 0), 1.0);
}

TEST(DataModel, DegenerateOutcome) {
  EXPECT_THROW(unity_normalize(single_column({1, 2, 3}, {4, 4, 4})), Error);
}

TEST(DataModel, Invariants) {
  Matrix x(1, 1);
  x << 1;
  Vector y(1);
  y << 0;
  EXPECT_THROW(Dataset::infer({"x"}, x, y), Error);

  Matrix x2(3, 2);
  x2 << 1, 2, 3, 4, 5, 6;
  Vector y3(3);
  y3 << 0, 1, 2;
  EXPECT_THROW(Dataset::infer({"a", "a"}, x2, y3), Error);
  Vector y2(2);
  y2 << 0, 1;
  EXPECT_THROW(Dataset::infer({"a", "b"}, x2, y2), Error);
  Matrix x3(3, 1);
  x3 << 0, 1, 2;
  EXPECT_THROW(Dataset({{"b", ColumnKind::binary}}, x3, y3), Error);
}

TEST(DataModel, DenormalizeEffect) {
  NormalizedData nd;
  nd.y_min = 0;
  nd.y_max = 8;
  EXPECT_EQ(denormalize_effect(0.0, nd), 0.0);
  EXPECT_EQ(denormalize_effect(1.0, nd), 8.0);
  nd.y_min = 100;
  nd.y_max = 500;
  EXPECT_EQ(denormalize_effect(0.25, nd), 100.0);
}

Dataset random_dataset(std::mt19937_64& rng, Index n, Index m) {
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  Matrix x(n, m);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index a = 0; a < m; ++a) x(i, a) = u(rng);
    y[i] = u(rng);
  }
  std::vector<std::string> names;
  for (Index a = 0; a < m; ++a) names.push_back("c" + std::to_string(a));
  return Dataset::infer(names, x, y);
}

TEST(DataModel, Idempotent) {
  std::mt19937_64 rng(1);
  const auto nd = unity_normalize(random_dataset(rng, 30, 5));
  const auto again = unity_normalize(Dataset::infer(nd.column_names, nd.xn, nd.yn));
  EXPECT_LE((again.xn - nd.xn).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((again.yn - nd.yn).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DataModel, RoundTrip) {
  std::mt19937_64 rng(2);
  const auto d = random_dataset(rng, 40, 4);
  const auto nd = unity_normalize(d);
  for (Index a = 0; a < d.cols(); ++a) {
    const double lo = nd.x_min[a], hi = nd.x_max[a];
    for (Index i = 0; i < d.rows(); ++i) {
      const double raw = lo + (nd.xn(i, a) + 1.0) * (hi - lo) / 2.0;
      EXPECT_NEAR(raw, d.x()(i, a), 1e-12 * std::max(1.0, std::abs(raw)));
      EXPECT_NEAR(2.0 * (raw - lo) / (hi - lo) - 1.0, nd.xn(i, a), 1e-12);
    }
  }
}

TEST(DataModel, ColumnPermutationEquivariance) {
  std::mt19937_64 rng(3);
  const auto d = random_dataset(rng, 25, 6);
  const std::vector<Index> perm{4, 0, 5, 2, 1, 3};
  const auto nd = unity_normalize(d);
  const auto np = unity_normalize(d.permute_columns(perm));
  for (Index k = 0; k < 6; ++k) {
    EXPECT_EQ(np.column_names[static_cast<std::size_t>(k)], nd.column_names[static_cast<std::size_t>(perm[k])]);
    for (Index i = 0; i < 25; ++i) EXPECT_EQ(np.xn(i, k), nd.xn(i, perm[k]));
  }
}

TEST(DataModel, CsvParsing) {
  const auto t = csv::parse("a,\"b,c\",y\n1,2,3\n\"4\",5,\"6\"\"\"\n");
  ASSERT_EQ(t.header.size(), 3u);
  EXPECT_EQ(t.header[1], "b,c");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][2], "6\"");
  EXPECT_THROW(csv::parse("a,b\n1,2,3\n"), Error);
}

TEST(DataModel, DatasetFromTable) {
  const auto d = dataset_from_table(csv::parse("x,y,z\n1,10,0\n2,20,1\n3,30,0\n"), "y");
  EXPECT_EQ(d.cols(), 2);
  EXPECT_EQ(d.column_names(), (std::vector<std::string>{"x", "z"}));
  EXPECT_EQ(d.columns()[1].kind, ColumnKind::binary);
  EXPECT_EQ(d.y()[2], 30.0);

  try {
    dataset_from_table(csv::parse("x,y\n1,2\n2,3\n"), "earnings");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
    EXPECT_NE(std::string(e.what()).find("earnings"), std::string::npos);
  }
  try {
    dataset_from_table(csv::parse("x,y\n1,2\nabc,3\n"), "y");
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row"), std::string::npos);
    EXPECT_NE(msg.find("x"), std::string::npos);
  }
}

TEST(DataModel, WriteReadRoundTrip) {
  std::mt19937_64 rng(4);
  const auto d = random_dataset(rng, 10, 3);
  std::ostringstream out;
  write_dataset(out, d);
  const auto back = dataset_from_table(csv::parse(out.str()), d.outcome_name());
  EXPECT_EQ(back.x(), d.x());
  EXPECT_EQ(back.y(), d.y());
}

}  // namespace
}  // namespace sfe
