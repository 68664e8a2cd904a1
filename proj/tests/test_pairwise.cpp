#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "sfe/pairwise.hpp"

namespace sfe {
namespace {

RowVector row(std::initializer_list<double> v) {
  RowVector r(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) r[k++] = x;
  return r;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> v) {
  Matrix m(static_cast<Index>(v.size()), static_cast<Index>(v.begin()->size()));
  Index i = 0;
  for (const auto& r : v) m.row(i++) = row(r);
  return m;
}

TEST(Pairwise, OutcomeDiff) {
  EXPECT_DOUBLE_EQ(outcome_diff(0.7, 0.2), 0.5);
  EXPECT_EQ(outcome_diff(0.2, 0.7), 0.0);
  EXPECT_EQ(outcome_diff(0.5, 0.5), 0.0);
}

TEST(Pairwise, PairDot) {
  EXPECT_DOUBLE_EQ(pair_dot(row({1, 1, 1}), row({1, 1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(pair_dot(row({1, 1, 1}), row({-1, -1, -1})), -1.0);
  EXPECT_DOUBLE_EQ(pair_dot(row({1, -1, 1}), row({1, 1, -1})), -1.0 / 3.0);
  EXPECT_THROW(pair_dot(row({1, 1}), row({1, 1, 1})), Error);
}

TEST(Pairwise, TreatmentLikelihood) {
  EXPECT_DOUBLE_EQ(treatment_likelihood(row({1, -1, 1}), row({-1, 1, -1})), 1.0);
  EXPECT_EQ(treatment_likelihood(row({1, -1, 1}), row({1, -1, 1})), 0.0);
  EXPECT_EQ(treatment_likelihood(row({1, 1}), row({-1, 1})), 0.0);
}

TEST(Pairwise, PhiCx) {
  EXPECT_EQ(phi_cx(row({1, -1}), row({-1, 1})), 0.0);
  EXPECT_NEAR(phi_cx(row({1, 1, 1}), row({1, 1, 1})), std::sqrt(12.0) / 3.0, 1e-15);
  EXPECT_NEAR(phi_cx(row({1, 1, 1}), row({1, 1, -1})), std::sqrt(8.0) / 3.0, 1e-15);
  EXPECT_NEAR(phi_cx(row({1, 1, 1}), row({1, 1, 1})), 1.1547005383792515, 1e-12);
}

TEST(Pairwise, PhiBl) {
  EXPECT_EQ(phi_bl(row({1, 1}), row({1, -1}), row({0, 0})), 0.0);
  EXPECT_EQ(phi_bl(row({1, -1}), row({-1, 1}), row({0.3, 0.7})), 0.0);
  const Matrix sample = rows({{1, 1}, {1, -1}});
  EXPECT_DOUBLE_EQ(phi_bl(sample.row(0), sample.row(1), mean_row(sample)), 1.0);
}

TEST(Pairwise, ObjectiveExamples) {
  Vector yn(2);
  yn << 1.0, 0.0;
  EXPECT_EQ(objective_gamma(0, rows({{1}, {-1}}), yn), 0.0);

  Vector equal(2);
  equal << 0.5, 0.5;
  EXPECT_DOUBLE_EQ(objective_gamma(0, rows({{1}, {1}}), equal), 5.0);

  Vector one(1);
  one << 0.3;
  EXPECT_EQ(objective_gamma(0, rows({{1, -1}}), one), 0.0);
  EXPECT_THROW(objective_gamma(2, rows({{1}, {1}}), equal), Error);
}

TEST(Pairwise, GradientZeroAtFittedPair) {
  Vector yn(2);
  yn << 1.0, 0.0;
  const RowVector g = grad_gamma(0, rows({{1}, {-1}}), yn);
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Pairwise, GradientAtOrigin) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix p(6, 3);
  for (Index i = 0; i < 6; ++i)
    for (Index a = 0; a < 3; ++a) p(i, a) = u(rng);
  p.row(2).setZero();
  Vector yn(6);
  for (Index i = 0; i < 6; ++i) yn[i] = 0.5 * (u(rng) + 1.0);

  RowVector expected = RowVector::Zero(3);
  for (Index j = 0; j < 6; ++j) {
    if (j == 2) continue;
    const double cx = p.row(j).norm() / 3.0;
    expected += 2.0 * (1.0 + cx) * std::max(0.0, yn[2] - yn[j]) * p.row(j) / 3.0;
  }
  EXPECT_LT((grad_gamma(2, p, yn) - expected).norm(), 1e-14);
}

// Independent objective with the penalty coefficients frozen at `frozen`.
double frozen_objective(const Matrix& p, const Vector& yn, Index i, const std::vector<double>& x_i,
                        const std::vector<double>& cx, const std::vector<double>& bl) {
  const Index n = p.rows();
  const Index m = p.cols();
  double total = 0.0;
  for (Index j = 0; j < n; ++j) {
    if (j == i) continue;
    double dot = 0.0;
    for (Index a = 0; a < m; ++a) dot += x_i[a] * p(j, a);
    dot /= static_cast<double>(m);
    const double y = yn[i] > yn[j] ? yn[i] - yn[j] : 0.0;
    total += (1.0 + cx[j]) * (dot + y) * (dot + y) + bl[j] * dot * dot;
  }
  return total;
}

TEST(Pairwise, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> n_dist(2, 10), m_dist(1, 8);
  double worst = 0.0;
  for (int instance = 0; instance < 200; ++instance) {
    const Index n = n_dist(rng);
    const Index m = m_dist(rng);
    Matrix p(n, m);
    for (Index i = 0; i < n; ++i)
      for (Index a = 0; a < m; ++a) p(i, a) = u(rng);
    Vector yn(n);
    for (Index i = 0; i < n; ++i) yn[i] = 0.5 * (u(rng) + 1.0);
    const Index i = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));

    std::vector<double> cx(n), bl(n);
    const RowVector mean = mean_row(p);
    for (Index j = 0; j < n; ++j) {
      double s2 = 0.0, proj = 0.0;
      for (Index a = 0; a < m; ++a) {
        s2 += (p(i, a) + p(j, a)) * (p(i, a) + p(j, a));
        proj += mean[a] * (p(i, a) + p(j, a));
      }
      cx[j] = std::sqrt(s2) / static_cast<double>(m);
      bl[j] = std::abs(proj) / static_cast<double>(m);
    }

    const double h = 1e-6;
    std::vector<double> fd(m);
    for (Index a = 0; a < m; ++a) {
      std::vector<double> plus(p.row(i).data(), p.row(i).data() + m), minus = plus;
      plus[a] += h;
      minus[a] -= h;
      fd[a] = (frozen_objective(p, yn, i, plus, cx, bl) - frozen_objective(p, yn, i, minus, cx, bl)) /
              (2.0 * h);
    }
    const RowVector g = grad_gamma(i, p, yn);
    double diff = 0.0, norm = 0.0;
    for (Index a = 0; a < m; ++a) {
      diff += (g[a] - fd[a]) * (g[a] - fd[a]);
      norm += g[a] * g[a];
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-8);
    worst = std::max(worst, rel);
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Pairwise, BatchTermsMatchPerIndividualKernels) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 12);
    const Index m = 1 + static_cast<Index>(rng() % 6);
    Matrix p(n, m);
    for (Index i = 0; i < n; ++i)
      for (Index a = 0; a < m; ++a) p(i, a) = u(rng);
    Vector yn(n);
    for (Index i = 0; i < n; ++i) yn[i] = 0.5 * (u(rng) + 1.0);

    BatchTerms terms;
    batch_terms(p, yn, mean_row(p), terms);
    EXPECT_NEAR(terms.objective, total_objective(p, yn), 1e-12 * std::max(1.0, terms.objective));
    for (Index i = 0; i < n; ++i) {
      EXPECT_LT((terms.grad.row(i) - grad_gamma(i, p, yn)).norm(), 1e-12);
    }
  }
}

TEST(Pairwise, SymmetryAndBounds) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const Index m = 1 + static_cast<Index>(rng() % 8);
    RowVector a(m), b(m), mean(m);
    for (Index k = 0; k < m; ++k) {
      a[k] = u(rng);
      b[k] = u(rng);
      mean[k] = u(rng);
    }
    EXPECT_EQ(pair_dot(a, b), pair_dot(b, a));
    EXPECT_EQ(phi_cx(a, b), phi_cx(b, a));
    EXPECT_EQ(phi_bl(a, b, mean), phi_bl(b, a, mean));
    const double lik = treatment_likelihood(a, b);
    EXPECT_GE(lik, 0.0);
    EXPECT_LE(lik, 1.0);
    EXPECT_GE(phi_cx(a, b), 0.0);
    EXPECT_LE(phi_cx(a, b), 2.0 / std::sqrt(static_cast<double>(m)) + 1e-15);
  }
}

TEST(Pairwise, BalanceVanishesOnCenteredSample) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix p(8, 3);
  for (Index i = 0; i < 4; ++i) {
    for (Index a = 0; a < 3; ++a) p(i, a) = u(rng);
    p.row(i + 4) = -p.row(i);
  }
  const RowVector mean = mean_row(p);
  EXPECT_EQ(mean.cwiseAbs().maxCoeff(), 0.0);
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) EXPECT_EQ(phi_bl(p.row(i), p.row(j), mean), 0.0);
}

TEST(Pairwise, ObjectiveNonnegative) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix p(5, 3);
    for (Index i = 0; i < 5; ++i)
      for (Index a = 0; a < 3; ++a) p(i, a) = u(rng);
    Vector yn = (Vector::Random(5).array() + 1.0) / 2.0;
    for (Index i = 0; i < 5; ++i) EXPECT_GE(objective_gamma(i, p, yn), 0.0);
  }
}

TEST(Pairwise, Decompose) {
  const Matrix p = rows({{1, -1}, {-1, 1}, {1, 1}});
  Vector yn(3);
  yn << 0.9, 0.1, 0.4;
  const PairDecomposition d = decompose(0, 1, p, yn, mean_row(p));
  EXPECT_DOUBLE_EQ(d.y_ij, 0.8);
  EXPECT_DOUBLE_EQ(d.dot, -1.0);
  EXPECT_DOUBLE_EQ(d.likelihood, 1.0);
  EXPECT_EQ(d.phi_cx, 0.0);
  EXPECT_EQ(d.phi_bl, 0.0);
  const PairDecomposition r = decompose(1, 0, p, yn, mean_row(p));
  EXPECT_EQ(r.y_ij, 0.0);
}

}  // namespace
}  // namespace sfe
