#include "c2m3/perm.hpp"

#include "testing.hpp"

#include <gtest/gtest.h>

using namespace c2m3;
using c2m3::testing::brute_force_lap;
using c2m3::testing::error_code_of;
using c2m3::testing::random_matrix;
using c2m3::testing::random_permutation;

TEST(Permutation, RejectsNonBijections) {
  EXPECT_EQ(error_code_of([] { Permutation({0, 0, 1}); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(error_code_of([] { Permutation({0, 3, 1}); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(error_code_of([] { Permutation({-1, 0}); }), ErrorCode::kInvalidInput);
  EXPECT_NO_THROW(Permutation({2, 0, 1}));
}

TEST(Permutation, MatrixConvention) {
  const Permutation p({2, 0, 1});
  const Matrix m = p.matrix();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), p[i] == j ? 1.0 : 0.0);
  }
}

TEST(Permutation, ComposeMatchesMatrixProduct) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Permutation p = random_permutation(6, rng);
    const Permutation q = random_permutation(6, rng);
    EXPECT_EQ(compose(p, q).matrix(), p.matrix() * q.matrix());
  }
}

TEST(Permutation, ComposeIsAssociativeAndInverts) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Permutation p = random_permutation(7, rng);
    const Permutation q = random_permutation(7, rng);
    const Permutation r = random_permutation(7, rng);
    EXPECT_EQ(compose(compose(p, q), r), compose(p, compose(q, r)));
    EXPECT_TRUE(compose(p, invert(p)).is_identity());
    EXPECT_TRUE(compose(invert(p), p).is_identity());
    EXPECT_EQ(invert(p).matrix(), p.matrix().transpose());
  }
}

TEST(Permutation, ComposeRejectsSizeMismatch) {
  EXPECT_EQ(error_code_of([] { compose(Permutation::identity(2), Permutation::identity(3)); }),
            ErrorCode::kShapeMismatch);
}

TEST(Permutation, RowAndColumnActionsMatchDenseProducts) {
  std::mt19937_64 rng(13);
  const Permutation p = random_permutation(5, rng);
  const Matrix x = random_matrix(5, 4, rng);
  const Matrix y = random_matrix(3, 5, rng);
  EXPECT_EQ(permute_rows(p, x), p.matrix() * x);
  EXPECT_EQ(permute_cols_transposed(y, p), y * p.matrix().transpose());
  const Vector v = random_matrix(5, 1, rng).col(0);
  EXPECT_EQ(permute_rows(p, v), p.matrix() * v);
}

TEST(Lap, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(21);
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 30; ++trial) {
      const Matrix profit = random_matrix(n, n, rng);
      const Permutation got = lap_maximize(profit);
      const Permutation want = brute_force_lap(profit);
      EXPECT_EQ(assignment_value(profit, got), assignment_value(profit, want));
    }
  }
}

TEST(Lap, TiesPickLexicographicallySmallest) {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> small(0, 2);
  for (int n = 2; n <= 6; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      Matrix profit(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) profit(i, j) = small(rng);
      }
      EXPECT_EQ(lap_maximize(profit), brute_force_lap(profit)) << profit;
    }
  }
  // All-equal profits: the identity is the smallest assignment vector.
  EXPECT_TRUE(lap_maximize(Matrix::Ones(5, 5)).is_identity());
}

TEST(Lap, HandExample) {
  Matrix profit(3, 3);
  profit << 1, 2, 3,
            2, 4, 6,
            3, 6, 9;
  // Rank-one profit with sorted factors: the sorted pairing (identity) wins,
  // 1 + 4 + 9 = 14.
  EXPECT_TRUE(lap_maximize(profit).is_identity());
  Matrix swap(2, 2);
  swap << 0, 1,
          1, 0;
  EXPECT_EQ(lap_maximize(swap), Permutation({1, 0}));
}

TEST(Lap, RejectsBadInput) {
  EXPECT_EQ(error_code_of([] { lap_maximize(Matrix::Zero(2, 3)); }), ErrorCode::kInvalidInput);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(error_code_of([&] { lap_maximize(bad); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(lap_maximize(Matrix(0, 0)).size(), 0);
}

TEST(Lap, LargeInstanceIsAPermutationAndBeatsIdentity) {
  std::mt19937_64 rng(23);
  const Matrix profit = random_matrix(128, 128, rng);
  const Permutation p = lap_maximize(profit);
  EXPECT_EQ(p.size(), 128);
  EXPECT_GE(assignment_value(profit, p), assignment_value(profit, Permutation::identity(128)));
  // Local optimality: no 2-swap improves.
  for (int i = 0; i < 128; ++i) {
    for (int j = i + 1; j < 128; ++j) {
      const double now = profit(i, p[i]) + profit(j, p[j]);
      const double swapped = profit(i, p[j]) + profit(j, p[i]);
      EXPECT_LE(swapped, now + 1e-9);
    }
  }
}

TEST(DoublyStochastic, ValidatesAndBuildsExactInits) {
  EXPECT_EQ(error_code_of([] { DoublyStochastic(Matrix::Ones(3, 3)); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(error_code_of([] { DoublyStochastic(Matrix::Zero(2, 3)); }), ErrorCode::kInvalidInput);
  const DoublyStochastic id = DoublyStochastic::identity(4);
  EXPECT_EQ(id.matrix(), Matrix::Identity(4, 4));
  const DoublyStochastic bary = DoublyStochastic::barycenter(4);
  EXPECT_EQ(bary.matrix(), Matrix::Constant(4, 4, 0.25));
  EXPECT_EQ(stochastic_deviation(bary.matrix()), 0.0);
  EXPECT_TRUE(is_doubly_stochastic(bary.matrix()));
}

TEST(DoublyStochastic, ProjectionOfPermutationIsItself) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Permutation p = random_permutation(8, rng);
    EXPECT_EQ(project_to_permutation(DoublyStochastic(p.matrix())), p);
  }
}

TEST(Sinkhorn, ConvergesOnPositiveMatrices) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> pos(0.01, 5.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 9;
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) m(i, j) = pos(rng);
    }
    const SinkhornResult r = sinkhorn_knopp(m, 5000, 1e-10);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(r.deviation, 1e-10);
    EXPECT_LT((r.matrix.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-8);
    EXPECT_LT((r.matrix.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-8);
    // Sinkhorn scaling preserves cross ratios m_ij m_kl / (m_il m_kj).
    const double before = m(0, 0) * m(1, 1) / (m(0, 1) * m(1, 0));
    const double after = r.matrix(0, 0) * r.matrix(1, 1) / (r.matrix(0, 1) * r.matrix(1, 0));
    EXPECT_NEAR(after / before, 1.0, 1e-9);
  }
}

TEST(Sinkhorn, HandCaseTwoByTwo) {
  Matrix m(2, 2);
  m << 1, 1,
       1, 1;
  const SinkhornResult r = sinkhorn_knopp(m);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.matrix, Matrix::Constant(2, 2, 0.5));
}

TEST(Sinkhorn, RejectsBadInput) {
  EXPECT_EQ(error_code_of([] { sinkhorn_knopp(Matrix::Zero(2, 2)); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(error_code_of([] { sinkhorn_knopp(Matrix::Ones(2, 3)); }), ErrorCode::kInvalidInput);
  EXPECT_EQ(error_code_of([] { sinkhorn_knopp(Matrix::Ones(2, 2), 0); }), ErrorCode::kInvalidInput);
}

TEST(Sinkhorn, ReportsNonConvergence) {
  Matrix m(3, 3);
  m << 1, 1e-9, 1e-9,
       1e-9, 1, 1e-9,
       5, 5, 1;
  const SinkhornResult r = sinkhorn_knopp(m, 1, 1e-15);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.sweeps, 1);
}
