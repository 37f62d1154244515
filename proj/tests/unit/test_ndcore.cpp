#include <gtest/gtest.h>

#include <cmath>

#include "maso/errors.hpp"
#include "maso/ndcore.hpp"
#include "testkit.hpp"

using namespace maso;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m{{1, 2}, {3, 4}};
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, Projector) {
  const Matrix p{{1, 0}, {0, 0}};
  const Matrix v{{5}, {7}};
  EXPECT_EQ(matmul(p, v), (Matrix{{5}, {0}}));
}

TEST(Matmul, HandComputed) {
  // 1+2, 3+4
  EXPECT_EQ(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{1}, {1}}), (Matrix{{3}, {7}}));
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST(Matmul, Associative) {
  testkit::Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = rng.matrix(3, 4), b = rng.matrix(4, 5), c = rng.matrix(5, 2);
    const Matrix l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    const double scale = std::max(1.0, max_abs(l.data()));
    EXPECT_LE(max_abs_diff(l.data(), r.data()) / scale, 1e-9);
  }
}

TEST(Matvec, MatchesMatmulColumn) {
  testkit::Rng rng(2);
  const Matrix a = rng.matrix(4, 3);
  const Vec x = rng.normals(3);
  const Matrix col(3, 1, x);
  const Vec y = matvec(a, x);
  const Matrix ref = matmul(a, col);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y[i], ref(i, 0));
  const Vec yt = matvec_transposed(a, y);
  const Vec ref_t = matvec(transpose(a), y);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(yt[i], ref_t[i], 1e-12);
}

TEST(RowSoftmax, Symmetric) {
  const Matrix s = row_softmax(Matrix{{0, 0}});
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
}

TEST(RowSoftmax, LargeScoresDoNotOverflow) {
  const Matrix s = row_softmax(Matrix{{1000, 0}});
  EXPECT_TRUE(all_finite(s.data()));
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_LT(s(0, 1), 1e-300);
}

TEST(RowSoftmax, LogThree) {
  const Matrix s = row_softmax(Matrix{{0, std::log(3.0)}});
  EXPECT_NEAR(s(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(s(0, 1), 0.75, 1e-15);
}

TEST(RowSoftmax, RowsOnSimplex) {
  testkit::Rng rng(3);
  for (double scale : {0.1, 1.0, 7.5}) {
    const Matrix s = row_softmax(rng.matrix(6, 5, 4.0), scale);
    for (std::size_t r = 0; r < 6; ++r) {
      double sum = 0.0;
      for (double v : s.row(r)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(RowSoftmax, NonPositiveScaleThrows) {
  EXPECT_THROW(row_softmax(Matrix{{1, 2}}, 0.0), DomainError);
}

TEST(RowArgmax, Examples) {
  EXPECT_EQ(row_argmax(Matrix{{1, 3, 2}}), std::vector<std::size_t>{1});
  EXPECT_EQ(row_argmax(Matrix{{5, 5}}), std::vector<std::size_t>{0});
  EXPECT_EQ(row_argmax(Matrix{{-1, -2}}), std::vector<std::size_t>{0});
}

TEST(RowArgmax, EmptyRowThrows) {
  EXPECT_THROW(row_argmax(Matrix(2, 0)), ShapeError);
}

TEST(RowArgmax, InvariantUnderSoftmax) {
  testkit::Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Matrix m = rng.matrix(4, 6);
    EXPECT_EQ(row_argmax(m), row_argmax(row_softmax(m, rng.uniform(0.1, 5.0))));
  }
}

TEST(Solve, RecoversKnownSolution) {
  testkit::Rng rng(5);
  Matrix a = rng.matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) a(i, i) += 4.0;
  const Vec x = rng.normals(4);
  const Vec b = matvec(a, x);
  const Vec got = solve(a, b);
  EXPECT_LE(max_abs_diff(got, x), 1e-12);
}

TEST(Solve, SingularThrows) {
  EXPECT_THROW(solve(Matrix{{1, 2}, {2, 4}}, Vec{1, 2}), DegeneracyError);
}

TEST(Logsumexp, Stable) {
  const Vec v{1000.0, 1000.0};
  EXPECT_NEAR(logsumexp(v), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, Vec(5, 0.0)), ShapeError);
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(numel({2, 3, 4}), 24u);
}
