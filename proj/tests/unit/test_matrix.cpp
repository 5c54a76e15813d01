#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "deft/errors.hpp"
#include "deft/matrix.hpp"

using deft::Matrix;

TEST(Matrix, DefaultIsEmpty) {
  const Matrix m;
  EXPECT_EQ(m.rows(), 0u);
  EXPECT_EQ(m.cols(), 0u);
  EXPECT_TRUE(m.empty());
}

TEST(Matrix, RowMajorLayout) {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.data()[1], 2.0);
  EXPECT_EQ(m.data()[3], 4.0);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.row(1)[0], 4.0);
}

TEST(Matrix, DataLengthMustMatchShape) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), deft::ShapeError);
}

TEST(Matrix, RaggedRowsRejected) {
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), deft::ShapeError);
}

TEST(Matrix, ColumnAccess) {
  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(m.column(1), (std::vector<double>{2, 4, 6}));
  const std::vector<double> c{7, 8, 9};
  m.set_column(0, c);
  EXPECT_EQ(m(2, 0), 9.0);
  const Matrix tail = m.columns(1, 1);
  EXPECT_EQ(tail.cols(), 1u);
  EXPECT_EQ(tail(0, 0), 2.0);
  EXPECT_THROW(m.columns(1, 2), deft::ShapeError);
}

TEST(Matrix, IdentityAndDiagonal) {
  const Matrix i = Matrix::identity(3);
  const std::vector<double> d{1, 1, 1};
  EXPECT_EQ(i, Matrix::diagonal(d));
  EXPECT_EQ(i(0, 1), 0.0);
}

TEST(Matrix, BitEqualDistinguishesSignedZero) {
  const Matrix a(1, 1, 0.0);
  const Matrix b(1, 1, -0.0);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a.bit_equal(b));
  EXPECT_TRUE(a.bit_equal(Matrix(1, 1, 0.0)));
}

TEST(Matrix, Finiteness) {
  Matrix m(2, 2, 1.0);
  EXPECT_TRUE(m.is_finite());
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(m.is_finite());
}

TEST(Matrix, ShapeString) { EXPECT_EQ(Matrix(3, 5).shape_string(), "3x5"); }
