#include <gtest/gtest.h>

#include "dfctbn/error.hpp"
#include "dfctbn/tensor.hpp"
#include "support/oracles.hpp"

using dfctbn::Tensor3;

TEST(Tensor3, UnfoldFoldRoundTrip) {
  dfctbn::Rng rng(11);
  const Tensor3 t = oracle::random_tensor(rng, {4, 3, 5});
  for (int mode = 0; mode < 3; ++mode) {
    const Eigen::MatrixXd u = t.unfold(mode);
    EXPECT_EQ(u.rows(), t.dim(mode));
    EXPECT_EQ(Tensor3::fold(u, mode, t.dims()), t);
  }
}

TEST(Tensor3, UnfoldingPreservesNorm) {
  dfctbn::Rng rng(12);
  const Tensor3 t = oracle::random_tensor(rng, {2, 6, 3});
  for (int mode = 0; mode < 3; ++mode) EXPECT_NEAR(t.unfold(mode).squaredNorm(), t.squared_norm(), 1e-12);
}

TEST(Tensor3, ModeProductMatchesLoopOracle) {
  dfctbn::Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const Tensor3 t = oracle::random_tensor(rng, {5, 4, 3});
    for (int mode = 0; mode < 3; ++mode) {
      const Eigen::MatrixXd u = oracle::random_matrix(rng, 2 + rep % 3, t.dim(mode));
      const Tensor3 got = dfctbn::mode_product(t, u, mode);
      const Tensor3 want = oracle::mode_product(t, u, mode);
      ASSERT_EQ(got.dims(), want.dims());
      EXPECT_LE((got.flat() - want.flat()).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Tensor3, ModeProductRejectsWrongWidth) {
  const Tensor3 t({2, 3, 4});
  EXPECT_THROW(dfctbn::mode_product(t, Eigen::MatrixXd::Identity(3, 3), 0), dfctbn::DimensionError);
  EXPECT_THROW(t.unfold(3), dfctbn::DimensionError);
}

TEST(Tensor3, ArithmeticAndInner) {
  Tensor3 a({1, 2, 2}, 1.0);
  Tensor3 b({1, 2, 2}, 2.0);
  EXPECT_DOUBLE_EQ(dfctbn::inner(a, b), 8.0);
  EXPECT_EQ(b - a, a);
  a *= 3.0;
  EXPECT_DOUBLE_EQ(a(0, 1, 1), 3.0);
  EXPECT_THROW(a += Tensor3({2, 2, 2}), dfctbn::DimensionError);
}
