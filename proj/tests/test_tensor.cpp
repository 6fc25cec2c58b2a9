#include <gtest/gtest.h>

#include "gcvrnn/parameters.hpp"
#include "gcvrnn/tensor.hpp"

using namespace gcvrnn;

TEST(Tensor, ExtentProductMatchesDataLength) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, RankIsBetweenOneAndFour) {
  EXPECT_NO_THROW(Tensor({1, 1, 1, 1}));
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(Tensor(Shape{}), DimensionError);
}

TEST(Tensor, MatrixLiteralIsRowMajor) {
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m[2], 3.0);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), DimensionError);
}

TEST(Tensor, RankOneIsASingleRow) {
  Tensor v(Shape{5}, 2.0);
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 5u);
}

TEST(Tensor, ItemRequiresOneElement) {
  EXPECT_EQ(Tensor::scalar(3.5).item(), 3.5);
  EXPECT_THROW(Tensor::zeros(2, 1).item(), ContractError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor r = m.reshaped({4});
  EXPECT_EQ(r.storage(), m.storage());
  EXPECT_THROW(m.reshaped({3}), DimensionError);
}

TEST(Tensor, FinitenessCheck) {
  Tensor t = Tensor::zeros(2, 2);
  EXPECT_TRUE(t.all_finite());
  t(1, 1) = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, IdentityAndEquality) {
  EXPECT_EQ(Tensor::identity(2), Tensor::matrix({{1, 0}, {0, 1}}));
  EXPECT_FALSE(Tensor::zeros(1, 2) == Tensor::zeros(2, 1));
  EXPECT_EQ(max_abs_diff(Tensor::row({1, 2}), Tensor::row({1, 2.5})), 0.5);
}

TEST(ParameterStore, NamesAreUniqueAndGradShapedLikeValue) {
  ParameterStore s;
  auto& p = s.add("msgnn.st.layer0.W", Tensor::zeros(3, 4));
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  EXPECT_THROW(s.add("msgnn.st.layer0.W", Tensor::zeros(1, 1)), ContractError);
  EXPECT_EQ(s.find("missing"), nullptr);
  EXPECT_EQ(&s.get("msgnn.st.layer0.W"), &p);
  EXPECT_EQ(s.scalar_count(), 12u);
}

TEST(ParameterStore, AddressesStableAcrossGrowth) {
  ParameterStore s;
  Parameter* first = &s.add("a", Tensor::zeros(1, 1));
  for (int i = 0; i < 100; ++i) s.add("p" + std::to_string(i), Tensor::zeros(1, 1));
  EXPECT_EQ(first, &s[0]);
}

TEST(Initializers, GlorotWithinLimit) {
  std::mt19937_64 rng(1);
  Tensor w = glorot_uniform(10, 20, rng);
  const double lim = std::sqrt(6.0 / 30.0);
  for (double v : w.storage()) EXPECT_LE(std::abs(v), lim);
}
