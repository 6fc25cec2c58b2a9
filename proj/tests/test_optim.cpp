#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gcvrnn/optim.hpp"

using namespace gcvrnn;

TEST(Adam, FirstStepWithUnitGradientMovesByLearningRate) {
  ParameterStore s;
  auto& p = s.add("p", Tensor::scalar(0.0));
  Adam opt(s);
  p.grad[0] = 1.0;
  opt.step();
  // m̂ = v̂ = 1, so the update is lr / (1 + eps)
  EXPECT_NEAR(p.value.item(), -1e-3 / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, ZeroGradientIsIdentity) {
  std::mt19937_64 rng(1);
  ParameterStore s;
  auto& p = s.add("p", normal_tensor({3, 3}, rng));
  const Tensor before = p.value;
  Adam opt(s);
  for (int i = 0; i < 5; ++i) opt.step();
  EXPECT_EQ(p.value, before);
}

TEST(Adam, DecaysEveryTwentyEpochs) {
  ParameterStore s;
  s.add("p", Tensor::scalar(0.0));
  Adam opt(s);
  for (std::uint64_t e = 1; e <= 19; ++e) opt.epoch_tick(e);
  EXPECT_DOUBLE_EQ(opt.learning_rate(), 1e-3);
  opt.epoch_tick(20);
  EXPECT_NEAR(opt.learning_rate(), 9e-4, 1e-18);
  for (std::uint64_t e = 21; e <= 40; ++e) opt.epoch_tick(e);
  EXPECT_NEAR(opt.learning_rate(), 8.1e-4, 1e-18);
}

TEST(Adam, MissingGradientIsContractError) {
  ParameterStore s;
  auto& p = s.add("p", Tensor::zeros(2, 2));
  Adam opt(s);
  p.grad = Tensor();
  EXPECT_THROW(opt.step(), ContractError);
}

TEST(Adam, MomentsShapedLikeParametersAndStepCounterIncreases) {
  ParameterStore s;
  s.add("a", Tensor::zeros(2, 3));
  s.add("b", Tensor::zeros(1, 4));
  Adam opt(s);
  ASSERT_EQ(opt.first_moments().size(), 2u);
  EXPECT_EQ(opt.first_moments()[0].shape(), (Shape{2, 3}));
  EXPECT_EQ(opt.second_moments()[1].shape(), (Shape{1, 4}));
  for (std::uint64_t k = 1; k <= 3; ++k) {
    opt.step();
    EXPECT_EQ(opt.step_count(), k);
  }
}

TEST(Adam, MatchesReferenceRecurrence) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  ParameterStore s;
  auto& p = s.add("p", Tensor::scalar(0.25));
  Adam opt(s);
  double w = 0.25, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double grad = g(rng);
    p.grad[0] = grad;
    opt.step();
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value.item(), w, 1e-15);
  }
}
