#include <gtest/gtest.h>

#include <cmath>

#include "srfe/evaluation.hpp"
#include "srfe/training.hpp"

using namespace srfe;

TEST(Adam, ZeroGradientLeavesThetaUnchanged) {
  const Vec theta = {0.3, -1.2};
  const AdamStep s = adam_step(AdamState::zeros(2, 0.05), theta, Vec{0.0, 0.0});
  EXPECT_EQ(s.theta, theta);
  EXPECT_EQ(s.state.t, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  const AdamStep s = adam_step(AdamState::zeros(1, 0.05), Vec{1.0}, Vec{1.0});
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(s.theta[0], 1.0 - 0.05 / (1.0 + 1e-8), 1e-15);
  const AdamStep neg = adam_step(AdamState::zeros(1, 0.05), Vec{0.0}, Vec{-3.0});
  EXPECT_NEAR(neg.theta[0], 0.05, 1e-9);
}

TEST(Adam, ConstantGradientGivesSteadyDescent) {
  AdamState st = AdamState::zeros(1, 0.05);
  Vec theta = {0.0};
  for (int t = 0; t < 200; ++t) {
    AdamStep s = adam_step(std::move(st), theta, Vec{2.0});
    EXPECT_LT(s.theta[0], theta[0]);
    EXPECT_NEAR(theta[0] - s.theta[0], 0.05, 1e-6);
    st = std::move(s.state);
    theta = s.theta;
  }
  EXPECT_EQ(st.t, 200u);
}

TEST(Adam, StepBoundAndNonNegativeSecondMoment) {
  Rng rng(1);
  AdamState st = AdamState::zeros(3, 0.05);
  Vec theta = {0, 0, 0};
  for (int t = 0; t < 500; ++t) {
    Vec g = {rng.normal() * 10, rng.normal(), rng.normal() * 0.01};
    AdamStep s = adam_step(std::move(st), theta, g);
    for (std::size_t i = 0; i < 3; ++i) {
      // |m_hat| / sqrt(v_hat) can exceed 1 only transiently; bound it loosely.
      EXPECT_LE(std::abs(s.theta[i] - theta[i]), 0.05 * 3.5);
      EXPECT_GE(s.state.v[i], 0.0);
    }
    st = std::move(s.state);
    theta = s.theta;
  }
}

TEST(Adam, Errors) {
  EXPECT_THROW(adam_step(AdamState::zeros(2, 0.05), Vec{0, 0}, Vec{1.0}), Error);
  try {
    adam_step(AdamState::zeros(2, 0.05), Vec{0, 0}, Vec{1.0, std::nan("")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteValue);
    EXPECT_EQ(e.index().value(), 1u);
  }
}

TEST(TauSchedule, Values) {
  const auto f = TauSchedule::fixed(0.5);
  for (std::size_t t : {1u, 7u, 100u}) EXPECT_EQ(f.at(t, 100), 0.5);

  const auto lin = TauSchedule::linear(0.3, 0.9);
  EXPECT_EQ(lin.at(1, 2000), 0.3);
  EXPECT_EQ(lin.at(2000, 2000), 0.9);
  EXPECT_NEAR(lin.at(1000, 1999), 0.6, 1e-15);
  const auto down = TauSchedule::linear(0.9, 0.3);
  EXPECT_EQ(down.at(1, 17), 0.9);
  EXPECT_EQ(down.at(17, 17), 0.3);

  const auto st = TauSchedule::stepwise_equal({0.3, 0.5, 0.7, 0.9});
  const std::size_t T = 2000;
  EXPECT_EQ(st.at(1, T), 0.3);
  EXPECT_EQ(st.at(T / 2 + 1, T), 0.7);
  EXPECT_EQ(st.at(T, T), 0.9);
  // Monotone non-decreasing for increasing breakpoints.
  double prev = 0;
  for (std::size_t t = 1; t <= T; ++t) {
    EXPECT_GE(st.at(t, T), prev);
    prev = st.at(t, T);
  }
  EXPECT_EQ(st.label(), "stepwise(0.3->0.5->0.7->0.9)");
  EXPECT_EQ(lin.label(), "linear(0.3->0.9)");
  EXPECT_EQ(tau_at(f, 3, 4), 0.5);
}

TEST(TauSchedule, Errors) {
  EXPECT_THROW(TauSchedule::fixed(0.0), Error);
  EXPECT_THROW(TauSchedule::linear(0.3, 1.0), Error);
  EXPECT_THROW(TauSchedule::stepwise({{0.0, 0.3}, {0.5, 0.5}, {0.5, 0.7}}), Error);
  EXPECT_THROW(TauSchedule::stepwise({{0.1, 0.3}}), Error);
  EXPECT_THROW(TauSchedule::stepwise({}), Error);
  EXPECT_THROW(TauSchedule::fixed(0.5).at(0, 10), Error);
  EXPECT_THROW(TauSchedule::fixed(0.5).at(11, 10), Error);
}

TEST(Train, ReproducibleBitForBit) {
  const auto mix = three_mode_mixture();
  const RunConfig cfg{50, 0.05, 300, 17};
  for (const auto& obj : {Objective::srfe(0.5), Objective::forward_kl(), Objective::reverse_kl(),
                          Objective::srfe(TauSchedule::linear(0.3, 0.9))}) {
    const auto a = train(mix, obj, cfg);
    const auto b = train(mix, obj, cfg);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.theta.flat(), b.theta.flat());
    EXPECT_EQ(a.loss_history.size(), 50u);
    for (double l : a.loss_history) EXPECT_TRUE(std::isfinite(l));
  }
  const auto c = train(mix, Objective::srfe(0.5), RunConfig{50, 0.05, 300, 18});
  EXPECT_NE(c.loss_history, train(mix, Objective::srfe(0.5), cfg).loss_history);
}

TEST(Train, RecordsScheduleAndConfig) {
  const auto r = train(three_mode_mixture(), Objective::srfe(TauSchedule::stepwise_equal({0.3, 0.5, 0.7, 0.9})),
                       RunConfig{8, 0.05, 100, 2});
  EXPECT_EQ(r.tau_history, (Vec{0.3, 0.3, 0.5, 0.5, 0.7, 0.7, 0.9, 0.9}));
  EXPECT_EQ(r.seed, 2u);
  EXPECT_EQ(r.config.iterations, 8u);
  EXPECT_EQ(r.objective_label, "SRFE");
}

TEST(Train, StepSizeBoundedByLearningRate) {
  // Re-run the optimizer trajectory step by step through train(T) prefixes.
  const auto mix = three_mode_mixture();
  Vec prev = DiagonalGaussian::standard(2).flat();
  for (std::size_t T = 1; T <= 30; ++T) {
    const Vec cur = train(mix, Objective::srfe(0.5), RunConfig{T, 0.05, 200, 5}).theta.flat();
    for (std::size_t i = 0; i < cur.size(); ++i) EXPECT_LE(std::abs(cur[i] - prev[i]), 0.05 * 3.5);
    prev = cur;
  }
}

TEST(Train, TargetEqualToInitialModel) {
  const auto p = DiagonalGaussian::standard(2);
  const auto r = train(p, Objective::srfe(0.5), RunConfig{100, 0.05, 2000, 3});
  for (double l : r.loss_history) EXPECT_LT(std::abs(l), 0.02);
  for (double v : r.theta.flat()) EXPECT_LT(std::abs(v), 0.3);
}

TEST(Train, InvalidConfig) {
  EXPECT_THROW(train(three_mode_mixture(), Objective::forward_kl(), RunConfig{0, 0.05, 10, 0}), Error);
  EXPECT_THROW(train(three_mode_mixture(), Objective::forward_kl(), RunConfig{10, 0.0, 10, 0}), Error);
}

TEST(Train, ThreeModeMixtureCoverage) {
  const auto mix = three_mode_mixture();
  const auto fkl = train(mix, Objective::forward_kl(), RunConfig{});
  EXPECT_EQ(mode_coverage(fkl.theta, mix), 3u);
  const auto low = train(mix, Objective::srfe(0.1), RunConfig{});
  EXPECT_EQ(mode_coverage(low.theta, mix), 1u);
}
