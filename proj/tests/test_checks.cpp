#include <gtest/gtest.h>

#include <cmath>

#include "srfe/checks.hpp"

using namespace srfe;

namespace {

const DiscreteDist kP({0.5, 0.5});
const DiscreteDist kQ({0.25, 0.75});

CheckOptions broken() {
  CheckOptions o;
  o.inject_bad_tolerance = true;
  return o;
}

void expect_consistent(const CheckReport& r) {
  // passed <=> every observation satisfies its relation.
  bool all = true;
  std::size_t ti = 0;
  ASSERT_EQ(r.observed.size(), r.relations.size());
  ASSERT_EQ(r.observed.size(), r.labels.size());
  for (std::size_t i = 0; i < r.observed.size(); ++i) {
    const double v = r.observed[i];
    switch (r.relations[i]) {
      case Relation::AtMost: all = all && v <= r.threshold[ti++]; break;
      case Relation::AtLeast: all = all && v >= r.threshold[ti++]; break;
      case Relation::InRange:
        all = all && v >= r.threshold[ti] && v <= r.threshold[ti + 1];
        ti += 2;
        break;
    }
  }
  EXPECT_EQ(ti, r.threshold.size());
  EXPECT_EQ(all, r.passed) << r.name << ": " << r.details;
}

}  // namespace

TEST(KlLimits, WorkedPairAndEqualPair) {
  const auto r = check_kl_limits(kP, kQ);
  EXPECT_TRUE(r.passed) << r.details;
  expect_consistent(r);
  const auto same = check_kl_limits(kQ, kQ);
  EXPECT_TRUE(same.passed) << same.details;
  for (double v : same.observed) EXPECT_LE(v, 1e-14);
  EXPECT_FALSE(check_kl_limits(kP, kQ, {0.02, 0.01}, broken()).passed);
}

TEST(KlLimits, ErrorMatchesFirstOrderCoefficient) {
  // Near tau = 1 the error is (1 - tau) |KL - Var_P / 2| to first order.
  const SurprisalStats s = surprisal_stats(kP, kQ, Weighting::UnderP);
  const double eps = 0.01;
  const double err = std::abs(srfe_discrete(kP, kQ, 1 - eps) - kl_discrete(kP, kQ));
  const double predicted = eps * std::abs(s.mean - 0.5 * s.variance);
  EXPECT_NEAR(err, predicted, 0.05 * predicted);
}

TEST(Expansions, RatiosAndEqualPair) {
  const auto r = check_expansions({{kP, kQ}, {DiscreteDist({0.2, 0.3, 0.5}), DiscreteDist({0.4, 0.4, 0.2})}});
  EXPECT_TRUE(r.passed) << r.details;
  expect_consistent(r);
  const auto same = check_expansions({{kQ, kQ}});
  EXPECT_TRUE(same.passed);
  EXPECT_TRUE(same.observed.empty());
  EXPECT_FALSE(check_expansions({{kP, kQ}}, {1e-3, 5e-4}, broken()).passed);
}

TEST(Expansions, CressieReadAtSmallLambda) {
  const SurprisalStats s = surprisal_stats(kP, kQ, Weighting::UnderP);
  const double lambda = 0.01;
  const double pred = s.mean + 0.5 * lambda * s.variance + lambda * (0.5 * s.mean * s.mean - s.mean);
  EXPECT_LE(std::abs(cr_standard(kP, kQ, lambda) - pred), 1e-3);
}

TEST(FisherMetric, LocationFamily) {
  const double delta = 1e-3;
  for (double sigma : {1.0, 2.0}) {
    for (double tau : {0.2, 0.5, 0.8}) {
      const double metric = 2 * srfe_location_family_quadrature(sigma, tau, delta) / (delta * delta);
      EXPECT_NEAR(metric, 1 / (sigma * sigma), 1e-3 / (sigma * sigma));
    }
  }
  const auto r = check_fisher_metric({1.0, 2.0}, {0.2, 0.5, 0.8});
  EXPECT_TRUE(r.passed) << r.details;
  expect_consistent(r);
  EXPECT_FALSE(check_fisher_metric({1.0}, {0.5}, 1e-3, broken()).passed);
}

TEST(TailBounds, DiscreteAndMonteCarlo) {
  Vec a_grid;
  for (int i = 0; i <= 30; ++i) a_grid.push_back(-1 + 0.1 * i);
  const Vec taus = {0.1, 0.3, 0.5, 0.7, 0.9};
  EXPECT_TRUE(check_tail_bounds({{kP, kQ}, {kQ, kQ}}, taus, a_grid).passed);
  for (double a : {0.1, 1.0}) {
    EXPECT_EQ(exact_tail_prob(kQ, kQ, a), 0.0);
    EXPECT_NEAR(tail_bound(kQ, kQ, 0.5, a), std::exp(-0.5 * a), 1e-15);
  }
  const double s = std::log(std::sqrt(0.5));
  const auto mc = check_tail_bounds_mc(DiagonalGaussian({0, 0}, {s, s}), DiagonalGaussian({1, 0}, {s, s}), taus,
                                       a_grid, 100000);
  EXPECT_TRUE(mc.passed) << mc.details;
  expect_consistent(mc);
  EXPECT_FALSE(check_tail_bounds({{kP, kQ}}, taus, a_grid, broken()).passed);
}

TEST(KlUpperBounds, RandomPairsAndEqualPair) {
  Rng rng(3);
  const auto r = check_kl_upper_bounds(detail::random_pairs(rng, 100, 6, 6), {0.1, 0.5, 0.9});
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(kl_upper_bound_gap(kQ, kQ, 0.4), 0.0, 1e-15);
  EXPECT_FALSE(check_kl_upper_bounds({{kP, kQ}}, {0.5}, broken()).passed);
}

TEST(GradientIdentity, InstancesAndFixedPoint) {
  const Vec logits = {0.4, -0.3, 1.1, 0.0};
  const auto e = gradient_identity_errors(softmax(logits), logits, 0.3);
  EXPECT_LE(e.srfe_fd, 1e-6);
  EXPECT_LE(e.cr_fd, 1e-6);
  EXPECT_LE(e.cr_baseline, 1e-12);
  Rng rng(4);
  const auto inst = detail::random_softmax_instances(rng, 10);
  const auto r = check_gradient_identity(inst, {0.3, 0.7});
  EXPECT_TRUE(r.passed) << r.details;
  EXPECT_FALSE(check_gradient_identity(inst, {0.3}, broken()).passed);
}

TEST(MonotoneEquivalence, TransformAndSweep) {
  EXPECT_NEAR(cr_to_srfe(0.136295, 0.5), 0.138673, 2e-6);
  EXPECT_NEAR(cr_to_srfe(cr_associated(kP, kQ, 0.5), 0.5), srfe_discrete(kP, kQ, 0.5), 1e-14);
  EXPECT_TRUE(check_monotone_equivalence(2000, 0.5).passed);
  EXPECT_TRUE(check_monotone_equivalence(2000, 0.2).passed);
  EXPECT_FALSE(check_monotone_equivalence(10, 0.5, broken()).passed);
}

TEST(NotFDivergence, ProbeAndControl) {
  const auto r = check_not_f_divergence({0.5, 0.9});
  EXPECT_TRUE(r.passed) << r.details;
  expect_consistent(r);
  EXPECT_FALSE(check_not_f_divergence({0.5}, broken()).passed);
}

TEST(SecondMoments, BoundsAndDivergence) {
  Rng rng(5);
  auto inst = detail::random_softmax_instances(rng, 10);
  const Vec logits = {0.2, -0.1, 0.5};
  inst.emplace_back(softmax(logits), logits);
  const auto r = check_second_moment_bounds(inst, {0.3, 0.7}, {0.7, 0.9});
  EXPECT_TRUE(r.passed) << r.details;
  expect_consistent(r);
  EXPECT_FALSE(check_second_moment_bounds(inst, {0.3}, {0.9}, broken()).passed);
}

TEST(SecondMoments, GrowthNeedsTauAboveHalf) {
  // sum_i q_i u_i^(2 tau) ~ q_0^(1 - 2 tau) on the vanishing point.
  const DiscreteDist p({0.5, 0.3, 0.2});
  const auto seq = vanishing_mass_logits(3, 2, 8);
  auto growth = [&](double tau) {
    return exact_second_moment(EstimatorKind::CR, p, seq.back(), tau) /
           exact_second_moment(EstimatorKind::CR, p, seq.front(), tau);
  };
  EXPECT_GT(growth(0.9), 1e3);
  EXPECT_LT(growth(0.3), 1.0);
}

TEST(Variational, SmallSweep) {
  const auto r = check_variational_characterization(20, 5);
  EXPECT_TRUE(r.passed) << r.details;
  expect_consistent(r);
}

TEST(Pathwise, SmallSweep) {
  const auto r = check_pathwise_gradient(10, 128);
  EXPECT_TRUE(r.passed) << r.details;
  EXPECT_FALSE(check_pathwise_gradient(2, 64, broken()).passed);
}

TEST(GaussianClosedForm, SmallSample) {
  const auto r = check_gaussian_closed_form({0.5}, 100000);
  EXPECT_TRUE(r.passed) << r.details;
}

TEST(Suite, NamesAreUniqueAndDeterministic) {
  const auto names = suite_check_names();
  EXPECT_EQ(names.size(), 13u);
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) EXPECT_NE(names[i], names[j]);
  }
  const auto a = check_variational_characterization(5, 3, CheckOptions{7, false});
  const auto b = check_variational_characterization(5, 3, CheckOptions{7, false});
  EXPECT_EQ(a.observed, b.observed);
}
