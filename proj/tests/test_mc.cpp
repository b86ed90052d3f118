#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "srfe/mc.hpp"

using namespace srfe;

namespace {

// Central differences of a scalar function of the flat theta.
Vec fd_theta(const std::function<double(const Vec&)>& f, const Vec& theta, double h = 1e-5) {
  Vec g(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    Vec up = theta, dn = theta;
    up[j] += h;
    dn[j] -= h;
    g[j] = (f(up) - f(dn)) / (2 * h);
  }
  return g;
}

Vec fd_logits(const std::function<double(const DiscreteDist&)>& f, const Vec& logits, double h = 1e-6) {
  Vec g(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    Vec up = logits, dn = logits;
    up[j] += h;
    dn[j] -= h;
    g[j] = (f(softmax(up)) - f(softmax(dn))) / (2 * h);
  }
  return g;
}

// Finite everywhere on x[0] < 0, -inf beyond.
struct HalfPlaneTarget {
  std::size_t dim() const { return 2; }
  double log_prob(std::span<const double> x) const { return x[0] < 0 ? -0.5 * (x[0] * x[0] + x[1] * x[1]) : kNegInf; }
  bool grad_log_prob(std::span<const double> x, std::span<double> g) const {
    g[0] = -x[0];
    g[1] = -x[1];
    return true;
  }
  Vec sample(Rng& rng) const { return {-std::abs(rng.normal()), rng.normal()}; }
};

const DiagonalGaussian kQ({0.4, 0.8}, {0.2, -0.1});

}  // namespace

TEST(SrfeMc, TargetEqualToModelGivesZeroLoss) {
  const auto q = DiagonalGaussian::standard(2);
  Rng rng(1);
  SrfeConfig cfg{0.5, 500};
  const auto out = srfe_mc_evaluate(q, q, cfg, rng.normal_matrix(500, 2));
  EXPECT_NEAR(out.report.loss, 0.0, 1e-12);
  EXPECT_NEAR(out.report.f_hat, 1.0, 1e-12);
  EXPECT_FALSE(out.report.clamped);
  // Per-sample contributions are nonzero; only their expectation vanishes.
  for (double g : out.grad.flat()) EXPECT_LT(std::abs(g), 0.5);
}

TEST(SrfeMc, GaussianPairMatchesClosedForm) {
  const double ls = 0.5 * std::log(0.5);
  const DiagonalGaussian q({0, 0}, {ls, ls});
  const DiagonalGaussian p({1, 0}, {ls, ls});
  Rng rng(2);
  for (double tau : {0.3, 0.5, 0.7}) {
    SrfeConfig cfg{tau, 100000};
    const double loss = srfe_mc_loss(q, p, cfg, rng.normal_matrix(cfg.n_samples, 2)).loss;
    EXPECT_NEAR(loss, 1.0, 0.05) << tau;
  }
}

TEST(SrfeMc, ClampedWhenFarFromTarget) {
  const DiagonalGaussian q({50, 50}, {0, 0});
  const auto mix = three_mode_mixture();
  Rng rng(3);
  SrfeConfig cfg{0.5, 200};
  const auto out = srfe_mc_evaluate(q, mix, cfg, rng.normal_matrix(200, 2));
  EXPECT_TRUE(out.report.clamped);
  EXPECT_EQ(out.report.f_hat, 1e-10);
  EXPECT_NEAR(out.report.loss, -std::log(1e-10) / 0.25, 1e-9);
  for (double g : out.grad.flat()) EXPECT_EQ(g, 0.0);
}

TEST(SrfeMc, PathwiseGradientMatchesFiniteDifferences) {
  const auto mix = three_mode_mixture();
  Rng rng(4);
  for (double tau : {0.1, 0.5, 0.9}) {
    SrfeConfig cfg{tau, 256};
    const Matrix eps = rng.normal_matrix(256, 2);
    const Vec theta = {-1.0, 1.0, 0.5, 0.3};
    const auto out = srfe_mc_evaluate(DiagonalGaussian::from_flat(theta), mix, cfg, eps);
    ASSERT_FALSE(out.report.clamped);
    const Vec fd =
        fd_theta([&](const Vec& t) { return srfe_mc_loss(DiagonalGaussian::from_flat(t), mix, cfg, eps).loss; }, theta);
    const Vec g = out.grad.flat();
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[j], fd[j], 1e-6 * (1 + std::abs(fd[j]))) << tau << " " << j;
  }
}

TEST(SrfeMc, Validation) {
  Rng rng(5);
  const auto q = DiagonalGaussian::standard(2);
  EXPECT_THROW(srfe_mc_loss(q, q, SrfeConfig{1.0, 10}, rng.normal_matrix(10, 2)), Error);
  EXPECT_THROW(srfe_mc_loss(q, q, SrfeConfig{0.5, 10}, rng.normal_matrix(9, 2)), Error);
  EXPECT_THROW(srfe_mc_loss(q, three_mode_mixture(), SrfeConfig{0.5, 10}, rng.normal_matrix(10, 3)), Error);
}

TEST(SrfeMc, NonFiniteTargetReportsSampleIndex) {
  const auto q = DiagonalGaussian::standard(2);
  Matrix eps(4, 2, -1.0);
  eps(2, 0) = 1.0;
  try {
    srfe_mc_loss(q, HalfPlaneTarget{}, SrfeConfig{0.5, 4}, eps);
    FAIL() << "expected throw";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteValue);
    ASSERT_TRUE(e.index().has_value());
    EXPECT_EQ(*e.index(), 2u);
  }
}

TEST(ReverseKlMc, LossAndGradient) {
  const auto mix = three_mode_mixture();
  Rng rng(6);
  const Matrix eps = rng.normal_matrix(300, 2);
  const Vec theta = kQ.flat();
  const Vec g = reverse_kl_mc_grad(kQ, mix, eps).flat();
  const Vec fd = fd_theta([&](const Vec& t) { return reverse_kl_mc_loss(DiagonalGaussian::from_flat(t), mix, eps); }, theta);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[j], fd[j], 1e-6 * (1 + std::abs(fd[j])));

  const auto q = DiagonalGaussian::standard(2);
  EXPECT_NEAR(reverse_kl_mc_loss(q, q, eps), 0.0, 1e-12);
}

TEST(ForwardKlMc, LossAndGradientWithFrozenSamples) {
  const auto mix = three_mode_mixture();
  Rng rng(7);
  const Matrix xs = sample_matrix(mix, 300, rng);
  const Vec theta = kQ.flat();
  const Vec g = forward_kl_mc_grad(kQ, mix, xs).flat();
  const Vec fd = fd_theta([&](const Vec& t) { return forward_kl_mc_loss(DiagonalGaussian::from_flat(t), mix, xs); }, theta);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g[j], fd[j], 1e-6 * (1 + std::abs(fd[j])));
}

TEST(ForwardKlMc, GaussianPairValue) {
  // KL(N(1,1) || N(0,1)) in the first coordinate only: 0.5.
  const auto q = DiagonalGaussian::standard(2);
  const DiagonalGaussian p({1, 0}, {0, 0});
  Rng rng(8);
  EXPECT_NEAR(forward_kl_mc_loss(q, p, 200000, rng), 0.5, 0.01);
}

TEST(GradReport, SecondMomentDominatesSquaredMean) {
  const auto mix = three_mode_mixture();
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const DiagonalGaussian q({rng.normal(), rng.normal()}, {0.3 * rng.normal(), 0.3 * rng.normal()});
    SrfeConfig cfg{0.1 + 0.04 * t, 200};
    const auto s = srfe_mc_grad(q, mix, cfg, rng.normal_matrix(200, 2));
    EXPECT_GE(s.second_moment * (1 + 1e-12), squared_norm(s.flat()));
    const auto r = reverse_kl_mc_grad(q, mix, rng.normal_matrix(200, 2));
    EXPECT_GE(r.second_moment * (1 + 1e-12), squared_norm(r.flat()));
  }
}

TEST(Estimators, EqualPairMoments) {
  const Vec logits = {0.3, -0.2, 0.5, 0.0};
  const DiscreteDist p = softmax(logits);
  for (double tau : {0.2, 0.5, 0.8}) {
    const double cr = exact_second_moment(EstimatorKind::CR, p, logits, tau);
    const double es = exact_second_moment(EstimatorKind::SrfeEscort, p, logits, tau);
    const double sq = exact_second_moment(EstimatorKind::SrfeQ, p, logits, tau);
    EXPECT_NEAR(cr, es, 1e-12);
    EXPECT_NEAR(cr, sq, 1e-12);
  }
}

TEST(Estimators, EscortBoundAndOrdering) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + t % 7;
    const DiscreteDist p = DiscreteDist::random(rng, k);
    Vec logits(k);
    for (auto& l : logits) l = 2 * rng.normal();
    for (double tau : {0.1, 0.4, 0.7, 0.95}) {
      const SoftmaxEstimatorSetup setup(p, logits, tau);
      const double es = exact_second_moment(EstimatorKind::SrfeEscort, p, logits, tau);
      EXPECT_LE(es, setup.bound(EstimatorKind::SrfeEscort) * (1 + 1e-12));
      EXPECT_LE(exact_second_moment(EstimatorKind::CR, p, logits, tau),
                setup.bound(EstimatorKind::CR) * (1 + 1e-12));
      EXPECT_LE(exact_second_moment(EstimatorKind::SrfeQ, p, logits, tau),
                setup.bound(EstimatorKind::SrfeQ) * (1 + 1e-12));
      // Jensen: sum q u^(2 tau) >= F^2.
      EXPECT_LE(setup.bound(EstimatorKind::SrfeEscort), setup.bound(EstimatorKind::SrfeQ) * (1 + 1e-12));
    }
  }
}

TEST(Estimators, NearDisjointCrExceedsEscort) {
  const DiscreteDist p({0.98, 0.01, 0.01});
  const Vec logits = {-8.0, 4.0, 4.0};
  const double tau = 0.9;
  const double cr = exact_second_moment(EstimatorKind::CR, p, logits, tau);
  const double es = exact_second_moment(EstimatorKind::SrfeEscort, p, logits, tau);
  EXPECT_GT(cr, 100 * es);
}

TEST(Estimators, MeansMatchFiniteDifferenceGradients) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t k = 3 + t % 4;
    const DiscreteDist p = DiscreteDist::random(rng, k);
    Vec logits(k);
    for (auto& l : logits) l = rng.normal();
    for (double tau : {0.25, 0.6}) {
      const Vec fd_s = fd_logits([&](const DiscreteDist& q) { return srfe_discrete(p, q, tau); }, logits);
      const Vec fd_c = fd_logits([&](const DiscreteDist& q) { return cr_associated(p, q, tau); }, logits);
      const Vec m_es = exact_estimator_mean(EstimatorKind::SrfeEscort, p, logits, tau);
      const Vec m_sq = exact_estimator_mean(EstimatorKind::SrfeQ, p, logits, tau);
      const Vec m_cr = exact_estimator_mean(EstimatorKind::CR, p, logits, tau);
      for (std::size_t j = 0; j < k; ++j) {
        EXPECT_NEAR(m_es[j], fd_s[j], 1e-7);
        EXPECT_NEAR(m_sq[j], fd_s[j], 1e-7);
        EXPECT_NEAR(m_cr[j], fd_c[j], 1e-7);
      }
    }
  }
}

TEST(Estimators, MonteCarloMeansAreUnbiased) {
  Rng rng(12);
  const DiscreteDist p({0.1, 0.2, 0.3, 0.4});
  const Vec logits = {0.5, -0.5, 0.2, 0.0};
  for (auto kind : {EstimatorKind::CR, EstimatorKind::SrfeEscort, EstimatorKind::SrfeQ}) {
    const auto rep = estimator_second_moment(kind, p, logits, 0.5, 100000, rng);
    const Vec exact = exact_estimator_mean(kind, p, logits, 0.5);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(rep.mean_gradient[j], exact[j], 4 * rep.gradient_stderr[j] + 1e-15) << to_string(kind);
    }
    EXPECT_NEAR(rep.empirical, exact_second_moment(kind, p, logits, 0.5), 0.05 * rep.empirical);
  }
}
