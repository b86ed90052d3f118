#pragma once

// Monte-Carlo losses and hand-derived pathwise gradients for the diagonal
// Gaussian family, plus one-sample gradient estimators on discrete supports.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "srfe/errors.hpp"
#include "srfe/gauss.hpp"
#include "srfe/numeric.hpp"
#include "srfe/rng.hpp"
#include "srfe/simplex.hpp"

namespace srfe {

struct SrfeConfig {
  double tau = 0.5;
  std::size_t n_samples = 5000;
  double f_clamp_low = 1e-10;
  double f_clamp_high = 1.0;

  void validate() const {
    detail::require_tau(tau);
    if (n_samples == 0) throw Error(ErrorKind::InvalidArgument, "n_samples must be positive");
    if (!(f_clamp_low > 0.0 && f_clamp_low < f_clamp_high && f_clamp_high <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "clamp bounds must satisfy 0 < low < high <= 1");
    }
  }
};

struct LossReport {
  double loss = 0.0;
  double f_hat = 1.0;
  double max_log_ratio = 0.0;
  bool clamped = false;
};

struct GradReport {
  Vec d_mu;
  Vec d_log_sigma;
  /// Mean squared norm of the per-sample gradient contributions.
  double second_moment = 0.0;

  /// (d_mu..., d_log_sigma...), the optimizer's parameter order.
  Vec flat() const {
    Vec g(d_mu);
    g.insert(g.end(), d_log_sigma.begin(), d_log_sigma.end());
    return g;
  }
};

struct LossAndGrad {
  LossReport report;
  GradReport grad;
};

namespace detail {

inline GradReport zero_grad(std::size_t d) { return {Vec(d, 0.0), Vec(d, 0.0), 0.0}; }

/// Column means and average row norm^2 of an n x 2d matrix of per-sample
/// gradient contributions, reduced pairwise in a fixed order.
inline GradReport reduce_contributions(const Matrix& contrib, std::size_t d) {
  const std::size_t n = contrib.rows();
  GradReport g = zero_grad(d);
  Vec column(n);
  for (std::size_t j = 0; j < 2 * d; ++j) {
    for (std::size_t i = 0; i < n; ++i) column[i] = contrib(i, j);
    const double m = mean(column);
    (j < d ? g.d_mu[j] : g.d_log_sigma[j - d]) = m;
  }
  for (std::size_t i = 0; i < n; ++i) column[i] = squared_norm(contrib.row(i));
  g.second_moment = mean(column);
  return g;
}

/// Per-sample log ratio r_i = log p(x_i) - log q(x_i) along the
/// reparameterized path, with total derivatives dr_i/d(mu, log_sigma)
/// written into `dr` (length 2d).
template <TargetDensity T>
double log_ratio_and_derivative(const DiagonalGaussian& q, const T& target, std::span<const double> eps,
                                std::size_t index, std::span<double> dr, Vec& x, Vec& gp, Vec& gq) {
  const std::size_t d = q.dim();
  for (std::size_t k = 0; k < d; ++k) x[k] = q.mu()[k] + q.sigma(k) * eps[k];
  const double lp = target.log_prob(x);
  if (!std::isfinite(lp)) {
    throw Error(ErrorKind::NonFiniteValue, "target log density is not finite at sample", index);
  }
  const double lq = q.log_prob(x);
  target.grad_log_prob(x, gp);
  q.grad_log_prob(x, gq);
  for (std::size_t k = 0; k < d; ++k) {
    // Explicit score of log q at fixed x, as in DiagonalGaussian::param_score.
    const double s = q.sigma(k);
    const double z = (x[k] - q.mu()[k]) / s;
    const double pull = gp[k] - gq[k];
    dr[k] = pull - z / s;                                // dx/dmu_k = 1
    dr[d + k] = pull * s * eps[k] - (z * z - 1.0);       // dx/dlog_sigma_k = sigma_k eps_k
  }
  return lp - lq;
}

}  // namespace detail

/// Stabilized SRFE loss with its exact gradient (zero while F-hat is clamped).
template <TargetDensity T>
LossAndGrad srfe_mc_evaluate(const DiagonalGaussian& q, const T& target, const SrfeConfig& cfg,
                             const Matrix& eps_batch) {
  cfg.validate();
  const std::size_t d = q.dim();
  detail::require_same_size(target.dim(), d, "target dimension");
  detail::require_same_size(eps_batch.cols(), d, "eps_batch columns");
  detail::require_same_size(eps_batch.rows(), cfg.n_samples, "eps_batch rows vs n_samples");
  const std::size_t n = eps_batch.rows();
  const double tau = cfg.tau;

  Vec r(n);
  Matrix dr(n, 2 * d);
  Vec x(d), gp(d), gq(d);
  double r_max = kNegInf;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = detail::log_ratio_and_derivative(q, target, eps_batch.row(i), i, dr.row(i), x, gp, gq);
    r_max = std::max(r_max, r[i]);
  }

  Vec w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(tau * (r[i] - r_max));
  const double w_sum = pairwise_sum(w);
  const double log_f = std::log(w_sum / static_cast<double>(n)) + tau * r_max;

  LossAndGrad out;
  out.report.max_log_ratio = r_max;
  double f_hat = std::exp(log_f);
  if (log_f < std::log(cfg.f_clamp_low)) {
    f_hat = cfg.f_clamp_low;
    out.report.clamped = true;
  } else if (log_f > std::log(cfg.f_clamp_high)) {
    f_hat = cfg.f_clamp_high;
    out.report.clamped = true;
  }
  out.report.f_hat = f_hat;
  const double weight = tau * (1.0 - tau);
  out.report.loss = out.report.clamped ? -std::log(f_hat) / weight : -log_f / weight;

  if (out.report.clamped) {
    out.grad = detail::zero_grad(d);
    return out;
  }
  // d loss = -(1 / (tau (1 - tau) F)) dF with dF = (tau / n) sum exp(tau r_i) dr_i,
  // i.e. minus the self-normalized average of dr_i scaled by 1 / (1 - tau).
  Matrix contrib(n, 2 * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = -static_cast<double>(n) * (w[i] / w_sum) / (1.0 - tau);
    for (std::size_t j = 0; j < 2 * d; ++j) contrib(i, j) = scale * dr(i, j);
  }
  out.grad = detail::reduce_contributions(contrib, d);
  return out;
}

template <TargetDensity T>
LossReport srfe_mc_loss(const DiagonalGaussian& q, const T& target, const SrfeConfig& cfg, const Matrix& eps_batch) {
  return srfe_mc_evaluate(q, target, cfg, eps_batch).report;
}

template <TargetDensity T>
GradReport srfe_mc_grad(const DiagonalGaussian& q, const T& target, const SrfeConfig& cfg, const Matrix& eps_batch) {
  return srfe_mc_evaluate(q, target, cfg, eps_batch).grad;
}

/// E_p[log p - log q] over target samples; the samples do not depend on theta.
template <TargetDensity T>
LossAndGrad forward_kl_evaluate(const DiagonalGaussian& q, const T& target, const Matrix& target_samples) {
  const std::size_t d = q.dim();
  detail::require_same_size(target.dim(), d, "target dimension");
  detail::require_same_size(target_samples.cols(), d, "target sample columns");
  const std::size_t n = target_samples.rows();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "no samples");
  Vec terms(n);
  Matrix contrib(n, 2 * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = target_samples.row(i);
    terms[i] = target.log_prob(x) - q.log_prob(x);
    const ParamGrad s = q.param_score(x);
    for (std::size_t k = 0; k < d; ++k) {
      contrib(i, k) = -s.d_mu[k];
      contrib(i, d + k) = -s.d_log_sigma[k];
    }
  }
  LossAndGrad out;
  out.report.loss = mean(terms);
  out.grad = detail::reduce_contributions(contrib, d);
  return out;
}

template <TargetDensity T>
double forward_kl_mc_loss(const DiagonalGaussian& q, const T& target, const Matrix& target_samples) {
  return forward_kl_evaluate(q, target, target_samples).report.loss;
}

template <TargetDensity T>
double forward_kl_mc_loss(const DiagonalGaussian& q, const T& target, std::size_t n, Rng& rng) {
  return forward_kl_mc_loss(q, target, sample_matrix(target, n, rng));
}

template <TargetDensity T>
GradReport forward_kl_mc_grad(const DiagonalGaussian& q, const T& target, const Matrix& target_samples) {
  return forward_kl_evaluate(q, target, target_samples).grad;
}

template <TargetDensity T>
GradReport forward_kl_mc_grad(const DiagonalGaussian& q, const T& target, std::size_t n, Rng& rng) {
  return forward_kl_mc_grad(q, target, sample_matrix(target, n, rng));
}

/// E_q[log q - log p] with reparameterized samples and full pathwise gradient.
template <TargetDensity T>
LossAndGrad reverse_kl_evaluate(const DiagonalGaussian& q, const T& target, const Matrix& eps_batch) {
  const std::size_t d = q.dim();
  detail::require_same_size(target.dim(), d, "target dimension");
  detail::require_same_size(eps_batch.cols(), d, "eps_batch columns");
  const std::size_t n = eps_batch.rows();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "no samples");
  Vec terms(n);
  Matrix contrib(n, 2 * d);
  Vec x(d), gp(d), gq(d);
  for (std::size_t i = 0; i < n; ++i) {
    terms[i] = -detail::log_ratio_and_derivative(q, target, eps_batch.row(i), i, contrib.row(i), x, gp, gq);
    for (std::size_t j = 0; j < 2 * d; ++j) contrib(i, j) = -contrib(i, j);
  }
  LossAndGrad out;
  out.report.loss = mean(terms);
  out.grad = detail::reduce_contributions(contrib, d);
  return out;
}

template <TargetDensity T>
double reverse_kl_mc_loss(const DiagonalGaussian& q, const T& target, const Matrix& eps_batch) {
  return reverse_kl_evaluate(q, target, eps_batch).report.loss;
}

template <TargetDensity T>
GradReport reverse_kl_mc_grad(const DiagonalGaussian& q, const T& target, const Matrix& eps_batch) {
  return reverse_kl_evaluate(q, target, eps_batch).grad;
}

// ---------------------------------------------------------------------------
// Discrete one-sample gradient estimators for q_theta = softmax(theta).

enum class EstimatorKind { CR, SrfeEscort, SrfeQ };

inline const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::CR: return "CR";
    case EstimatorKind::SrfeEscort: return "SRFE_escort";
    case EstimatorKind::SrfeQ: return "SRFE_q";
  }
  return "unknown";
}

struct SecondMomentReport {
  double empirical = 0.0;
  double bound = 0.0;
  Vec mean_gradient;
  Vec gradient_stderr;
};

/// Everything the three estimators need, computed once by enumeration.
struct SoftmaxEstimatorSetup {
  DiscreteDist q;
  DiscreteDist r_tau;
  Vec u_pow_tau;  // (p_i / q_i)^tau, zero where p_i = 0
  double f_tau = 0.0;
  double score_bound = 0.0;  // C = max_j |e_j - q|^2
  double power_moment = 0.0; // sum_i q_i u_i^(2 tau)
  double tau = 0.5;

  SoftmaxEstimatorSetup(const DiscreteDist& p, std::span<const double> logits, double tau_in)
      : q(softmax(logits)), r_tau(escort(p, softmax(logits), tau_in)), tau(tau_in) {
    detail::require_pair(p, q);
    f_tau = chernoff_coefficient(p, q, tau);
    u_pow_tau.assign(q.support_size(), 0.0);
    Vec moment_terms;
    for (std::size_t i = 0; i < q.support_size(); ++i) {
      score_bound = std::max(score_bound, squared_norm(softmax_score(q, i)));
      if (p[i] > 0.0) {
        const double log_u = std::log(p[i]) - std::log(q[i]);
        u_pow_tau[i] = std::exp(tau * log_u);
        moment_terms.push_back(std::exp(std::log(q[i]) + 2.0 * tau * log_u));
      }
    }
    power_moment = pairwise_sum(moment_terms);
  }

  double bound(EstimatorKind kind) const {
    const double t2 = tau * tau;
    switch (kind) {
      case EstimatorKind::CR: return score_bound / t2 * power_moment;
      case EstimatorKind::SrfeEscort: return score_bound / t2;
      case EstimatorKind::SrfeQ: return score_bound / (t2 * f_tau * f_tau) * power_moment;
    }
    return 0.0;
  }

  /// Sampling distribution of the estimator.
  const DiscreteDist& sampling(EstimatorKind kind) const { return kind == EstimatorKind::SrfeEscort ? r_tau : q; }

  /// One-sample estimator evaluated at support point j.
  Vec estimator(EstimatorKind kind, std::size_t j) const {
    Vec g = softmax_score(q, j);
    double scale = -1.0 / tau;
    if (kind == EstimatorKind::CR) scale *= u_pow_tau[j];
    if (kind == EstimatorKind::SrfeQ) scale *= u_pow_tau[j] / f_tau;
    for (double& x : g) x *= scale;
    return g;
  }
};

/// Empirical second moment of n one-sample draws against the analytic bound.
inline SecondMomentReport estimator_second_moment(EstimatorKind kind, const DiscreteDist& p,
                                                  std::span<const double> logits, double tau, std::size_t n,
                                                  Rng& rng) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "n must be positive");
  const SoftmaxEstimatorSetup setup(p, logits, tau);
  const DiscreteDist& pi = setup.sampling(kind);
  const std::size_t k = logits.size();
  Vec norms(n);
  Matrix draws(n, k);
  for (std::size_t s = 0; s < n; ++s) {
    const Vec g = setup.estimator(kind, rng.categorical(pi.probs()));
    norms[s] = squared_norm(g);
    for (std::size_t j = 0; j < k; ++j) draws(s, j) = g[j];
  }
  SecondMomentReport rep;
  rep.empirical = mean(norms);
  rep.bound = setup.bound(kind);
  rep.mean_gradient.resize(k);
  rep.gradient_stderr.resize(k);
  Vec column(n);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t s = 0; s < n; ++s) column[s] = draws(s, j);
    const double m = mean(column);
    for (double& c : column) c = (c - m) * (c - m);
    const double var = pairwise_sum(column) / static_cast<double>(n > 1 ? n - 1 : 1);
    rep.mean_gradient[j] = m;
    rep.gradient_stderr[j] = std::sqrt(var / static_cast<double>(n));
  }
  return rep;
}

/// Exact E||g||^2 by enumeration over the support.
inline double exact_second_moment(EstimatorKind kind, const DiscreteDist& p, std::span<const double> logits,
                                  double tau) {
  const SoftmaxEstimatorSetup setup(p, logits, tau);
  const DiscreteDist& pi = setup.sampling(kind);
  double acc = 0.0;
  for (std::size_t j = 0; j < pi.support_size(); ++j) {
    if (pi[j] > 0.0) acc += pi[j] * squared_norm(setup.estimator(kind, j));
  }
  return acc;
}

/// Exact mean of the one-sample estimator by enumeration.
inline Vec exact_estimator_mean(EstimatorKind kind, const DiscreteDist& p, std::span<const double> logits,
                                double tau) {
  const SoftmaxEstimatorSetup setup(p, logits, tau);
  const DiscreteDist& pi = setup.sampling(kind);
  Vec acc(logits.size(), 0.0);
  for (std::size_t j = 0; j < pi.support_size(); ++j) {
    const Vec g = setup.estimator(kind, j);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += pi[j] * g[i];
  }
  return acc;
}

}  // namespace srfe
