#pragma once

// Exact divergences, escort distributions and tail quantities on finite
// supports. Everything here is closed form and serves as the reference the
// Monte-Carlo code is checked against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "srfe/errors.hpp"
#include "srfe/numeric.hpp"
#include "srfe/rng.hpp"

namespace srfe {

/// Probability vector on {0, ..., n-1}.
class DiscreteDist {
 public:
  static constexpr double kNormTolerance = 1e-9;

  explicit DiscreteDist(Vec probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw Error(ErrorKind::InvalidDistribution, "empty support");
    double total = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      if (!(probs_[i] >= 0.0) || !std::isfinite(probs_[i])) {
        throw Error(ErrorKind::InvalidDistribution, "negative or non-finite probability", i);
      }
      total += probs_[i];
    }
    if (std::abs(total - 1.0) > kNormTolerance) {
      throw Error(ErrorKind::InvalidDistribution, "probabilities sum to " + std::to_string(total));
    }
  }

  /// Accepts any non-negative weight vector with positive mass.
  static DiscreteDist renormalized(Vec weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::InvalidDistribution, "weights must be finite and non-negative");
      }
      total += w;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::InvalidDistribution, "weights have zero mass");
    for (double& w : weights) w /= total;
    return DiscreteDist(std::move(weights));
  }

  static DiscreteDist uniform(std::size_t n) { return DiscreteDist(Vec(n, 1.0 / static_cast<double>(n))); }

  static DiscreteDist random(Rng& rng, std::size_t n) { return DiscreteDist(rng.dirichlet_flat(n)); }

  std::size_t support_size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  Vec probs_;
};

enum class Weighting { UnderP, UnderQ };

/// Moments of the surprisal gap log(p_i / q_i).
struct SurprisalStats {
  double mean = 0.0;
  double variance = 0.0;
  Weighting weighting = Weighting::UnderP;
};

struct VariationalOptions {
  std::size_t max_iter = 10000;
  double step = 0.1;
  double tol = 1e-6;
};

struct VariationalSolution {
  DiscreteDist minimizer;
  double objective_value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

enum class ExpansionEndpoint { Forward, Reverse };

namespace detail {

inline void require_pair(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_size(p.support_size(), q.support_size(), "support sizes differ");
}

inline double tau_weight(double tau) { return tau * (1.0 - tau); }

}  // namespace detail

/// log F(tau) by log-sum-exp over the common support; -inf when disjoint.
inline double log_chernoff_coefficient(const DiscreteDist& p, const DiscreteDist& q, double tau) {
  detail::require_pair(p, q);
  detail::require_tau(tau);
  Vec terms;
  terms.reserve(p.support_size());
  for (std::size_t i = 0; i < p.support_size(); ++i) {
    if (p[i] > 0.0 && q[i] > 0.0) terms.push_back(tau * std::log(p[i]) + (1.0 - tau) * std::log(q[i]));
  }
  return log_sum_exp(terms);
}

/// F(tau) = sum_i p_i^tau q_i^(1-tau).
inline double chernoff_coefficient(const DiscreteDist& p, const DiscreteDist& q, double tau) {
  return std::exp(log_chernoff_coefficient(p, q, tau));
}

inline double srfe_discrete(const DiscreteDist& p, const DiscreteDist& q, double tau) {
  const double log_f = log_chernoff_coefficient(p, q, tau);
  if (log_f == kNegInf) throw Error(ErrorKind::DisjointSupport, "Chernoff coefficient is zero");
  return std::max(0.0, -log_f / detail::tau_weight(tau));
}

/// (1 - F(tau)) / (tau (1 - tau)).
inline double cr_associated(const DiscreteDist& p, const DiscreteDist& q, double tau) {
  const double log_f = log_chernoff_coefficient(p, q, tau);
  return std::max(0.0, -std::expm1(log_f) / detail::tau_weight(tau));
}

/// Cressie-Read power divergence with exponent lambda (lambda not in {0, -1}).
inline double cr_standard(const DiscreteDist& p, const DiscreteDist& q, double lambda) {
  detail::require_pair(p, q);
  if (!std::isfinite(lambda) || lambda == 0.0 || lambda == -1.0) {
    throw Error(ErrorKind::InvalidArgument, "lambda must be finite and not in {0, -1}");
  }
  Vec terms;
  terms.reserve(p.support_size());
  for (std::size_t i = 0; i < p.support_size(); ++i) {
    if (p[i] > 0.0) {
      if (q[i] == 0.0) throw Error(ErrorKind::AbsoluteContinuityViolated, "p_i > 0 where q_i = 0", i);
      terms.push_back(p[i] * std::expm1(lambda * (std::log(p[i]) - std::log(q[i]))));
    } else if (lambda < -1.0 && q[i] > 0.0) {
      // p^(1+lambda) q^(-lambda) diverges as p_i -> 0 when lambda < -1.
      throw Error(ErrorKind::AbsoluteContinuityViolated, "q_i > 0 where p_i = 0 with lambda < -1", i);
    }
  }
  return pairwise_sum(terms) / (lambda * (lambda + 1.0));
}

/// KL(P || Q) with 0 log 0 = 0.
inline double kl_discrete(const DiscreteDist& p, const DiscreteDist& q) {
  detail::require_pair(p, q);
  Vec terms;
  terms.reserve(p.support_size());
  for (std::size_t i = 0; i < p.support_size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw Error(ErrorKind::AbsoluteContinuityViolated, "p_i > 0 where q_i = 0", i);
    terms.push_back(p[i] * (std::log(p[i]) - std::log(q[i])));
  }
  return pairwise_sum(terms);
}

/// Mean and variance of log(p_i / q_i) under P or Q, restricted to the
/// support of the weighting distribution.
inline SurprisalStats surprisal_stats(const DiscreteDist& p, const DiscreteDist& q, Weighting weighting) {
  detail::require_pair(p, q);
  const DiscreteDist& w = weighting == Weighting::UnderP ? p : q;
  const DiscreteDist& other = weighting == Weighting::UnderP ? q : p;
  Vec delta(p.support_size(), 0.0);
  double mean = 0.0;
  for (std::size_t i = 0; i < p.support_size(); ++i) {
    if (w[i] == 0.0) continue;
    if (other[i] == 0.0) {
      throw Error(ErrorKind::AbsoluteContinuityViolated, "weighting mass where the other density is 0", i);
    }
    delta[i] = std::log(p[i]) - std::log(q[i]);
    mean += w[i] * delta[i];
  }
  double var = 0.0;
  for (std::size_t i = 0; i < p.support_size(); ++i) {
    if (w[i] > 0.0) var += w[i] * (delta[i] - mean) * (delta[i] - mean);
  }
  return {mean, var, weighting};
}

/// r_tau proportional to p^tau q^(1-tau).
inline DiscreteDist escort(const DiscreteDist& p, const DiscreteDist& q, double tau) {
  const double log_f = log_chernoff_coefficient(p, q, tau);
  if (log_f == kNegInf) throw Error(ErrorKind::DisjointSupport, "escort undefined for disjoint supports");
  Vec r(p.support_size(), 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (p[i] > 0.0 && q[i] > 0.0) r[i] = std::exp(tau * std::log(p[i]) + (1.0 - tau) * std::log(q[i]) - log_f);
  }
  return DiscreteDist::renormalized(std::move(r));
}

/// J(r) = KL(r || Q) / tau + KL(r || P) / (1 - tau).
inline double variational_objective(const DiscreteDist& r, const DiscreteDist& p, const DiscreteDist& q,
                                    double tau) {
  detail::require_tau(tau);
  return kl_discrete(r, q) / tau + kl_discrete(r, p) / (1.0 - tau);
}

/// Minimizes J over the simplex by entropic mirror descent on the common
/// support of p and q. The step is capped at tau (1 - tau), the inverse
/// curvature of J in log coordinates, beyond which the iteration overshoots.
inline VariationalSolution variational_minimize(const DiscreteDist& p, const DiscreteDist& q, double tau,
                                                const VariationalOptions& opts = {}) {
  detail::require_pair(p, q);
  detail::require_tau(tau);
  const std::size_t n = p.support_size();
  Vec log_r(n, kNegInf);
  std::size_t common = 0;
  for (std::size_t i = 0; i < n; ++i) common += (p[i] > 0.0 && q[i] > 0.0) ? 1 : 0;
  if (common == 0) throw Error(ErrorKind::DisjointSupport, "no common support");
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0 && q[i] > 0.0) log_r[i] = -std::log(static_cast<double>(common));
  }

  const double step = std::min(opts.step, detail::tau_weight(tau));
  auto to_dist = [&](const Vec& lr) {
    Vec r(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) r[i] = lr[i] == kNegInf ? 0.0 : std::exp(lr[i]);
    return DiscreteDist::renormalized(std::move(r));
  };

  bool converged = false;
  std::size_t iter = 0;
  Vec next(n, kNegInf);
  while (iter < opts.max_iter) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) {
      if (log_r[i] == kNegInf) continue;
      const double grad = (log_r[i] - std::log(q[i]) + 1.0) / tau + (log_r[i] - std::log(p[i]) + 1.0) / (1.0 - tau);
      next[i] = log_r[i] - step * grad;
    }
    const double norm = log_sum_exp(next);
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (next[i] == kNegInf) continue;
      next[i] -= norm;
      change += std::abs(std::exp(next[i]) - std::exp(log_r[i]));
    }
    std::swap(log_r, next);
    if (change <= 1e-3 * opts.tol) {
      converged = true;
      break;
    }
  }
  DiscreteDist r = to_dist(log_r);
  const double value = variational_objective(r, p, q, tau);
  return {std::move(r), value, iter, converged};
}

/// J(r) - [KL(r || r_tau) / (tau (1 - tau)) + SRFE]; zero for every admissible r.
inline double pythagorean_residual(const DiscreteDist& r, const DiscreteDist& p, const DiscreteDist& q,
                                   double tau) {
  const DiscreteDist r_tau = escort(p, q, tau);
  return variational_objective(r, p, q, tau) -
         (kl_discrete(r, r_tau) / detail::tau_weight(tau) + srfe_discrete(p, q, tau));
}

/// Chernoff bound on Pr_Q[log(p/q) >= a].
inline double tail_bound(const DiscreteDist& p, const DiscreteDist& q, double tau, double a) {
  const double log_f = log_chernoff_coefficient(p, q, tau);
  if (log_f == kNegInf) return 0.0;
  const double w = detail::tau_weight(tau);
  const double srfe_value = -log_f / w;
  return std::exp(-tau * a - w * srfe_value);
}

/// Pr_Q[log(p/q) >= a] by enumeration.
inline double exact_tail_prob(const DiscreteDist& p, const DiscreteDist& q, double a) {
  detail::require_pair(p, q);
  double total = 0.0;
  for (std::size_t i = 0; i < q.support_size(); ++i) {
    if (q[i] == 0.0) continue;
    const double delta = p[i] > 0.0 ? std::log(p[i]) - std::log(q[i]) : kNegInf;
    if (delta >= a) total += q[i];
  }
  return total;
}

/// min{KL(P||Q) / tau, KL(Q||P) / (1 - tau)} - SRFE, i.e. J evaluated at the
/// two endpoints r = p and r = q minus its minimum. Never negative.
inline double kl_upper_bound_gap(const DiscreteDist& p, const DiscreteDist& q, double tau) {
  detail::require_tau(tau);
  const double forward = kl_discrete(p, q) / tau;
  const double reverse = kl_discrete(q, p) / (1.0 - tau);
  return std::min(forward, reverse) - srfe_discrete(p, q, tau);
}

/// First-order expansion of SRFE around tau = 1 (Forward) or tau = 0 (Reverse).
inline double expansion_prediction(const DiscreteDist& p, const DiscreteDist& q, double tau,
                                   ExpansionEndpoint endpoint) {
  detail::require_tau(tau);
  if (endpoint == ExpansionEndpoint::Forward) {
    const SurprisalStats s = surprisal_stats(p, q, Weighting::UnderP);
    return s.mean + (1.0 - tau) * (s.mean - 0.5 * s.variance);
  }
  const SurprisalStats s = surprisal_stats(p, q, Weighting::UnderQ);
  const double kl_rev = -s.mean;
  return kl_rev + tau * (kl_rev - 0.5 * s.variance);
}

/// Central four-point estimate of d^2 G / du dv for G(u, v) evaluated at
/// p = (u, v, 1 - u - v).
template <typename Fn>
double mixed_partial(Fn&& g, double u, double v, double h) {
  if (!(h > 0.0) || u - h <= 0.0 || v - h <= 0.0 || u + v + 2.0 * h >= 1.0) {
    throw Error(ErrorKind::StencilOutsideSimplex, "stencil leaves the open 2-simplex");
  }
  return (g(u + h, v + h) - g(u + h, v - h) - g(u - h, v + h) + g(u - h, v - h)) / (4.0 * h * h);
}

inline double mixed_partial_probe(double u, double v, double tau, double h = 1e-4) {
  detail::require_tau(tau);
  const DiscreteDist q = DiscreteDist::uniform(3);
  return mixed_partial([&](double a, double b) { return srfe_discrete(DiscreteDist({a, b, 1.0 - a - b}), q, tau); },
                       u, v, h);
}

/// Same stencil applied to KL(p || uniform), an f-divergence.
inline double mixed_partial_probe_kl(double u, double v, double h = 1e-4) {
  const DiscreteDist q = DiscreteDist::uniform(3);
  return mixed_partial([&](double a, double b) { return kl_discrete(DiscreteDist({a, b, 1.0 - a - b}), q); }, u, v,
                       h);
}

/// Softmax of a logit vector.
inline DiscreteDist softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  Vec probs(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = std::exp(logits[i] - lse);
  return DiscreteDist::renormalized(std::move(probs));
}

/// Score of the softmax family at support point j: d log q_j / d logits = e_j - q.
inline Vec softmax_score(const DiscreteDist& q, std::size_t j) {
  Vec s(q.support_size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = (i == j ? 1.0 : 0.0) - q[i];
  return s;
}

}  // namespace srfe
