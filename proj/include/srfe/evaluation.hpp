#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "srfe/errors.hpp"
#include "srfe/gauss.hpp"
#include "srfe/numeric.hpp"
#include "srfe/rng.hpp"

namespace srfe {

struct EvalMetrics {
  std::size_t mode_coverage = 0;
  double ess = 0.0;
  double entropy_error = 0.0;
  double test_log_lik = 0.0;
};

struct EvalConfig {
  std::size_t n_eval = 10000;
  std::size_t n_entropy = 100000;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;
};

/// Number of modes m_j with q(m_j) > 0.01 * max_k q(m_k).
inline std::size_t mode_coverage(const DiagonalGaussian& q, const std::vector<Vec>& modes) {
  if (modes.empty()) return 0;
  Vec lq(modes.size());
  for (std::size_t j = 0; j < modes.size(); ++j) {
    detail::require_same_size(modes[j].size(), q.dim(), "mode location");
    lq[j] = q.log_prob(modes[j]);
  }
  const double top = *std::max_element(lq.begin(), lq.end());
  if (top == kNegInf) return 0;
  const double threshold = top + std::log(0.01);
  return static_cast<std::size_t>(std::count_if(lq.begin(), lq.end(), [&](double v) { return v > threshold; }));
}

template <ModalTarget T>
std::size_t mode_coverage(const DiagonalGaussian& q, const T& target) {
  return mode_coverage(q, target.modes());
}

/// 1 / sum(w^2) for self-normalized log-weights.
inline double ess_from_log_weights(std::span<const double> log_w) {
  if (log_w.empty()) throw Error(ErrorKind::InvalidArgument, "ESS needs at least one weight");
  const double lse = log_sum_exp(log_w);
  if (lse == kNegInf) throw Error(ErrorKind::InvalidDistribution, "all importance weights are zero");
  if (!std::isfinite(lse)) throw Error(ErrorKind::NonFiniteValue, "importance weights overflow");
  Vec sq(log_w.size());
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    const double w = std::exp(log_w[i] - lse);
    sq[i] = w * w;
  }
  return 1.0 / pairwise_sum(sq);
}

template <TargetDensity T>
double ess(const DiagonalGaussian& q, const T& target, std::size_t n_eval, Rng& rng) {
  if (n_eval == 0) throw Error(ErrorKind::InvalidArgument, "n_eval must be >= 1");
  Vec log_w(n_eval);
  for (std::size_t i = 0; i < n_eval; ++i) {
    const Vec x = q.sample(rng);
    log_w[i] = target.log_prob(x) - q.log_prob(x);
  }
  return std::clamp(ess_from_log_weights(log_w), 1.0, static_cast<double>(n_eval));
}

/// Monte-Carlo estimate of H(p) from target samples.
template <TargetDensity T>
double target_entropy_mc(const T& target, std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "n_entropy must be >= 1");
  Vec neg_lp(n);
  for (std::size_t i = 0; i < n; ++i) neg_lp[i] = -target.log_prob(target.sample(rng));
  return mean(neg_lp);
}

template <TargetDensity T>
double entropy_error(const DiagonalGaussian& q, const T& target, std::size_t n_entropy, Rng& rng) {
  return std::abs(q.entropy() - target_entropy_mc(target, n_entropy, rng));
}

template <TargetDensity T>
double test_log_lik(const DiagonalGaussian& q, const T& target, std::size_t n_test, Rng& rng) {
  if (n_test == 0) throw Error(ErrorKind::InvalidArgument, "n_test must be >= 1");
  Vec lq(n_test);
  for (std::size_t i = 0; i < n_test; ++i) lq[i] = q.log_prob(target.sample(rng));
  return mean(lq);
}

/// All four metrics; ESS, entropy and test log-likelihood draw from seed+1, +2, +3.
template <ModalTarget T>
EvalMetrics evaluate(const DiagonalGaussian& q, const T& target, const EvalConfig& cfg = {}) {
  detail::require_same_size(q.dim(), target.dim(), "model and target");
  EvalMetrics m;
  m.mode_coverage = mode_coverage(q, target);
  Rng ess_rng(cfg.seed + 1);
  m.ess = ess(q, target, cfg.n_eval, ess_rng);
  Rng ent_rng(cfg.seed + 2);
  m.entropy_error = entropy_error(q, target, cfg.n_entropy, ent_rng);
  Rng test_rng(cfg.seed + 3);
  m.test_log_lik = test_log_lik(q, target, cfg.n_test, test_rng);
  return m;
}

}  // namespace srfe
