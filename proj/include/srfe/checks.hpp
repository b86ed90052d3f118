#pragma once

// Numerical verifications of the analytic properties of SRFE. Each check
// returns a CheckReport whose `passed` flag is exactly the conjunction of its
// recorded observation/threshold relations.

#include <algorithm>
#include <array>
#include <functional>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "srfe/errors.hpp"
#include "srfe/gauss.hpp"
#include "srfe/mc.hpp"
#include "srfe/numeric.hpp"
#include "srfe/rng.hpp"
#include "srfe/simplex.hpp"

namespace srfe {

enum class Relation { AtMost, AtLeast, InRange };

struct CheckReport {
  std::string name;
  bool passed = true;
  Vec observed;
  /// One entry per observation for AtMost/AtLeast, two (lo, hi) for InRange.
  Vec threshold;
  std::vector<std::string> labels;
  std::vector<Relation> relations;
  std::string details;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  /// Negative control: every threshold becomes unsatisfiable.
  bool inject_bad_tolerance = false;
};

namespace detail {

class ReportBuilder {
 public:
  ReportBuilder(std::string name, const CheckOptions& opts) : broken_(opts.inject_bad_tolerance) {
    report_.name = std::move(name);
  }

  void at_most(const std::string& label, double value, double limit) {
    if (broken_) limit = -std::numeric_limits<double>::infinity();
    record(label, value, Relation::AtMost, {limit}, value <= limit);
  }

  void at_least(const std::string& label, double value, double limit) {
    if (broken_) limit = std::numeric_limits<double>::infinity();
    record(label, value, Relation::AtLeast, {limit}, value >= limit);
  }

  void in_range(const std::string& label, double value, double lo, double hi) {
    if (broken_) std::swap(lo, hi);
    record(label, value, Relation::InRange, {lo, hi}, value >= lo && value <= hi);
  }

  void note(const std::string& text) {
    if (!report_.details.empty()) report_.details += "; ";
    report_.details += text;
  }

  CheckReport finish() {
    if (broken_) note("tolerances deliberately made unsatisfiable");
    return std::move(report_);
  }

 private:
  void record(const std::string& label, double value, Relation rel, std::initializer_list<double> limits, bool ok) {
    // NaN compares false everywhere, so a NaN observation always fails.
    report_.labels.push_back(label);
    report_.observed.push_back(value);
    report_.relations.push_back(rel);
    report_.threshold.insert(report_.threshold.end(), limits);
    if (!ok) {
      report_.passed = false;
      std::ostringstream os;
      os.precision(6);
      os << "failed " << label << " = " << value;
      note(os.str());
    }
  }

  CheckReport report_;
  bool broken_;
};

/// Dirichlet draw mixed with the uniform so every entry is at least floor/n.
inline DiscreteDist interior_dist(Rng& rng, std::size_t n, double floor) {
  Vec p = rng.dirichlet_flat(n);
  for (double& x : p) x = (1.0 - floor) * x + floor / static_cast<double>(n);
  return DiscreteDist::renormalized(std::move(p));
}

inline double rate_ratio(double coarse, double fine) {
  if (coarse == 0.0 && fine == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return coarse / fine;
}

}  // namespace detail

/// KL endpoint limits of SRFE and of the Cressie-Read family. Errors at eps
/// and eps/2 must shrink linearly (ratio in [1.7, 2.3]).
inline CheckReport check_kl_limits(const DiscreteDist& p, const DiscreteDist& q, Vec eps_grid = {0.02, 0.01},
                                   const CheckOptions& opts = {}) {
  detail::ReportBuilder b("kl_limits", opts);
  if (eps_grid.size() != 2) throw Error(ErrorKind::InvalidArgument, "eps_grid must hold (eps, eps/2)");
  const double kl_pq = kl_discrete(p, q);
  const double kl_qp = kl_discrete(q, p);
  struct Limit {
    const char* label;
    double target;
    std::function<double(double)> value;
  };
  const std::vector<Limit> limits = {
      {"srfe_tau_to_1", kl_pq, [&](double e) { return srfe_discrete(p, q, 1.0 - e); }},
      {"srfe_tau_to_0", kl_qp, [&](double e) { return srfe_discrete(p, q, e); }},
      {"cr_lambda_to_0", kl_pq, [&](double e) { return cr_standard(p, q, e); }},
      {"cr_lambda_to_-1", kl_qp, [&](double e) { return cr_standard(p, q, -1.0 + e); }},
  };
  for (const auto& lim : limits) {
    const double e1 = std::abs(lim.value(eps_grid[0]) - lim.target);
    const double e2 = std::abs(lim.value(eps_grid[1]) - lim.target);
    if (e1 <= 1e-14 && e2 <= 1e-14) {
      b.at_most(std::string(lim.label) + "_error", std::max(e1, e2), 1e-14);
    } else {
      b.in_range(std::string(lim.label) + "_ratio", detail::rate_ratio(e1, e2), 1.7, 2.3);
    }
  }
  return b.finish();
}

/// O(delta^2) residual of the first-order expansions at both endpoints and of
/// the Cressie-Read expansion around lambda = 0.
inline CheckReport check_expansions(const std::vector<std::pair<DiscreteDist, DiscreteDist>>& pairs,
                                    Vec delta_grid = {1e-3, 5e-4}, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("expansions", opts);
  if (delta_grid.size() != 2) throw Error(ErrorKind::InvalidArgument, "delta_grid must hold (delta, delta/2)");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double max_c = 0.0;
  std::size_t degenerate = 0;
  auto cr_prediction = [](const DiscreteDist& p, const DiscreteDist& q, double lambda) {
    const SurprisalStats s = surprisal_stats(p, q, Weighting::UnderP);
    return s.mean + 0.5 * lambda * s.variance + lambda * (0.5 * s.mean * s.mean - s.mean);
  };
  for (const auto& [p, q] : pairs) {
    auto residuals = [&](double delta) {
      return std::array<double, 3>{
          std::abs(srfe_discrete(p, q, 1.0 - delta) - expansion_prediction(p, q, 1.0 - delta, ExpansionEndpoint::Forward)),
          std::abs(srfe_discrete(p, q, delta) - expansion_prediction(p, q, delta, ExpansionEndpoint::Reverse)),
          std::abs(cr_standard(p, q, delta) - cr_prediction(p, q, delta))};
    };
    const auto r1 = residuals(delta_grid[0]);
    const auto r2 = residuals(delta_grid[1]);
    for (std::size_t k = 0; k < 3; ++k) {
      // Rounding in log F alone leaves residuals near 1e-13 once divided by tau (1 - tau).
      if (r1[k] <= 1e-12 && r2[k] <= 1e-12) {
        ++degenerate;
        continue;
      }
      const double ratio = r1[k] / r2[k];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      max_c = std::max(max_c, r1[k] / (delta_grid[0] * delta_grid[0]));
    }
  }
  if (lo <= hi) {
    b.in_range("min_residual_ratio", lo, 3.0, 5.0);
    b.in_range("max_residual_ratio", hi, 3.0, 5.0);
  }
  std::ostringstream os;
  os << pairs.size() << " pairs, fitted C <= " << max_c << ", " << degenerate << " zero-residual cases";
  b.note(os.str());
  return b.finish();
}

/// SRFE between N(theta, sigma^2) and N(theta + delta, sigma^2) by trapezoid
/// quadrature, accumulated as log1p of a small correction for accuracy.
inline double srfe_location_family_quadrature(double sigma, double tau, double delta, std::size_t nodes = 8001) {
  detail::require_tau(tau);
  const double half_width = 14.0 * sigma + std::abs(delta);
  const double h = 2.0 * half_width / static_cast<double>(nodes - 1);
  Vec terms(nodes);
  const double log_norm = -0.5 * kLog2Pi - std::log(sigma);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double x = -half_width + h * static_cast<double>(i);
    const double log_p = log_norm - 0.5 * x * x / (sigma * sigma);
    const double log_ratio = (2.0 * x * delta - delta * delta) / (2.0 * sigma * sigma);  // log q - log p
    const double w = (i == 0 || i + 1 == nodes) ? 0.5 : 1.0;
    terms[i] = w * std::exp(log_p) * std::expm1((1.0 - tau) * log_ratio);
  }
  const double integral = h * pairwise_sum(terms);
  return -std::log1p(integral) / (tau * (1.0 - tau));
}

/// Local metric of SRFE on the Gaussian location family (must be 1/sigma^2 for
/// every tau) and the quadratic Fisher form on the interior of the simplex.
inline CheckReport check_fisher_metric(const Vec& sigmas, const Vec& tau_grid, double delta = 1e-3,
                                       const CheckOptions& opts = {}) {
  detail::ReportBuilder b("fisher_metric", opts);
  for (double sigma : sigmas) {
    Vec metric;
    double worst_rel = 0.0;
    for (double tau : tau_grid) {
      const double d_plus = srfe_location_family_quadrature(sigma, tau, delta);
      const double d_minus = srfe_location_family_quadrature(sigma, tau, -delta);
      // D(0) = 0 exactly, so the central second difference is (D(+) + D(-)) / delta^2.
      const double g = (d_plus + d_minus) / (delta * delta);
      metric.push_back(g);
      worst_rel = std::max(worst_rel, std::abs(g * sigma * sigma - 1.0));
    }
    const auto [mn, mx] = std::minmax_element(metric.begin(), metric.end());
    std::ostringstream tag;
    tag << "sigma=" << sigma;
    b.at_most(tag.str() + "_relative_error", worst_rel, 1e-3);
    b.at_most(tag.str() + "_tau_spread", (*mx - *mn) / (1.0 / (sigma * sigma)), 1e-8);
  }

  // Simplex interior: |SRFE(p || p + d) - sum d^2 / (2p)| <= 2 (1 + tau)/6 sum |d|^3 / p^2.
  Rng rng(opts.seed + 17);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + trial % 5;
    const DiscreteDist p = detail::interior_dist(rng, n, 0.5);
    Vec dir(n);
    double avg = 0.0;
    for (double& x : dir) {
      x = rng.normal();
      avg += x;
    }
    avg /= static_cast<double>(n);
    const double scale = 1e-3 * (1 + trial % 4);
    for (double& x : dir) x = (x - avg) * scale * 0.5 / static_cast<double>(n);
    Vec qv(n);
    for (std::size_t i = 0; i < n; ++i) qv[i] = p[i] + dir[i];
    const DiscreteDist q = DiscreteDist::renormalized(qv);
    Vec d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = q[i] - p[i];
    for (double tau : tau_grid) {
      double quad = 0.0;
      double cubic = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        quad += 0.5 * d[i] * d[i] / p[i];
        cubic += std::abs(d[i] * d[i] * d[i]) / (p[i] * p[i]);
      }
      const double err = std::abs(srfe_discrete(p, q, tau) - quad);
      const double allowed = 2.0 * (1.0 + tau) / 6.0 * cubic;
      worst = std::max(worst, allowed > 0 ? err / allowed : (err > 0 ? 1e300 : 0.0));
    }
  }
  b.at_most("simplex_cubic_remainder_ratio", worst, 1.0);
  return b.finish();
}

/// Exact enumeration: Pr_Q[log(p/q) >= a] <= exp(-tau a) F(tau) on a grid.
inline CheckReport check_tail_bounds(const std::vector<std::pair<DiscreteDist, DiscreteDist>>& pairs,
                                     const Vec& tau_grid, const Vec& a_grid, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("tail_bounds", opts);
  std::size_t violations = 0;
  std::size_t evaluated = 0;
  double worst_ratio = 0.0;
  for (const auto& [p, q] : pairs) {
    for (double tau : tau_grid) {
      for (double a : a_grid) {
        const double prob = exact_tail_prob(p, q, a);
        const double bound = tail_bound(p, q, tau, a);
        ++evaluated;
        if (prob > bound) ++violations;
        if (bound > 0.0) worst_ratio = std::max(worst_ratio, prob / bound);
      }
    }
  }
  b.at_most("violations", static_cast<double>(violations), 0.0);
  b.at_most("max_prob_over_bound", worst_ratio, 1.0);
  b.note(std::to_string(evaluated) + " (pair, tau, a) cells");
  return b.finish();
}

/// Monte-Carlo tail frequency under q = N(mu_q, s^2 I) against the bound for
/// p = N(mu_p, s^2 I), where SRFE = |mu_p - mu_q|^2 / (2 s^2) for every tau.
inline CheckReport check_tail_bounds_mc(const DiagonalGaussian& q_gauss, const DiagonalGaussian& p_gauss,
                                        const Vec& tau_grid, const Vec& a_grid, std::size_t n,
                                        const CheckOptions& opts = {}) {
  detail::ReportBuilder b("tail_bounds_mc", opts);
  const double sigma = q_gauss.sigma(0);
  const double srfe_value = gaussian_pair_srfe_closed_form(p_gauss.mu(), q_gauss.mu(), sigma);
  Rng rng(opts.seed + 29);
  Vec delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = q_gauss.sample(rng);
    delta[i] = p_gauss.log_prob(x) - q_gauss.log_prob(x);
  }
  std::sort(delta.begin(), delta.end());
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (double a : a_grid) {
    const auto first = std::lower_bound(delta.begin(), delta.end(), a);
    const double freq = static_cast<double>(delta.end() - first) / static_cast<double>(n);
    const double se = std::sqrt(std::max(freq * (1.0 - freq), 1.0 / static_cast<double>(n)) / static_cast<double>(n));
    for (double tau : tau_grid) {
      const double bound = std::exp(-tau * a - tau * (1.0 - tau) * srfe_value);
      worst_excess = std::max(worst_excess, (freq - bound) / se);
    }
  }
  b.at_most("max_excess_in_standard_errors", worst_excess, 4.0);
  b.note("closed-form SRFE " + std::to_string(srfe_value) + ", n = " + std::to_string(n));
  return b.finish();
}

/// min{KL(P||Q)/tau, KL(Q||P)/(1-tau)} - SRFE >= 0.
inline CheckReport check_kl_upper_bounds(const std::vector<std::pair<DiscreteDist, DiscreteDist>>& pairs,
                                         const Vec& tau_grid, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("kl_upper_bounds", opts);
  double min_gap = std::numeric_limits<double>::infinity();
  for (const auto& [p, q] : pairs) {
    for (double tau : tau_grid) min_gap = std::min(min_gap, kl_upper_bound_gap(p, q, tau));
  }
  b.at_least("min_gap", min_gap, -1e-12);
  b.note(std::to_string(pairs.size()) + " pairs x " + std::to_string(tau_grid.size()) + " tau values");
  return b.finish();
}

namespace detail {

/// Central differences of f(softmax(theta)) in every logit coordinate.
template <typename Fn>
Vec softmax_fd_gradient(Fn&& f, const Vec& logits, double h) {
  Vec g(logits.size());
  Vec work = logits;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    work[j] = logits[j] + h;
    const double up = f(softmax(work));
    work[j] = logits[j] - h;
    const double down = f(softmax(work));
    work[j] = logits[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace detail

/// Closed-form SRFE and CR gradients for the softmax family against finite
/// differences, one instance per (p, logits).
struct GradientIdentityErrors {
  double srfe_fd = 0.0;
  double cr_fd = 0.0;
  double cr_baseline = 0.0;
};

inline GradientIdentityErrors gradient_identity_errors(const DiscreteDist& p, const Vec& logits, double tau,
                                                       double h = 1e-5) {
  const DiscreteDist q = softmax(logits);
  const std::size_t k = logits.size();
  const DiscreteDist r = escort(p, q, tau);
  Vec srfe_grad(k, 0.0);
  Vec cr_grad(k, 0.0);
  Vec cr_base(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const Vec s = softmax_score(q, j);
    const double u_tau = p[j] > 0.0 ? std::exp(tau * (std::log(p[j]) - std::log(q[j]))) : 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      srfe_grad[i] -= r[j] * s[i] / tau;
      cr_grad[i] -= q[j] * u_tau * s[i] / tau;
      cr_base[i] -= q[j] * (u_tau - 1.0) * s[i] / tau;
    }
  }
  const Vec fd_srfe = detail::softmax_fd_gradient([&](const DiscreteDist& qq) { return srfe_discrete(p, qq, tau); },
                                                  logits, h);
  const Vec fd_cr = detail::softmax_fd_gradient([&](const DiscreteDist& qq) { return cr_associated(p, qq, tau); },
                                                logits, h);
  return {detail::max_abs_diff(srfe_grad, fd_srfe), detail::max_abs_diff(cr_grad, fd_cr),
          detail::max_abs_diff(cr_grad, cr_base)};
}

inline CheckReport check_gradient_identity(const std::vector<std::pair<DiscreteDist, Vec>>& instances,
                                           const Vec& tau_grid, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("gradient_identity", opts);
  GradientIdentityErrors worst;
  for (const auto& [p, logits] : instances) {
    for (double tau : tau_grid) {
      const auto e = gradient_identity_errors(p, logits, tau);
      worst.srfe_fd = std::max(worst.srfe_fd, e.srfe_fd);
      worst.cr_fd = std::max(worst.cr_fd, e.cr_fd);
      worst.cr_baseline = std::max(worst.cr_baseline, e.cr_baseline);
    }
  }
  b.at_most("srfe_vs_finite_difference", worst.srfe_fd, 1e-6);
  b.at_most("cr_vs_finite_difference", worst.cr_fd, 1e-6);
  b.at_most("cr_baseline_vs_plain", worst.cr_baseline, 1e-12);
  return b.finish();
}

/// h_tau(d) = -log(1 - tau (1 - tau) d) / (tau (1 - tau)).
inline double cr_to_srfe(double cr_value, double tau) {
  const double w = tau * (1.0 - tau);
  return -std::log1p(-w * cr_value) / w;
}

/// SRFE and associated CR order every pair of candidates identically.
inline CheckReport check_monotone_equivalence(std::size_t n_triples, double tau, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("monotone_equivalence", opts);
  Rng rng(opts.seed + 41);
  std::size_t disagreements = 0;
  double worst_transform = 0.0;
  for (std::size_t t = 0; t < n_triples; ++t) {
    const std::size_t n = 2 + t % 7;
    const DiscreteDist p = DiscreteDist::random(rng, n);
    const DiscreteDist q1 = DiscreteDist::random(rng, n);
    const DiscreteDist q2 = DiscreteDist::random(rng, n);
    const double s1 = srfe_discrete(p, q1, tau);
    const double s2 = srfe_discrete(p, q2, tau);
    const double c1 = cr_associated(p, q1, tau);
    const double c2 = cr_associated(p, q2, tau);
    const double ds = s1 - s2;
    const double dc = c1 - c2;
    // Ties closer than rounding are not orderings.
    if (std::abs(ds) > 1e-12 * std::max(1.0, std::abs(s1)) && (ds > 0) != (dc > 0)) ++disagreements;
    for (const auto& [s, c] : {std::pair{s1, c1}, std::pair{s2, c2}}) {
      worst_transform = std::max(worst_transform, std::abs(cr_to_srfe(c, tau) - s) / std::max(1.0, s));
    }
  }
  b.at_most("ordering_disagreements", static_cast<double>(disagreements), 0.0);
  b.at_most("transform_relative_error", worst_transform, 1e-12);
  b.note(std::to_string(n_triples) + " random triples");
  return b.finish();
}

/// Mixed partials at two points sharing w = 1 - u - v: SRFE differs, KL does not.
inline CheckReport check_not_f_divergence(const Vec& tau_grid, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("not_f_divergence", opts);
  double min_diff = std::numeric_limits<double>::infinity();
  for (double tau : tau_grid) {
    const double a = mixed_partial_probe(0.1, 0.4, tau);
    const double c = mixed_partial_probe(0.2, 0.3, tau);
    min_diff = std::min(min_diff, std::abs(a - c));
  }
  const double kl_diff = std::abs(mixed_partial_probe_kl(0.1, 0.4) - mixed_partial_probe_kl(0.2, 0.3));
  b.at_least("min_srfe_probe_difference", min_diff, 1e-3);
  b.at_most("kl_probe_difference", kl_diff, 1e-6);
  return b.finish();
}

/// Vanishing-mass sequence: q puts 10^-k on point 0, where p has its largest mass.
inline std::vector<Vec> vanishing_mass_logits(std::size_t n, std::size_t k_lo, std::size_t k_hi) {
  std::vector<Vec> out;
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const double mass = std::pow(10.0, -static_cast<double>(k));
    Vec logits(n, std::log((1.0 - mass) / static_cast<double>(n - 1)));
    logits[0] = std::log(mass);
    out.push_back(std::move(logits));
  }
  return out;
}

/// Enumerated second moments against their bounds, plus the divergence of the
/// CR estimator along a vanishing-mass sequence (which requires tau > 1/2).
inline CheckReport check_second_moment_bounds(const std::vector<std::pair<DiscreteDist, Vec>>& instances,
                                              const Vec& tau_grid, const Vec& divergence_taus,
                                              const CheckOptions& opts = {}) {
  detail::ReportBuilder b("second_moment_bounds", opts);
  double worst_ratio = 0.0;
  double worst_q_identity = 0.0;
  for (const auto& [p, logits] : instances) {
    for (double tau : tau_grid) {
      const SoftmaxEstimatorSetup setup(p, logits, tau);
      for (EstimatorKind kind : {EstimatorKind::CR, EstimatorKind::SrfeEscort, EstimatorKind::SrfeQ}) {
        const double m = exact_second_moment(kind, p, logits, tau);
        worst_ratio = std::max(worst_ratio, m / setup.bound(kind));
      }
      const double cr = exact_second_moment(EstimatorKind::CR, p, logits, tau);
      const double sq = exact_second_moment(EstimatorKind::SrfeQ, p, logits, tau);
      const double f = setup.f_tau;
      worst_q_identity = std::max(worst_q_identity, std::abs(sq * f * f - cr) / std::max(cr, 1e-300));
    }
  }
  b.at_most("max_moment_over_bound", worst_ratio, 1.0 + 1e-12);
  b.at_most("srfe_q_equals_cr_over_f2", worst_q_identity, 1e-12);

  const DiscreteDist p({0.5, 0.3, 0.2});
  const auto sequence = vanishing_mass_logits(3, 2, 8);
  std::size_t non_monotone = 0;
  double min_growth = std::numeric_limits<double>::infinity();
  double worst_escort = 0.0;
  for (double tau : divergence_taus) {
    Vec cr_moments;
    for (const auto& logits : sequence) {
      const SoftmaxEstimatorSetup setup(p, logits, tau);
      cr_moments.push_back(exact_second_moment(EstimatorKind::CR, p, logits, tau));
      worst_escort = std::max(worst_escort, exact_second_moment(EstimatorKind::SrfeEscort, p, logits, tau) /
                                                (setup.score_bound / (tau * tau)));
    }
    for (std::size_t i = 1; i < cr_moments.size(); ++i) non_monotone += cr_moments[i] > cr_moments[i - 1] ? 0 : 1;
    min_growth = std::min(min_growth, cr_moments.back() / cr_moments.front());
  }
  b.at_most("cr_non_monotone_steps", static_cast<double>(non_monotone), 0.0);
  b.at_least("cr_growth_factor", min_growth, 10.0);
  b.at_most("escort_moment_over_c_tau2", worst_escort, 1.0 + 1e-12);
  return b.finish();
}

/// Mirror descent recovers the escort and SRFE; the Pythagorean identity holds.
inline CheckReport check_variational_characterization(std::size_t n_instances, std::size_t n_probe,
                                                      const CheckOptions& opts = {}) {
  detail::ReportBuilder b("variational_characterization", opts);
  Rng rng(opts.seed + 53);
  double worst_l1 = 0.0;
  double worst_value = 0.0;
  double worst_pyth = 0.0;
  std::size_t not_converged = 0;
  const Vec taus = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  for (std::size_t t = 0; t < n_instances; ++t) {
    const std::size_t n = 2 + t % 9;
    const DiscreteDist p = detail::interior_dist(rng, n, 0.05);
    const DiscreteDist q = detail::interior_dist(rng, n, 0.05);
    const double tau = taus[t % taus.size()];
    const VariationalSolution sol = variational_minimize(p, q, tau);
    if (!sol.converged) ++not_converged;
    const DiscreteDist r_tau = escort(p, q, tau);
    worst_l1 = std::max(worst_l1, l1_distance(sol.minimizer.probs(), r_tau.probs()));
    worst_value = std::max(worst_value, std::abs(sol.objective_value - srfe_discrete(p, q, tau)));
    for (std::size_t k = 0; k < n_probe; ++k) {
      const DiscreteDist r = DiscreteDist::random(rng, n);
      worst_pyth = std::max(worst_pyth, std::abs(pythagorean_residual(r, p, q, tau)));
    }
  }
  b.at_most("minimizer_l1_to_escort", worst_l1, 1e-4);
  b.at_most("objective_minus_srfe", worst_value, 1e-6);
  b.at_most("pythagorean_residual", worst_pyth, 1e-10);
  b.at_most("non_converged_runs", static_cast<double>(not_converged), 0.0);
  return b.finish();
}

/// Relative error of the analytic loss gradient against common-random-number
/// central differences of the loss.
template <TargetDensity T>
double pathwise_gradient_relative_error(const DiagonalGaussian& q, const T& target, const SrfeConfig& cfg,
                                        const Matrix& eps, double h = 1e-5) {
  const Vec analytic = srfe_mc_grad(q, target, cfg, eps).flat();
  const Vec theta = q.flat();
  Vec fd(theta.size());
  Vec work = theta;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    work[j] = theta[j] + h;
    const double up = srfe_mc_loss(DiagonalGaussian::from_flat(work), target, cfg, eps).loss;
    work[j] = theta[j] - h;
    const double down = srfe_mc_loss(DiagonalGaussian::from_flat(work), target, cfg, eps).loss;
    work[j] = theta[j];
    fd[j] = (up - down) / (2.0 * h);
  }
  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t j = 0; j < fd.size(); ++j) {
    diff += (fd[j] - analytic[j]) * (fd[j] - analytic[j]);
    norm += analytic[j] * analytic[j];
  }
  if (norm == 0.0) return std::sqrt(diff);
  return std::sqrt(diff / norm);
}

inline CheckReport check_pathwise_gradient(std::size_t n_configs, std::size_t n_samples,
                                           const CheckOptions& opts = {}) {
  detail::ReportBuilder b("pathwise_gradient", opts);
  const GaussianMixture target = three_mode_mixture();
  Rng rng(opts.seed + 67);
  double worst = 0.0;
  std::size_t clamped = 0;
  for (std::size_t c = 0; c < n_configs; ++c) {
    const DiagonalGaussian q({rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 3.0)},
                             {rng.uniform(-0.7, 0.5), rng.uniform(-0.7, 0.5)});
    SrfeConfig cfg;
    cfg.tau = rng.uniform(0.05, 0.95);
    cfg.n_samples = n_samples;
    const Matrix eps = rng.normal_matrix(n_samples, 2);
    if (srfe_mc_loss(q, target, cfg, eps).clamped) {
      ++clamped;
      continue;
    }
    worst = std::max(worst, pathwise_gradient_relative_error(q, target, cfg, eps));
  }
  b.at_most("max_relative_error", worst, 1e-4);
  b.note(std::to_string(n_configs) + " configurations, " + std::to_string(clamped) + " clamped and skipped");
  return b.finish();
}

/// Monte-Carlo SRFE on equal-covariance Gaussian pairs against |dmu|^2 / (2 s^2).
inline CheckReport check_gaussian_closed_form(const Vec& tau_grid, std::size_t n, const CheckOptions& opts = {}) {
  detail::ReportBuilder b("gaussian_closed_form", opts);
  const double sigma = std::sqrt(0.5);
  const DiagonalGaussian q({0.0, 0.0}, {std::log(sigma), std::log(sigma)});
  const DiagonalGaussian p({1.0, 0.0}, {std::log(sigma), std::log(sigma)});
  const double exact = gaussian_pair_srfe_closed_form(p.mu(), q.mu(), sigma);
  Rng rng(opts.seed + 71);
  double worst = 0.0;
  for (double tau : tau_grid) {
    SrfeConfig cfg;
    cfg.tau = tau;
    cfg.n_samples = n;
    const Matrix eps = rng.normal_matrix(n, 2);
    worst = std::max(worst, std::abs(srfe_mc_loss(q, p, cfg, eps).loss - exact) / exact);
  }
  b.at_most("max_relative_error", worst, 0.05);
  return b.finish();
}

struct SuiteReport {
  std::vector<CheckReport> checks;
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckReport& c) { return c.passed; });
  }
};

namespace detail {

inline std::vector<std::pair<DiscreteDist, DiscreteDist>> random_pairs(Rng& rng, std::size_t count, std::size_t n_lo,
                                                                       std::size_t n_hi) {
  std::vector<std::pair<DiscreteDist, DiscreteDist>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = n_lo + i % (n_hi - n_lo + 1);
    DiscreteDist p = DiscreteDist::random(rng, n);
    DiscreteDist q = DiscreteDist::random(rng, n);
    out.emplace_back(std::move(p), std::move(q));
  }
  return out;
}

inline std::vector<std::pair<DiscreteDist, Vec>> random_softmax_instances(Rng& rng, std::size_t count) {
  std::vector<std::pair<DiscreteDist, Vec>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = 2 + i % 5;
    DiscreteDist p = DiscreteDist::random(rng, k);
    Vec logits(k);
    for (double& l : logits) l = rng.normal();
    out.emplace_back(std::move(p), std::move(logits));
  }
  return out;
}

}  // namespace detail

/// Names accepted by `run_suite`'s negative-control option.
inline std::vector<std::string> suite_check_names() {
  return {"kl_limits",           "expansions",           "fisher_metric",    "tail_bounds",
          "tail_bounds_mc",      "kl_upper_bounds",      "gradient_identity", "monotone_equivalence",
          "not_f_divergence",    "second_moment_bounds", "variational_characterization",
          "pathwise_gradient",   "gaussian_closed_form"};
}

/// The full verification suite. `broken_check` names one check whose
/// tolerances are made unsatisfiable (empty for a normal run).
inline SuiteReport run_suite(std::uint64_t seed = 0, const std::string& broken_check = "") {
  auto opts_for = [&](const char* name) {
    CheckOptions o;
    o.seed = seed;
    o.inject_bad_tolerance = broken_check == name;
    return o;
  };
  const Vec taus = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  SuiteReport suite;
  Rng rng(seed);

  const DiscreteDist p0({0.5, 0.5});
  const DiscreteDist q0({0.25, 0.75});
  suite.checks.push_back(check_kl_limits(p0, q0, {0.02, 0.01}, opts_for("kl_limits")));

  std::vector<std::pair<DiscreteDist, DiscreteDist>> exp_pairs;
  for (std::size_t i = 0; i < 20; ++i) {
    const std::size_t n = 2 + i % 5;
    exp_pairs.emplace_back(detail::interior_dist(rng, n, 0.3), detail::interior_dist(rng, n, 0.3));
  }
  suite.checks.push_back(check_expansions(exp_pairs, {1e-3, 5e-4}, opts_for("expansions")));

  suite.checks.push_back(check_fisher_metric({0.5, 1.0, 2.0}, {0.2, 0.5, 0.8}, 1e-3, opts_for("fisher_metric")));

  Vec a_grid;
  for (int i = 0; i <= 30; ++i) a_grid.push_back(-1.0 + 0.1 * i);
  suite.checks.push_back(check_tail_bounds(detail::random_pairs(rng, 50, 2, 10), taus, a_grid, opts_for("tail_bounds")));

  const double s = std::log(std::sqrt(0.5));
  suite.checks.push_back(check_tail_bounds_mc(DiagonalGaussian({0.0, 0.0}, {s, s}), DiagonalGaussian({1.0, 0.0}, {s, s}),
                                              taus, a_grid, 1000000, opts_for("tail_bounds_mc")));

  suite.checks.push_back(check_kl_upper_bounds(detail::random_pairs(rng, 1000, 6, 6), taus, opts_for("kl_upper_bounds")));

  const auto instances = detail::random_softmax_instances(rng, 50);
  suite.checks.push_back(check_gradient_identity(instances, {0.3, 0.5, 0.8}, opts_for("gradient_identity")));
  suite.checks.push_back(check_monotone_equivalence(10000, 0.5, opts_for("monotone_equivalence")));
  suite.checks.push_back(check_not_f_divergence({0.3, 0.5, 0.9}, opts_for("not_f_divergence")));
  suite.checks.push_back(check_second_moment_bounds(instances, taus, {0.7, 0.9}, opts_for("second_moment_bounds")));
  suite.checks.push_back(check_variational_characterization(100, 10, opts_for("variational_characterization")));
  suite.checks.push_back(check_pathwise_gradient(50, 256, opts_for("pathwise_gradient")));
  suite.checks.push_back(check_gaussian_closed_form({0.2, 0.5, 0.8}, 100000, opts_for("gaussian_closed_form")));
  return suite;
}

}  // namespace srfe
