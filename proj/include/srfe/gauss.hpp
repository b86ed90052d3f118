#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "srfe/errors.hpp"
#include "srfe/numeric.hpp"
#include "srfe/rng.hpp"

namespace srfe {

/// Gradient of a scalar with respect to the diagonal-Gaussian parameters.
struct ParamGrad {
  Vec d_mu;
  Vec d_log_sigma;
};

/// N(mu, diag(exp(log_sigma)^2)).
class DiagonalGaussian {
 public:
  DiagonalGaussian(Vec mu, Vec log_sigma) : mu_(std::move(mu)), log_sigma_(std::move(log_sigma)) {
    detail::require_same_size(mu_.size(), log_sigma_.size(), "mu and log_sigma");
    if (mu_.empty()) throw Error(ErrorKind::InvalidArgument, "zero-dimensional Gaussian");
  }

  static DiagonalGaussian standard(std::size_t dim) { return {Vec(dim, 0.0), Vec(dim, 0.0)}; }

  /// Inverse of `flat()`: (mu_1..mu_d, log_sigma_1..log_sigma_d).
  static DiagonalGaussian from_flat(std::span<const double> theta) {
    if (theta.size() % 2 != 0 || theta.empty()) {
      throw Error(ErrorKind::DimensionMismatch, "flat parameter vector must have even length");
    }
    const std::size_t d = theta.size() / 2;
    return {Vec(theta.begin(), theta.begin() + d), Vec(theta.begin() + d, theta.end())};
  }

  Vec flat() const {
    Vec theta(mu_);
    theta.insert(theta.end(), log_sigma_.begin(), log_sigma_.end());
    return theta;
  }

  std::size_t dim() const noexcept { return mu_.size(); }
  const Vec& mu() const noexcept { return mu_; }
  const Vec& log_sigma() const noexcept { return log_sigma_; }
  double sigma(std::size_t k) const { return std::exp(log_sigma_[k]); }

  double log_prob(std::span<const double> x) const {
    detail::require_same_size(x.size(), dim(), "log_prob input");
    double acc = -0.5 * static_cast<double>(dim()) * kLog2Pi;
    for (std::size_t k = 0; k < dim(); ++k) {
      const double z = (x[k] - mu_[k]) / sigma(k);
      acc -= 0.5 * z * z + log_sigma_[k];
    }
    return acc;
  }

  /// d log q / dx.
  bool grad_log_prob(std::span<const double> x, std::span<double> out) const {
    detail::require_same_size(x.size(), dim(), "grad_log_prob input");
    for (std::size_t k = 0; k < dim(); ++k) {
      const double s = sigma(k);
      out[k] = -(x[k] - mu_[k]) / (s * s);
    }
    return true;
  }

  /// Reparameterized draw mu + sigma * eps.
  Vec sample(std::span<const double> eps) const {
    detail::require_same_size(eps.size(), dim(), "eps");
    Vec x(dim());
    for (std::size_t k = 0; k < dim(); ++k) x[k] = mu_[k] + sigma(k) * eps[k];
    return x;
  }

  Vec sample(Rng& rng) const {
    Vec eps(dim());
    for (auto& e : eps) e = rng.normal();
    return sample(eps);
  }

  /// Differential entropy in nats.
  double entropy() const {
    double acc = 0.5 * static_cast<double>(dim()) * (1.0 + kLog2Pi);
    for (double ls : log_sigma_) acc += ls;
    return acc;
  }

  /// d log q(x) / d(mu, log_sigma) at fixed x.
  ParamGrad param_score(std::span<const double> x) const {
    detail::require_same_size(x.size(), dim(), "param_score input");
    ParamGrad g{Vec(dim()), Vec(dim())};
    for (std::size_t k = 0; k < dim(); ++k) {
      const double s = sigma(k);
      const double z = (x[k] - mu_[k]) / s;
      g.d_mu[k] = z / s;
      g.d_log_sigma[k] = z * z - 1.0;
    }
    return g;
  }

 private:
  Vec mu_;
  Vec log_sigma_;
};

/// Mixture of isotropic Gaussians sharing one variance.
class GaussianMixture {
 public:
  GaussianMixture(Vec weights, std::vector<Vec> means, double shared_variance)
      : weights_(std::move(weights)), means_(std::move(means)), variance_(shared_variance) {
    detail::require_same_size(weights_.size(), means_.size(), "mixture weights and means");
    if (means_.empty()) throw Error(ErrorKind::InvalidArgument, "mixture needs at least one component");
    if (!(variance_ > 0.0) || !std::isfinite(variance_)) {
      throw Error(ErrorKind::InvalidArgument, "shared variance must be positive");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw Error(ErrorKind::InvalidDistribution, "mixture weight < 0");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidDistribution, "mixture weights must sum to 1");
    for (const auto& m : means_) detail::require_same_size(m.size(), means_.front().size(), "mixture mean");
    log_weights_.resize(weights_.size());
    for (std::size_t j = 0; j < weights_.size(); ++j) log_weights_[j] = std::log(weights_[j]);
    log_norm_ = -0.5 * static_cast<double>(dim()) * (kLog2Pi + std::log(variance_));
  }

  std::size_t dim() const noexcept { return means_.front().size(); }
  std::size_t num_components() const noexcept { return means_.size(); }
  const Vec& weights() const noexcept { return weights_; }
  const std::vector<Vec>& means() const noexcept { return means_; }
  const std::vector<Vec>& modes() const noexcept { return means_; }
  double shared_variance() const noexcept { return variance_; }

  double log_prob(std::span<const double> x) const {
    detail::require_same_size(x.size(), dim(), "mixture log_prob input");
    return with_component_logs(x, [](std::span<const double> logs) { return log_sum_exp(logs); });
  }

  /// sum_j gamma_j(x) (m_j - x) / s^2. Always well defined.
  bool grad_log_prob(std::span<const double> x, std::span<double> out) const {
    detail::require_same_size(x.size(), dim(), "mixture grad input");
    return with_component_logs(x, [&](std::span<const double> logs) {
      const double lp = log_sum_exp(logs);
      for (std::size_t k = 0; k < dim(); ++k) out[k] = 0.0;
      for (std::size_t j = 0; j < num_components(); ++j) {
        const double gamma = std::exp(logs[j] - lp);
        if (gamma == 0.0) continue;
        for (std::size_t k = 0; k < dim(); ++k) out[k] += gamma * (means_[j][k] - x[k]) / variance_;
      }
      return true;
    });
  }

  /// Ancestral draw: component by weight, then the Gaussian.
  Vec sample(Rng& rng) const {
    const std::size_t j = rng.categorical(weights_);
    const double s = std::sqrt(variance_);
    Vec x(dim());
    for (std::size_t k = 0; k < dim(); ++k) x[k] = means_[j][k] + s * rng.normal();
    return x;
  }

 private:
  /// Calls fn on the per-component log densities, on the stack when small.
  template <typename Fn>
  auto with_component_logs(std::span<const double> x, Fn&& fn) const -> std::invoke_result_t<Fn, std::span<const double>> {
    constexpr std::size_t kInline = 8;
    if (num_components() <= kInline) {
      std::array<double, kInline> buf;
      const std::span<double> logs(buf.data(), num_components());
      component_logs(x, logs);
      return fn(std::span<const double>(logs));
    }
    Vec buf(num_components());
    component_logs(x, buf);
    return fn(std::span<const double>(buf));
  }

  void component_logs(std::span<const double> x, std::span<double> out) const {
    for (std::size_t j = 0; j < num_components(); ++j) {
      if (weights_[j] == 0.0) {
        out[j] = kNegInf;
        continue;
      }
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim(); ++k) {
        const double diff = x[k] - means_[j][k];
        d2 += diff * diff;
      }
      out[j] = log_weights_[j] - 0.5 * d2 / variance_ + log_norm_;
    }
  }

  Vec weights_;
  Vec log_weights_;
  std::vector<Vec> means_;
  double variance_;
  double log_norm_ = 0.0;
};

/// The 2-D, three-mode target: means (-3,0), (3,0), (0,4); variance 0.5;
/// weights 0.3, 0.3, 0.4.
inline GaussianMixture three_mode_mixture() {
  return GaussianMixture({0.3, 0.3, 0.4}, {{-3.0, 0.0}, {3.0, 0.0}, {0.0, 4.0}}, 0.5);
}

/// (1 - w) * base + w * Uniform(box).
class ContaminatedMixture {
 public:
  ContaminatedMixture(GaussianMixture base, double outlier_weight, Vec box_low, Vec box_high)
      : base_(std::move(base)), weight_(outlier_weight), low_(std::move(box_low)), high_(std::move(box_high)) {
    if (!(weight_ >= 0.0 && weight_ < 1.0)) throw Error(ErrorKind::InvalidArgument, "outlier weight must be in [0, 1)");
    detail::require_same_size(low_.size(), base_.dim(), "box_low");
    detail::require_same_size(high_.size(), base_.dim(), "box_high");
    volume_ = 1.0;
    for (std::size_t k = 0; k < low_.size(); ++k) {
      if (!(high_[k] > low_[k])) throw Error(ErrorKind::InvalidArgument, "box must have positive extent");
      volume_ *= high_[k] - low_[k];
    }
    log_base_weight_ = std::log1p(-weight_);
    log_uniform_ = weight_ > 0.0 ? std::log(weight_) - std::log(volume_) : kNegInf;
  }

  /// Three-mode mixture contaminated on the box [-10, 10]^2.
  static ContaminatedMixture around(GaussianMixture base, double outlier_weight) {
    const std::size_t d = base.dim();
    return {std::move(base), outlier_weight, Vec(d, -10.0), Vec(d, 10.0)};
  }

  std::size_t dim() const noexcept { return base_.dim(); }
  const GaussianMixture& base() const noexcept { return base_; }
  const std::vector<Vec>& modes() const noexcept { return base_.modes(); }
  double outlier_weight() const noexcept { return weight_; }
  double box_volume() const noexcept { return volume_; }
  const Vec& box_low() const noexcept { return low_; }
  const Vec& box_high() const noexcept { return high_; }

  bool in_closed_box(std::span<const double> x) const {
    for (std::size_t k = 0; k < dim(); ++k) {
      if (x[k] < low_[k] || x[k] > high_[k]) return false;
    }
    return true;
  }

  bool on_boundary(std::span<const double> x) const {
    if (!in_closed_box(x)) return false;
    for (std::size_t k = 0; k < dim(); ++k) {
      if (x[k] == low_[k] || x[k] == high_[k]) return true;
    }
    return false;
  }

  double log_prob(std::span<const double> x) const {
    const double lb = log_base_weight_ + base_.log_prob(x);
    if (weight_ == 0.0 || !in_closed_box(x)) return lb;
    return log_add_exp(lb, log_uniform_);
  }

  /// Returns false on the box boundary, where the density jumps; `out` then
  /// holds the base-mixture gradient.
  bool grad_log_prob(std::span<const double> x, std::span<double> out) const {
    base_.grad_log_prob(x, out);
    if (on_boundary(x)) return false;
    if (weight_ > 0.0 && in_closed_box(x)) {
      const double share = std::exp(log_base_weight_ + base_.log_prob(x) - log_prob(x));
      for (std::size_t k = 0; k < dim(); ++k) out[k] *= share;
    }
    return true;
  }

  Vec sample(Rng& rng) const {
    if (weight_ > 0.0 && rng.uniform() < weight_) {
      Vec x(dim());
      for (std::size_t k = 0; k < dim(); ++k) x[k] = rng.uniform(low_[k], high_[k]);
      return x;
    }
    return base_.sample(rng);
  }

 private:
  GaussianMixture base_;
  double weight_;
  Vec low_;
  Vec high_;
  double volume_ = 1.0;
  double log_base_weight_ = 0.0;
  double log_uniform_ = kNegInf;
};

/// Anything that can play the role of the target density p.
template <typename T>
concept TargetDensity = requires(const T& t, std::span<const double> x, std::span<double> g, Rng& rng) {
  { t.dim() } -> std::convertible_to<std::size_t>;
  { t.log_prob(x) } -> std::convertible_to<double>;
  t.grad_log_prob(x, g);
  { t.sample(rng) } -> std::convertible_to<Vec>;
};

/// A target that also exposes the mode locations used by mode coverage.
template <typename T>
concept ModalTarget = TargetDensity<T> && requires(const T& t) {
  { t.modes() } -> std::convertible_to<const std::vector<Vec>&>;
};

/// SRFE between N(mu1, sigma^2 I) and N(mu2, sigma^2 I); the same for every tau.
inline double gaussian_pair_srfe_closed_form(std::span<const double> mu1, std::span<const double> mu2, double sigma) {
  detail::require_same_size(mu1.size(), mu2.size(), "gaussian pair means");
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");
  double d2 = 0.0;
  for (std::size_t k = 0; k < mu1.size(); ++k) d2 += (mu1[k] - mu2[k]) * (mu1[k] - mu2[k]);
  return d2 / (2.0 * sigma * sigma);
}

/// Draws n samples from a target into an n x dim matrix.
template <TargetDensity T>
Matrix sample_matrix(const T& target, std::size_t n, Rng& rng) {
  Matrix out(n, target.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec x = target.sample(rng);
    for (std::size_t k = 0; k < x.size(); ++k) out(i, k) = x[k];
  }
  return out;
}

}  // namespace srfe
