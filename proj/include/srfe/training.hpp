#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srfe/errors.hpp"
#include "srfe/gauss.hpp"
#include "srfe/mc.hpp"
#include "srfe/numeric.hpp"
#include "srfe/rng.hpp"

namespace srfe {

struct AdamState {
  Vec m;
  Vec v;
  std::size_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr = 0.05;

  static AdamState zeros(std::size_t n, double lr) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    return s;
  }
};

struct AdamStep {
  AdamState state;
  Vec theta;
};

/// One bias-corrected Adam update.
inline AdamStep adam_step(AdamState state, std::span<const double> theta, std::span<const double> grad) {
  detail::require_same_size(theta.size(), grad.size(), "theta and grad");
  detail::require_same_size(state.m.size(), theta.size(), "Adam state");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw Error(ErrorKind::NonFiniteValue, "non-finite gradient component", i);
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  Vec next(theta.begin(), theta.end());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    next[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  return {std::move(state), std::move(next)};
}

/// Time-varying tau: fixed, linear between two values, or piecewise constant.
class TauSchedule {
 public:
  enum class Kind { Fixed, Linear, Stepwise };

  struct Breakpoint {
    double fraction;
    double tau;
  };

  static TauSchedule fixed(double tau) {
    detail::require_tau(tau);
    return TauSchedule(Kind::Fixed, {{0.0, tau}});
  }

  static TauSchedule linear(double start, double end) {
    detail::require_tau(start);
    detail::require_tau(end);
    return TauSchedule(Kind::Linear, {{0.0, start}, {1.0, end}});
  }

  static TauSchedule stepwise(std::vector<Breakpoint> breakpoints) {
    if (breakpoints.empty()) throw Error(ErrorKind::InvalidArgument, "stepwise schedule needs breakpoints");
    for (std::size_t i = 0; i < breakpoints.size(); ++i) {
      detail::require_tau(breakpoints[i].tau);
      const double f = breakpoints[i].fraction;
      if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::InvalidArgument, "breakpoint fraction outside [0, 1]");
      if (i > 0 && !(f > breakpoints[i - 1].fraction)) {
        throw Error(ErrorKind::InvalidArgument, "breakpoint fractions must be strictly increasing");
      }
    }
    if (breakpoints.front().fraction != 0.0) {
      throw Error(ErrorKind::InvalidArgument, "first breakpoint must start at fraction 0");
    }
    return TauSchedule(Kind::Stepwise, std::move(breakpoints));
  }

  /// Equal-length segments, one per tau value.
  static TauSchedule stepwise_equal(const std::vector<double>& taus) {
    std::vector<Breakpoint> bps;
    for (std::size_t i = 0; i < taus.size(); ++i) {
      bps.push_back({static_cast<double>(i) / static_cast<double>(taus.size()), taus[i]});
    }
    return stepwise(std::move(bps));
  }

  Kind kind() const noexcept { return kind_; }
  const std::vector<Breakpoint>& breakpoints() const noexcept { return points_; }

  /// tau at step t of T (1-based).
  double at(std::size_t t, std::size_t total) const {
    if (total == 0 || t < 1 || t > total) {
      throw Error(ErrorKind::InvalidArgument, "step " + std::to_string(t) + " outside [1, " + std::to_string(total) + "]");
    }
    const double progress = total == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(total - 1);
    switch (kind_) {
      case Kind::Fixed:
        return points_[0].tau;
      case Kind::Linear:
        if (t == total) return points_[1].tau;
        return points_[0].tau + (points_[1].tau - points_[0].tau) * progress;
      case Kind::Stepwise: {
        double tau = points_[0].tau;
        for (const auto& bp : points_) {
          if (bp.fraction <= progress) tau = bp.tau;
        }
        return tau;
      }
    }
    return points_[0].tau;
  }

  std::string label() const {
    auto fmt = [](double x) {
      std::string s = std::to_string(x);
      while (s.size() > 1 && s.back() == '0') s.pop_back();
      if (!s.empty() && s.back() == '.') s.pop_back();
      return s;
    };
    switch (kind_) {
      case Kind::Fixed: return "fixed(" + fmt(points_[0].tau) + ")";
      case Kind::Linear: return "linear(" + fmt(points_[0].tau) + "->" + fmt(points_[1].tau) + ")";
      case Kind::Stepwise: {
        std::string s = "stepwise(";
        for (std::size_t i = 0; i < points_.size(); ++i) s += (i ? "->" : "") + fmt(points_[i].tau);
        return s + ")";
      }
    }
    return "";
  }

 private:
  TauSchedule(Kind kind, std::vector<Breakpoint> points) : kind_(kind), points_(std::move(points)) {}

  Kind kind_;
  std::vector<Breakpoint> points_;
};

inline double tau_at(const TauSchedule& schedule, std::size_t t, std::size_t total) { return schedule.at(t, total); }

enum class ObjectiveKind { Srfe, ForwardKL, ReverseKL };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::Srfe;
  TauSchedule schedule = TauSchedule::fixed(0.5);

  static Objective srfe(TauSchedule s) { return {ObjectiveKind::Srfe, std::move(s)}; }
  static Objective srfe(double tau) { return srfe(TauSchedule::fixed(tau)); }
  static Objective forward_kl() { return {ObjectiveKind::ForwardKL, TauSchedule::fixed(0.5)}; }
  static Objective reverse_kl() { return {ObjectiveKind::ReverseKL, TauSchedule::fixed(0.5)}; }

  std::string label() const {
    switch (kind) {
      case ObjectiveKind::ForwardKL: return "ForwardKL";
      case ObjectiveKind::ReverseKL: return "ReverseKL";
      case ObjectiveKind::Srfe: return "SRFE";
    }
    return "";
  }
};

struct RunConfig {
  std::size_t iterations = 2000;
  double lr = 0.05;
  std::size_t n_samples = 5000;
  std::uint64_t seed = 0;
};

struct TrainResult {
  DiagonalGaussian theta = DiagonalGaussian::standard(1);
  Vec loss_history;
  Vec tau_history;
  std::uint64_t seed = 0;
  RunConfig config;
  std::string objective_label;
};

/// Adam on (mu, log_sigma) from mu = 0, sigma = 1 with fresh samples each step.
template <TargetDensity T>
TrainResult train(const T& target, const Objective& objective, const RunConfig& cfg) {
  if (cfg.iterations == 0 || cfg.n_samples == 0 || !(cfg.lr > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "iterations, n_samples and lr must be positive");
  }
  const std::size_t d = target.dim();
  Rng rng(cfg.seed);
  DiagonalGaussian q = DiagonalGaussian::standard(d);
  AdamState adam = AdamState::zeros(2 * d, cfg.lr);

  TrainResult result;
  result.loss_history.reserve(cfg.iterations);
  result.seed = cfg.seed;
  result.config = cfg;
  result.objective_label = objective.label();

  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    LossAndGrad step;
    double tau = 0.0;
    switch (objective.kind) {
      case ObjectiveKind::Srfe: {
        tau = objective.schedule.at(t, cfg.iterations);
        SrfeConfig sc;
        sc.tau = tau;
        sc.n_samples = cfg.n_samples;
        const Matrix eps = rng.normal_matrix(cfg.n_samples, d);
        step = srfe_mc_evaluate(q, target, sc, eps);
        break;
      }
      case ObjectiveKind::ReverseKL: {
        const Matrix eps = rng.normal_matrix(cfg.n_samples, d);
        step = reverse_kl_evaluate(q, target, eps);
        break;
      }
      case ObjectiveKind::ForwardKL: {
        const Matrix xs = sample_matrix(target, cfg.n_samples, rng);
        step = forward_kl_evaluate(q, target, xs);
        break;
      }
    }
    if (!std::isfinite(step.report.loss)) {
      throw Error(ErrorKind::NonFiniteValue, "non-finite loss during training", t);
    }
    const Vec grad = step.grad.flat();
    AdamStep next = [&] {
      try {
        return adam_step(std::move(adam), q.flat(), grad);
      } catch (const Error& e) {
        throw Error(ErrorKind::NonFiniteValue, std::string("non-finite gradient during training: ") + e.what(), t);
      }
    }();
    adam = std::move(next.state);
    q = DiagonalGaussian::from_flat(next.theta);
    result.loss_history.push_back(step.report.loss);
    result.tau_history.push_back(tau);
  }
  result.theta = q;
  return result;
}

}  // namespace srfe
