#pragma once

// Experiment drivers: the method comparison, the tau sweep, tau schedules and
// the contamination study, plus CSV rendering of their results.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "srfe/errors.hpp"
#include "srfe/evaluation.hpp"
#include "srfe/gauss.hpp"
#include "srfe/numeric.hpp"
#include "srfe/training.hpp"

namespace srfe {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  /// Unset means the experiment's own default (2000, or 1500 for Exp 4).
  std::optional<std::size_t> iterations;
  std::size_t n_samples = 5000;
  double lr = 0.05;
  /// Unset means the experiment's own tau grid.
  std::optional<Vec> taus;
  std::size_t trials = 3;
  Vec outlier_weights = {0.0, 0.1, 0.2, 0.3};
  std::size_t n_eval = 10000;
  std::size_t n_entropy = 100000;
  std::size_t n_test = 1000;
  /// 0 means SRFE_LAB_THREADS, falling back to the hardware count.
  std::size_t threads = 0;
  bool keep_loss_history = false;
};

struct ResultRow {
  std::string experiment;
  std::string method;
  std::optional<double> tau;
  std::string schedule;
  std::optional<double> outlier_weight;
  EvalMetrics metrics;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string error;
  Vec loss_history;
  Vec tau_history;
};

struct AggregateRow {
  double tau = 0.0;
  std::size_t n_trials = 0;
  double coverage_mean = 0.0, coverage_std = 0.0;
  double ess_mean = 0.0, ess_std = 0.0;
  double entropy_error_mean = 0.0, entropy_error_std = 0.0;
  double test_log_lik_mean = 0.0, test_log_lik_std = 0.0;
  double final_loss_mean = 0.0, final_loss_std = 0.0;
};

inline std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SRFE_LAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs jobs[i]() for every i on up to `workers` threads. Each job writes only
/// its own slot, so output order never depends on scheduling.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) job(i);
    });
  }
  for (auto& t : pool) t.join();
}

namespace detail {

struct Cell {
  ResultRow row;
  Objective objective;
  RunConfig run;
};

inline EvalMetrics nan_metrics() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {0, nan, nan, nan};
}

template <ModalTarget T>
void run_cell(Cell& cell, const T& target, const ExperimentConfig& cfg) {
  try {
    TrainResult tr = train(target, cell.objective, cell.run);
    cell.row.final_loss = tr.loss_history.back();
    EvalConfig ec{cfg.n_eval, cfg.n_entropy, cfg.n_test, cell.run.seed};
    cell.row.metrics = evaluate(tr.theta, target, ec);
    if (cfg.keep_loss_history) {
      cell.row.loss_history = std::move(tr.loss_history);
      cell.row.tau_history = std::move(tr.tau_history);
    }
  } catch (const std::exception& e) {
    cell.row.metrics = nan_metrics();
    cell.row.error = e.what();
  }
}

inline Cell make_cell(const std::string& experiment, const ExperimentConfig& cfg, std::size_t default_iterations,
                      Objective objective, std::size_t trial) {
  Cell c{ResultRow{}, std::move(objective), RunConfig{}};
  c.run.iterations = cfg.iterations.value_or(default_iterations);
  c.run.lr = cfg.lr;
  c.run.n_samples = cfg.n_samples;
  c.run.seed = cfg.seed + trial;
  c.row.experiment = experiment;
  c.row.method = c.objective.label();
  if (c.objective.kind == ObjectiveKind::Srfe) {
    if (c.objective.schedule.kind() == TauSchedule::Kind::Fixed) c.row.tau = c.objective.schedule.at(1, 1);
    c.row.schedule = c.objective.schedule.label();
  }
  c.row.trial = trial;
  c.row.seed = c.run.seed;
  return c;
}

template <ModalTarget T>
std::vector<ResultRow> run_cells(std::vector<Cell>& cells, const T& target, const ExperimentConfig& cfg) {
  parallel_for(cells.size(), worker_count(cfg.threads), [&](std::size_t i) {
    const T local = target;  // targets are cheap to copy; keep cells fully independent
    run_cell(cells[i], local, cfg);
  });
  std::vector<ResultRow> rows;
  rows.reserve(cells.size());
  for (auto& c : cells) rows.push_back(std::move(c.row));
  return rows;
}

}  // namespace detail

/// ForwardKL, ReverseKL and SRFE at each tau on the three-mode mixture.
inline std::vector<ResultRow> run_exp1(const ExperimentConfig& cfg = {}) {
  const Vec taus = cfg.taus.value_or(Vec{0.1, 0.3, 0.5, 0.7, 0.9});
  std::vector<detail::Cell> cells;
  cells.push_back(detail::make_cell("exp1", cfg, 2000, Objective::forward_kl(), 0));
  cells.push_back(detail::make_cell("exp1", cfg, 2000, Objective::reverse_kl(), 0));
  for (double tau : taus) cells.push_back(detail::make_cell("exp1", cfg, 2000, Objective::srfe(tau), 0));
  return detail::run_cells(cells, three_mode_mixture(), cfg);
}

/// SRFE over tau in {0.1, ..., 0.9}, `trials` seeds each.
inline std::vector<ResultRow> run_exp2(const ExperimentConfig& cfg = {}) {
  const Vec taus = cfg.taus.value_or(Vec{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  std::vector<detail::Cell> cells;
  for (double tau : taus) {
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      cells.push_back(detail::make_cell("exp2", cfg, 2000, Objective::srfe(tau), t));
    }
  }
  return detail::run_cells(cells, three_mode_mixture(), cfg);
}

/// Per-tau mean and population standard deviation over successful trials.
inline std::vector<AggregateRow> aggregate_by_tau(const std::vector<ResultRow>& rows) {
  std::vector<double> taus;
  for (const auto& r : rows) {
    if (r.tau && std::find(taus.begin(), taus.end(), *r.tau) == taus.end()) taus.push_back(*r.tau);
  }
  auto stats = [](const Vec& xs) {
    if (xs.empty()) return std::pair{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double m = mean(xs);
    Vec sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - m) * (xs[i] - m);
    return std::pair{m, std::sqrt(mean(sq))};
  };
  std::vector<AggregateRow> out;
  for (double tau : taus) {
    Vec cov, ess_v, ent, tll, loss;
    for (const auto& r : rows) {
      if (!r.tau || *r.tau != tau || !r.error.empty()) continue;
      cov.push_back(static_cast<double>(r.metrics.mode_coverage));
      ess_v.push_back(r.metrics.ess);
      ent.push_back(r.metrics.entropy_error);
      tll.push_back(r.metrics.test_log_lik);
      loss.push_back(r.final_loss);
    }
    AggregateRow a;
    a.tau = tau;
    a.n_trials = cov.size();
    std::tie(a.coverage_mean, a.coverage_std) = stats(cov);
    std::tie(a.ess_mean, a.ess_std) = stats(ess_v);
    std::tie(a.entropy_error_mean, a.entropy_error_std) = stats(ent);
    std::tie(a.test_log_lik_mean, a.test_log_lik_std) = stats(tll);
    std::tie(a.final_loss_mean, a.final_loss_std) = stats(loss);
    out.push_back(a);
  }
  return out;
}

inline std::vector<TauSchedule> exp3_schedules() {
  return {TauSchedule::fixed(0.5),         TauSchedule::fixed(0.99),        TauSchedule::fixed(0.01),
          TauSchedule::linear(0.3, 0.9),   TauSchedule::linear(0.9, 0.3),
          TauSchedule::stepwise_equal({0.3, 0.5, 0.7, 0.9})};
}

/// Fixed, annealed and stepwise tau schedules.
inline std::vector<ResultRow> run_exp3(const ExperimentConfig& cfg = {}) {
  std::vector<detail::Cell> cells;
  for (const auto& s : exp3_schedules()) cells.push_back(detail::make_cell("exp3", cfg, 2000, Objective::srfe(s), 0));
  return detail::run_cells(cells, three_mode_mixture(), cfg);
}

/// SRFE at tau in {0.01, 0.5, 0.99} against the uniformly contaminated mixture.
inline std::vector<ResultRow> run_exp4(const ExperimentConfig& cfg = {}) {
  const Vec taus = cfg.taus.value_or(Vec{0.01, 0.5, 0.99});
  std::vector<ResultRow> rows;
  for (double w : cfg.outlier_weights) {
    std::vector<detail::Cell> cells;
    for (double tau : taus) {
      detail::Cell c = detail::make_cell("exp4", cfg, 1500, Objective::srfe(tau), 0);
      c.row.outlier_weight = w;
      cells.push_back(std::move(c));
    }
    auto part = detail::run_cells(cells, ContaminatedMixture::around(three_mode_mixture(), w), cfg);
    for (auto& r : part) rows.push_back(std::move(r));
  }
  return rows;
}

/// Row-major (x, y, log density) over a rectangle, x varying fastest.
struct GridPoint {
  double x, y, log_density;
};

inline std::vector<GridPoint> density_grid(const std::function<double(std::span<const double>)>& log_density,
                                           double x0, double x1, double y0, double y1, std::size_t res) {
  if (res < 2) throw Error(ErrorKind::InvalidArgument, "resolution must be at least 2");
  if (!(x1 > x0) || !(y1 > y0) || !std::isfinite(x0) || !std::isfinite(x1) || !std::isfinite(y0) ||
      !std::isfinite(y1)) {
    throw Error(ErrorKind::InvalidArgument, "bounds must be finite with x0 < x1 and y0 < y1");
  }
  std::vector<GridPoint> out;
  out.reserve(res * res);
  for (std::size_t j = 0; j < res; ++j) {
    const double y = y0 + (y1 - y0) * static_cast<double>(j) / static_cast<double>(res - 1);
    for (std::size_t i = 0; i < res; ++i) {
      const double x = x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(res - 1);
      const double pt[2] = {x, y};
      out.push_back({x, y, log_density(pt)});
    }
  }
  return out;
}

// CSV rendering ------------------------------------------------------------

/// %.17g: enough digits to round-trip any double.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

inline const char* kResultHeader =
    "experiment,method,tau,schedule,outlier_weight,trial,seed,mode_coverage,ess,entropy_error,test_log_lik,"
    "final_loss,error";

inline void write_rows_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kResultHeader << '\n';
  for (const auto& r : rows) {
    os << r.experiment << ',' << csv_escape(r.method) << ',' << (r.tau ? format_real(*r.tau) : "") << ','
       << csv_escape(r.schedule) << ',' << (r.outlier_weight ? format_real(*r.outlier_weight) : "") << ','
       << r.trial << ',' << r.seed << ',';
    if (r.error.empty()) {
      os << r.metrics.mode_coverage << ',' << format_real(r.metrics.ess) << ','
         << format_real(r.metrics.entropy_error) << ',' << format_real(r.metrics.test_log_lik) << ','
         << format_real(r.final_loss) << ',';
    } else {
      os << ",,,,,";
    }
    os << csv_escape(r.error) << '\n';
  }
}

inline const char* kAggregateHeader =
    "tau,n_trials,mode_coverage_mean,mode_coverage_std,ess_mean,ess_std,entropy_error_mean,entropy_error_std,"
    "test_log_lik_mean,test_log_lik_std,final_loss_mean,final_loss_std";

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << kAggregateHeader << '\n';
  for (const auto& a : rows) {
    os << format_real(a.tau) << ',' << a.n_trials << ',' << format_real(a.coverage_mean) << ','
       << format_real(a.coverage_std) << ',' << format_real(a.ess_mean) << ',' << format_real(a.ess_std) << ','
       << format_real(a.entropy_error_mean) << ',' << format_real(a.entropy_error_std) << ','
       << format_real(a.test_log_lik_mean) << ',' << format_real(a.test_log_lik_std) << ','
       << format_real(a.final_loss_mean) << ',' << format_real(a.final_loss_std) << '\n';
  }
}

/// Long format: one line per (row, step).
inline void write_loss_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "experiment,method,tau,schedule,outlier_weight,trial,step,step_tau,loss\n";
  for (const auto& r : rows) {
    for (std::size_t t = 0; t < r.loss_history.size(); ++t) {
      os << r.experiment << ',' << csv_escape(r.method) << ',' << (r.tau ? format_real(*r.tau) : "") << ','
         << csv_escape(r.schedule) << ',' << (r.outlier_weight ? format_real(*r.outlier_weight) : "") << ','
         << r.trial << ',' << t + 1 << ',' << format_real(t < r.tau_history.size() ? r.tau_history[t] : 0.0) << ','
         << format_real(r.loss_history[t]) << '\n';
    }
  }
}

inline void write_grid_csv(std::ostream& os, const std::vector<GridPoint>& grid) {
  os << "x,y,log_density\n";
  for (const auto& g : grid) os << format_real(g.x) << ',' << format_real(g.y) << ',' << format_real(g.log_density) << '\n';
}

}  // namespace srfe
