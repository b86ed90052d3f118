// srfe-lab: experiment reproduction, the verification suite and density grids.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "srfe/checks.hpp"
#include "srfe/experiments.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Overrides {
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> n_samples;
  std::optional<double> lr;
  std::vector<double> taus;
  std::optional<std::size_t> trials;
  std::vector<double> outlier_weights;
  std::optional<std::size_t> n_eval;
  std::optional<std::size_t> n_entropy;
  std::optional<std::size_t> n_test;
};

void apply_json(srfe::ExperimentConfig& cfg, const json& j) {
  const std::vector<std::string> known = {"seed",   "iterations", "n_samples", "lr",     "taus",
                                          "trials", "outlier_weights", "n_eval", "n_entropy", "n_test"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<std::size_t>();
  if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<std::size_t>();
  if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
  if (j.contains("taus")) cfg.taus = j.at("taus").get<std::vector<double>>();
  if (j.contains("trials")) cfg.trials = j.at("trials").get<std::size_t>();
  if (j.contains("outlier_weights")) cfg.outlier_weights = j.at("outlier_weights").get<std::vector<double>>();
  if (j.contains("n_eval")) cfg.n_eval = j.at("n_eval").get<std::size_t>();
  if (j.contains("n_entropy")) cfg.n_entropy = j.at("n_entropy").get<std::size_t>();
  if (j.contains("n_test")) cfg.n_test = j.at("n_test").get<std::size_t>();
}

void apply_overrides(srfe::ExperimentConfig& cfg, const Overrides& o) {
  if (o.iterations) cfg.iterations = o.iterations;
  if (o.n_samples) cfg.n_samples = *o.n_samples;
  if (o.lr) cfg.lr = *o.lr;
  if (!o.taus.empty()) cfg.taus = o.taus;
  if (o.trials) cfg.trials = *o.trials;
  if (!o.outlier_weights.empty()) cfg.outlier_weights = o.outlier_weights;
  if (o.n_eval) cfg.n_eval = *o.n_eval;
  if (o.n_entropy) cfg.n_entropy = *o.n_entropy;
  if (o.n_test) cfg.n_test = *o.n_test;
}

json config_echo(const std::string& experiment, const srfe::ExperimentConfig& cfg, std::size_t default_iterations) {
  json j;
  j["experiment"] = experiment;
  j["seed"] = cfg.seed;
  j["iterations"] = cfg.iterations.value_or(default_iterations);
  j["n_samples"] = cfg.n_samples;
  j["lr"] = cfg.lr;
  if (cfg.taus) j["taus"] = *cfg.taus;
  j["trials"] = cfg.trials;
  j["outlier_weights"] = cfg.outlier_weights;
  j["n_eval"] = cfg.n_eval;
  j["n_entropy"] = cfg.n_entropy;
  j["n_test"] = cfg.n_test;
  j["adam"] = {{"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}};
  return j;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

int run_experiment(int id, srfe::ExperimentConfig cfg, const std::string& config_path, const Overrides& o,
                   const fs::path& out_dir, bool dump_loss, std::optional<std::uint64_t> seed_flag) {
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read config " + config_path);
    apply_json(cfg, json::parse(in));
  }
  apply_overrides(cfg, o);
  if (seed_flag) cfg.seed = *seed_flag;
  cfg.keep_loss_history = dump_loss;

  const std::string name = "exp" + std::to_string(id);
  const auto start = std::chrono::steady_clock::now();
  std::vector<srfe::ResultRow> rows;
  switch (id) {
    case 1: rows = srfe::run_exp1(cfg); break;
    case 2: rows = srfe::run_exp2(cfg); break;
    case 3: rows = srfe::run_exp3(cfg); break;
    case 4: rows = srfe::run_exp4(cfg); break;
    default: throw std::runtime_error("unknown experiment");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  fs::create_directories(out_dir);
  {
    auto os = open_out(out_dir / (name + ".csv"));
    srfe::write_rows_csv(os, rows);
  }
  if (id == 2) {
    auto os = open_out(out_dir / "exp2_aggregate.csv");
    srfe::write_aggregate_csv(os, srfe::aggregate_by_tau(rows));
  }
  if (dump_loss) {
    auto os = open_out(out_dir / ("loss_" + name + ".csv"));
    srfe::write_loss_csv(os, rows);
  }
  {
    auto os = open_out(out_dir / (name + "_config.json"));
    os << config_echo(name, cfg, id == 4 ? 1500 : 2000).dump(2) << '\n';
  }

  std::size_t failed = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failed;
      std::cerr << name << ": " << r.method << ' ' << r.schedule << " failed: " << r.error << '\n';
    }
  }
  std::printf("%s: %zu rows (%zu failed) in %.1f s -> %s\n", name.c_str(), rows.size(), failed, secs,
              (out_dir / (name + ".csv")).string().c_str());
  return 0;
}

const char* relation_name(srfe::Relation r) {
  switch (r) {
    case srfe::Relation::AtMost: return "<=";
    case srfe::Relation::AtLeast: return ">=";
    case srfe::Relation::InRange: return "in";
  }
  return "?";
}

json report_json(const srfe::CheckReport& c) {
  json obs = json::array();
  std::size_t t = 0;
  for (std::size_t i = 0; i < c.observed.size(); ++i) {
    json o{{"label", c.labels[i]}, {"value", c.observed[i]}, {"relation", relation_name(c.relations[i])}};
    if (c.relations[i] == srfe::Relation::InRange) {
      o["threshold"] = {c.threshold[t], c.threshold[t + 1]};
      t += 2;
    } else {
      o["threshold"] = c.threshold[t++];
    }
    obs.push_back(o);
  }
  return {{"name", c.name},
          {"passed", c.passed},
          {"observed", c.observed},
          {"threshold", c.threshold},
          {"observations", obs},
          {"details", c.details}};
}

int run_verify(std::uint64_t seed, const std::string& json_path, const std::string& broken) {
  if (!broken.empty()) {
    const auto names = srfe::suite_check_names();
    if (std::find(names.begin(), names.end(), broken) == names.end()) {
      throw std::runtime_error("no check named '" + broken + "'");
    }
  }
  const auto start = std::chrono::steady_clock::now();
  const srfe::SuiteReport suite = srfe::run_suite(seed, broken);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json arr = json::array();
  for (const auto& c : suite.checks) {
    std::printf("%-30s %s\n", c.name.c_str(), c.passed ? "PASS" : "FAIL");
    if (!c.passed) std::printf("  %s\n", c.details.c_str());
    arr.push_back(report_json(c));
  }
  std::printf("%zu checks, %s, %.2f s\n", suite.checks.size(), suite.all_passed() ? "all passed" : "FAILURES", secs);
  if (json_path == "-") {
    std::cout << arr.dump(2) << '\n';
  } else if (!json_path.empty()) {
    auto os = open_out(json_path);
    os << arr.dump(2) << '\n';
  }
  return suite.all_passed() ? 0 : 1;
}

std::vector<double> parse_list(const std::string& s, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::runtime_error(std::string("bad number in ") + what + ": " + item);
    out.push_back(v);
  }
  if (expected && out.size() != expected) {
    throw std::runtime_error(std::string(what) + " needs " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

int run_density_grid(const std::string& target, const std::string& bounds, std::size_t res, const std::string& mu,
                     const std::string& log_sigma, double weight, const std::string& out_path) {
  const auto b = parse_list(bounds, 4, "--bounds");
  std::function<double(std::span<const double>)> f;
  const srfe::GaussianMixture mix = srfe::three_mode_mixture();
  std::optional<srfe::DiagonalGaussian> model;
  std::optional<srfe::ContaminatedMixture> contaminated;
  if (target == "mixture") {
    f = [&](std::span<const double> x) { return mix.log_prob(x); };
  } else if (target == "model") {
    model.emplace(parse_list(mu, 2, "--mu"), parse_list(log_sigma, 2, "--log-sigma"));
    f = [&](std::span<const double> x) { return model->log_prob(x); };
  } else if (target == "contaminated") {
    contaminated.emplace(srfe::ContaminatedMixture::around(mix, weight));
    f = [&](std::span<const double> x) { return contaminated->log_prob(x); };
  } else {
    throw std::runtime_error("--target must be mixture, model or contaminated");
  }
  const auto grid = srfe::density_grid(f, b[0], b[1], b[2], b[3], res);
  if (out_path.empty() || out_path == "-") {
    srfe::write_grid_csv(std::cout, grid);
  } else {
    auto os = open_out(out_path);
    srfe::write_grid_csv(os, grid);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SRFE variational inference lab"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir = "results";
  std::string config_path;
  bool dump_loss = false;
  Overrides o;
  std::string taus_s, weights_s;

  std::vector<CLI::App*> exps;
  for (int id = 1; id <= 4; ++id) {
    auto* sub = app.add_subcommand("exp" + std::to_string(id), "Run experiment " + std::to_string(id));
    sub->add_option("--seed", seed, "Base seed (trial k uses seed + k)");
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--config", config_path, "JSON config file (flags override it)");
    sub->add_flag("--dump-loss", dump_loss, "Also write per-step loss histories");
    sub->add_option("--iterations", o.iterations, "Optimizer steps");
    sub->add_option("--n-samples", o.n_samples, "Monte-Carlo samples per step");
    sub->add_option("--lr", o.lr, "Adam learning rate");
    sub->add_option("--taus", taus_s, "Comma-separated tau grid");
    sub->add_option("--trials", o.trials, "Trials per tau (exp2)");
    sub->add_option("--outlier-weights", weights_s, "Comma-separated outlier weights (exp4)");
    sub->add_option("--n-eval", o.n_eval, "ESS samples");
    sub->add_option("--n-entropy", o.n_entropy, "Target-entropy samples");
    sub->add_option("--n-test", o.n_test, "Test log-likelihood samples");
    exps.push_back(sub);
  }

  auto* verify = app.add_subcommand("verify", "Run the numerical verification suite");
  std::string json_path;
  std::string broken;
  std::uint64_t verify_seed = 0;
  verify->add_option("--json", json_path, "Write the JSON report here ('-' for stdout)");
  verify->add_option("--seed", verify_seed, "Seed for the randomized checks");
  verify->add_option("--inject-bad-tolerance", broken, "Negative control: make this check's tolerances unsatisfiable");

  auto* grid = app.add_subcommand("density-grid", "Log density on a regular 2-D grid");
  std::string target = "mixture", bounds = "-6,6,-3,7", mu = "0,0", log_sigma = "0,0", grid_out;
  std::size_t res = 101;
  double weight = 0.3;
  grid->add_option("--target", target, "mixture | model | contaminated")->capture_default_str();
  grid->add_option("--bounds", bounds, "x0,x1,y0,y1")->capture_default_str();
  grid->add_option("--res", res, "Points per axis")->capture_default_str();
  grid->add_option("--mu", mu, "Model mean for --target model")->capture_default_str();
  grid->add_option("--log-sigma", log_sigma, "Model log-sigma for --target model")->capture_default_str();
  grid->add_option("--weight", weight, "Outlier weight for --target contaminated")->capture_default_str();
  grid->add_option("--out", grid_out, "Output CSV (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!taus_s.empty()) o.taus = parse_list(taus_s, 0, "--taus");
    if (!weights_s.empty()) o.outlier_weights = parse_list(weights_s, 0, "--outlier-weights");
    for (int id = 1; id <= 4; ++id) {
      if (exps[id - 1]->parsed()) {
        return run_experiment(id, srfe::ExperimentConfig{}, config_path, o, out_dir, dump_loss, seed);
      }
    }
    if (verify->parsed()) return run_verify(verify_seed, json_path, broken);
    if (grid->parsed()) return run_density_grid(target, bounds, res, mu, log_sigma, weight, grid_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
